//! Named-parameter checkpoint archive.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic   b"DTGN"
//! version u32                    (currently 1)
//! count   u32                    number of tensor entries
//! entry*  name_len u16, name bytes (UTF-8),
//!         rank u8, dims u32 * rank,
//!         payload f32 * prod(dims)
//! trailer len u32, JSON bytes    (architecture + training metadata)
//! ```
//!
//! Round-trips are bit-exact: entries keep their order and payloads are the
//! raw `f32` bits. The JSON trailer uses sorted keys, so identical metadata
//! serializes to identical bytes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{Param, Tensor};

pub const MAGIC: &[u8; 4] = b"DTGN";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected \"DTGN\"")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint has no entry named `{0}`")]
    MissingEntry(String),
    #[error("entry `{name}` has shape {found:?}, expected {expected:?}")]
    EntryShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
}

/// An ordered named-tensor archive with a JSON metadata trailer.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub entries: Vec<(String, Tensor<f32>)>,
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self {
            entries: Vec::new(),
            metadata,
        }
    }

    /// Snapshot parameters in their listed order (converted to `f32`).
    pub fn from_params<T: Scalar>(params: &[&Param<T>], metadata: serde_json::Value) -> Self {
        let entries = params
            .iter()
            .map(|p| {
                let data: Vec<f32> = p.value.data().iter().map(|&v| v.as_f32()).collect();
                (
                    p.name().to_string(),
                    Tensor::new(p.value.shape().to_vec(), data).expect("shape preserved"),
                )
            })
            .collect();
        Self { entries, metadata }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Restore parameter values by name. Every parameter must be present
    /// with a matching shape.
    pub fn load_into<T: Scalar>(&self, params: &mut [&mut Param<T>]) -> Result<(), CheckpointError> {
        for p in params.iter_mut() {
            let src = self
                .get(p.name())
                .ok_or_else(|| CheckpointError::MissingEntry(p.name().to_string()))?;
            if src.shape() != p.value.shape() {
                return Err(CheckpointError::EntryShapeMismatch {
                    name: p.name().to_string(),
                    found: src.shape().to_vec(),
                    expected: p.value.shape().to_vec(),
                });
            }
            p.value = src.cast::<T>();
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, tensor) in &self.entries {
            let name_bytes = name.as_bytes();
            w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
            w.write_all(name_bytes)?;
            let shape = tensor.shape();
            w.write_all(&[shape.len() as u8])?;
            for &d in shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let meta = serde_json::to_vec(&self.metadata).expect("serializable metadata");
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = read_u32(r)? as usize;
        let mut entries = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = read_u16(r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| CheckpointError::Corrupt("entry name is not UTF-8".into()))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                shape.push(read_u32(r)? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut payload = vec![0u8; numel * 4];
            r.read_exact(&mut payload)?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let tensor = Tensor::new(shape, data)
                .map_err(|e| CheckpointError::Corrupt(format!("entry `{name}`: {e}")))?;
            entries.push((name, tensor));
        }
        let meta_len = read_u32(r)? as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        r.read_exact(&mut meta_bytes)?;
        let metadata = serde_json::from_slice(&meta_bytes)
            .map_err(|e| CheckpointError::Corrupt(format!("metadata trailer: {e}")))?;
        Ok(Self { entries, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn read_u16(r: &mut impl Read) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new(json!({"arch": "test", "epoch": 3}));
        ck.entries.push((
            "layer.weight".into(),
            Tensor::new([2, 3], vec![1.5f32, -0.25, 3.125e-7, 0.0, -1.0, 42.0]).unwrap(),
        ));
        ck.entries
            .push(("layer.bias".into(), Tensor::new([3], vec![0.1, 0.2, 0.3]).unwrap()));
        ck
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.metadata, ck.metadata);
        let w = back.get("layer.weight").unwrap();
        assert_eq!(w.shape(), &[2, 3]);
        assert_eq!(
            w.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            ck.get("layer.weight")
                .unwrap()
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[0..4], b"DTGN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        // first entry: name length, then the name itself, then rank
        assert_eq!(u16::from_le_bytes(bytes[12..14].try_into().unwrap()), 12);
        assert_eq!(&bytes[14..26], b"layer.weight");
        assert_eq!(bytes[26], 2);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::read_from(&mut bytes.as_slice()),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn load_into_checks_shapes() {
        let ck = sample();
        let mut p = Param::new("layer.weight", Tensor::<f32>::zeros([2, 3]));
        ck.load_into(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data()[5], 42.0);

        let mut wrong = Param::new("layer.weight", Tensor::<f32>::zeros([3, 2]));
        assert!(matches!(
            ck.load_into(&mut [&mut wrong]),
            Err(CheckpointError::EntryShapeMismatch { .. })
        ));
        let mut missing = Param::new("nope", Tensor::<f32>::zeros([1]));
        assert!(matches!(
            ck.load_into(&mut [&mut missing]),
            Err(CheckpointError::MissingEntry(_))
        ));
    }
}
