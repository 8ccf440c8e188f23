//! Binary PGM (P5, 8-bit) reading and writing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::tensor::Tensor;

use super::DataError;

/// Write a `[h, w]` image in `[0,1]` as an 8-bit P5 file.
pub fn write_pgm(path: &Path, image: &Tensor<f32>) -> Result<(), DataError> {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let mut out = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    write!(out, "P5\n{w} {h}\n255\n").map_err(|e| DataError::io(path, e))?;
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes).map_err(|e| DataError::io(path, e))?;
    out.flush().map_err(|e| DataError::io(path, e))?;
    Ok(())
}

/// Read an 8-bit P5 file into a `[h, w]` image scaled to `[0,1]`.
pub fn read_pgm(path: &Path) -> Result<Tensor<f32>, DataError> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| DataError::io(path, e))?);
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| DataError::io(path, e))?;

    let malformed = |reason: &str| DataError::MalformedPgm {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    // Header: magic, width, height, maxval as whitespace-separated tokens,
    // with '#' comments; then a single whitespace byte before the payload.
    let mut pos = 0usize;
    let mut next_token = |bytes: &[u8]| -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if next_token(&bytes).as_deref() != Some("P5") {
        return Err(malformed("missing P5 magic"));
    }
    let w: usize = next_token(&bytes)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed("bad width"))?;
    let h: usize = next_token(&bytes)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed("bad height"))?;
    let maxval: usize = next_token(&bytes)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed("bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(malformed("only 8-bit maxval (<=255) is supported"));
    }
    pos += 1; // exactly one whitespace byte separates header and payload
    if bytes.len() < pos || bytes.len() - pos < w * h {
        return Err(malformed("truncated payload"));
    }
    let scale = 1.0 / maxval as f32;
    let data: Vec<f32> = bytes[pos..pos + w * h].iter().map(|&b| b as f32 * scale).collect();
    Ok(Tensor::new([h, w], data).expect("payload length checked"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_quantized_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = Tensor::new([2, 3], vec![0.0f32, 0.25, 0.5, 0.75, 1.0, 0.1]).unwrap();
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.shape(), &[2, 3]);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        // Writing the read-back image again is byte-stable.
        let path2 = dir.path().join("img2.pgm");
        write_pgm(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5\n# a comment\n2 1\n255\n\x00\xff").unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.shape(), &[1, 2]);
        assert_eq!(img.data()[1], 1.0);
    }

    #[test]
    fn malformed_files_error() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("bad.pgm");
        std::fs::write(&bad_magic, b"P2\n2 2\n255\n").unwrap();
        assert!(matches!(
            read_pgm(&bad_magic),
            Err(DataError::MalformedPgm { .. })
        ));
        let truncated = dir.path().join("trunc.pgm");
        std::fs::write(&truncated, b"P5\n4 4\n255\nxy").unwrap();
        assert!(matches!(
            read_pgm(&truncated),
            Err(DataError::MalformedPgm { .. })
        ));
        let wide = dir.path().join("wide.pgm");
        std::fs::write(&wide, b"P5\n2 1\n65535\n\x00\x01\x02\x03").unwrap();
        assert!(matches!(read_pgm(&wide), Err(DataError::MalformedPgm { .. })));
    }
}
