//! Frame-sequence dataset persistence and ingestion.
//!
//! On-disk layout (shared by generated datasets, ingestion and inference
//! outputs, so outputs can be re-ingested):
//!
//! ```text
//! <root>/metadata.csv                  header: videoId,ef,fps,split
//! <root>/<videoId>/frame_0000.pgm
//! <root>/<videoId>/frame_0001.pgm
//! ...
//! ```
//!
//! [`ingest_video_dir`] is the real-data path: clips are greyscale PGM
//! frames at a stated fps; every clip is resampled to 64 frames at 32
//! frames/second by nearest-frame selection and clips shorter than two
//! seconds are discarded (with the reason recorded). [`load_echo_dataset`]
//! reads frames back as stored, for datasets this crate generated itself.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::tensor::Tensor;

use super::echo::{EchoDataset, EchoSample, Split};
use super::pgm::{read_pgm, write_pgm};
use super::DataError;

pub const INGEST_FRAMES: usize = 64;
pub const INGEST_FPS: f64 = 32.0;
pub const MIN_DURATION_SECS: f64 = 2.0;
const METADATA_HEADER: &str = "videoId,ef,fps,split";

/// Write an echo dataset under `root` (frames as stored, fps chosen so the
/// clip spans exactly two seconds).
pub fn save_echo_dataset(root: &Path, dataset: &EchoDataset) -> Result<(), DataError> {
    fs::create_dir_all(root).map_err(|e| DataError::io(root, e))?;
    let fps = dataset.frames as f64 / 2.0;
    let mut csv = String::new();
    let _ = writeln!(csv, "{METADATA_HEADER}");
    for sample in &dataset.samples {
        let dir = root.join(&sample.id);
        fs::create_dir_all(&dir).map_err(|e| DataError::io(&dir, e))?;
        for f in 0..dataset.frames {
            let frame = frame_of(&sample.video, f);
            write_pgm(&dir.join(format!("frame_{f:04}.pgm")), &frame)?;
        }
        let _ = writeln!(csv, "{},{:.6},{},{}", sample.id, sample.ef, fps, sample.split.name());
    }
    fs::write(root.join("metadata.csv"), csv).map_err(|e| DataError::io(root, e))?;
    Ok(())
}

/// One `[s,s]` frame view of a `[f,s,s]` video.
pub fn frame_of(video: &Tensor<f32>, index: usize) -> Tensor<f32> {
    let (h, w) = (video.shape()[1], video.shape()[2]);
    let plane = h * w;
    Tensor::new([h, w], video.data()[index * plane..(index + 1) * plane].to_vec())
        .expect("frame bounds")
}

/// Stack `[s,s]` frames into a `[f,s,s]` video.
pub fn stack_frames(frames: &[Tensor<f32>]) -> Result<Tensor<f32>, DataError> {
    let first = frames.first().ok_or(DataError::EmptyDataset)?;
    let (h, w) = (first.shape()[0], first.shape()[1]);
    let mut data = Vec::with_capacity(frames.len() * h * w);
    for f in frames {
        data.extend_from_slice(f.data());
    }
    Ok(Tensor::new([frames.len(), h, w], data).expect("consistent frames"))
}

struct MetadataRow {
    id: String,
    ef: f64,
    fps: f64,
    split: Split,
}

fn read_metadata(root: &Path) -> Result<Vec<MetadataRow>, DataError> {
    let path = root.join("metadata.csv");
    let text = fs::read_to_string(&path).map_err(|_| DataError::MissingMetadata {
        path: path.clone(),
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != METADATA_HEADER {
        return Err(DataError::MissingMetadata { path });
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        let parse = || -> Option<MetadataRow> {
            if fields.len() != 4 {
                return None;
            }
            Some(MetadataRow {
                id: fields[0].to_string(),
                ef: fields[1].parse().ok()?,
                fps: fields[2].parse().ok()?,
                split: Split::parse(fields[3])?,
            })
        };
        rows.push(parse().ok_or_else(|| DataError::MalformedMetadata {
            path: path.clone(),
            line: lineno + 2,
        })?);
    }
    Ok(rows)
}

fn read_clip_frames(dir: &Path) -> Result<Vec<Tensor<f32>>, DataError> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".pgm"))
        .collect();
    names.sort();
    names.iter().map(|n| read_pgm(&dir.join(n))).collect()
}

/// Read a dataset exactly as stored (no resampling); used for datasets in
/// this crate's own layout.
pub fn load_echo_dataset(root: &Path) -> Result<EchoDataset, DataError> {
    let rows = read_metadata(root)?;
    if rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut samples = Vec::with_capacity(rows.len());
    let mut frames = 0usize;
    let mut size = 0usize;
    for row in rows {
        let clip_frames = read_clip_frames(&root.join(&row.id))?;
        if clip_frames.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        frames = clip_frames.len();
        size = clip_frames[0].shape()[0];
        samples.push(EchoSample {
            id: row.id,
            video: stack_frames(&clip_frames)?,
            ef: row.ef,
            anatomy_seed: 0,
            heart_rate: 0,
            split: row.split,
        });
    }
    Ok(EchoDataset {
        frames,
        size,
        samples,
    })
}

/// Outcome of ingesting a real frame-sequence directory.
#[derive(Debug)]
pub struct IngestReport {
    pub dataset: EchoDataset,
    /// `(videoId, reason)` for every discarded clip.
    pub discarded: Vec<(String, String)>,
}

/// Ingest a directory of per-video PGM frame folders plus `metadata.csv`.
///
/// Clips shorter than two seconds are discarded. Survivors are resampled to
/// 64 frames at 32 fps by nearest-frame selection (no invented pixels).
pub fn ingest_video_dir(root: &Path) -> Result<IngestReport, DataError> {
    let rows = read_metadata(root)?;
    let mut samples = Vec::new();
    let mut discarded = Vec::new();
    let mut size = 0usize;
    for row in rows {
        let clip_frames = read_clip_frames(&root.join(&row.id))?;
        let duration = clip_frames.len() as f64 / row.fps;
        if duration < MIN_DURATION_SECS {
            discarded.push((
                row.id,
                format!("too short: {duration:.3}s < {MIN_DURATION_SECS}s"),
            ));
            continue;
        }
        let resampled: Vec<Tensor<f32>> = (0..INGEST_FRAMES)
            .map(|i| {
                let t = i as f64 / INGEST_FPS;
                let src = ((t * row.fps).round() as usize).min(clip_frames.len() - 1);
                clip_frames[src].clone()
            })
            .collect();
        size = resampled[0].shape()[0];
        samples.push(EchoSample {
            id: row.id,
            video: stack_frames(&resampled)?,
            ef: row.ef,
            anatomy_seed: 0,
            heart_rate: 0,
            split: row.split,
        });
    }
    if samples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(IngestReport {
        dataset: EchoDataset {
            frames: INGEST_FRAMES,
            size,
            samples,
        },
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::echo::gen_echo_dataset;

    fn write_clip(root: &Path, id: &str, frames: usize, value: f32) {
        let dir = root.join(id);
        fs::create_dir_all(&dir).unwrap();
        for f in 0..frames {
            let img = Tensor::full([8, 8], value);
            write_pgm(&dir.join(format!("frame_{f:04}.pgm")), &img).unwrap();
        }
    }

    #[test]
    fn save_load_roundtrip_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_echo_dataset(3, 8, 16, 21).unwrap();
        save_echo_dataset(dir.path(), &ds).unwrap();
        let a = load_echo_dataset(dir.path()).unwrap();
        let b = load_echo_dataset(dir.path()).unwrap();
        assert_eq!(a.samples.len(), 3);
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa.video.data(), sb.video.data());
        }
        // quantization to 8 bits means stored != generated, but within 1/510
        for (orig, back) in ds.samples.iter().zip(&a.samples) {
            assert_eq!(orig.split, back.split);
            assert!((orig.ef - back.ef).abs() < 1e-6);
            for (x, y) in orig.video.data().iter().zip(back.video.data()) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }

    #[test]
    fn short_videos_are_discarded() {
        let dir = tempfile::tempdir().unwrap();
        // 45 frames at 30 fps = 1.5 s -> discarded
        write_clip(dir.path(), "short", 45, 0.5);
        // 128 frames at 32 fps = 4 s -> kept, resampled to 64 frames
        write_clip(dir.path(), "long", 128, 0.25);
        fs::write(
            dir.path().join("metadata.csv"),
            "videoId,ef,fps,split\nshort,0.5,30,train\nlong,0.6,32,test\n",
        )
        .unwrap();
        let report = ingest_video_dir(dir.path()).unwrap();
        assert_eq!(report.discarded.len(), 1);
        assert_eq!(report.discarded[0].0, "short");
        assert_eq!(report.dataset.samples.len(), 1);
        assert_eq!(report.dataset.samples[0].video.shape()[0], 64);
        assert_eq!(report.dataset.samples[0].split, Split::Test);
    }

    #[test]
    fn exactly_two_seconds_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        write_clip(dir.path(), "edge", 60, 0.5); // 60 @ 30fps = 2.0 s
        fs::write(
            dir.path().join("metadata.csv"),
            "videoId,ef,fps,split\nedge,0.4,30,train\n",
        )
        .unwrap();
        let report = ingest_video_dir(dir.path()).unwrap();
        assert!(report.discarded.is_empty());
        assert_eq!(report.dataset.samples[0].video.shape()[0], 64);
    }

    #[test]
    fn missing_or_bad_metadata_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ingest_video_dir(dir.path()),
            Err(DataError::MissingMetadata { .. })
        ));
        fs::write(dir.path().join("metadata.csv"), "videoId,ef\n").unwrap();
        assert!(matches!(
            ingest_video_dir(dir.path()),
            Err(DataError::MissingMetadata { .. })
        ));
        fs::write(
            dir.path().join("metadata.csv"),
            "videoId,ef,fps,split\nx,notanumber,30,train\n",
        )
        .unwrap();
        assert!(matches!(
            ingest_video_dir(dir.path()),
            Err(DataError::MalformedMetadata { .. })
        ));
    }

    #[test]
    fn all_discarded_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        write_clip(dir.path(), "tiny", 10, 0.5);
        fs::write(
            dir.path().join("metadata.csv"),
            "videoId,ef,fps,split\ntiny,0.5,30,train\n",
        )
        .unwrap();
        assert!(matches!(
            ingest_video_dir(dir.path()),
            Err(DataError::EmptyDataset)
        ));
    }
}
