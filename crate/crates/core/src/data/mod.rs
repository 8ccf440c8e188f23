//! Synthetic controllable datasets (glyphs, pulsating-ellipse echo clips),
//! real frame-sequence ingestion, and treatment/quintuplet samplers.

pub mod echo;
pub mod glyph;
pub mod ingest;
pub mod pgm;
pub mod sampling;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use echo::{gen_echo_dataset, render_echo_clip, EchoDataset, EchoError, EchoSample, Split};
pub use glyph::{
    apply_perturbation, gen_morpho_dataset, measure_glyph, GlyphDataset, MorphoSample,
    PerturbKind, Perturbation, GLYPH_Z_LEN, PERTURBATION_VEC_LEN,
};
pub use ingest::{
    frame_of, ingest_video_dir, load_echo_dataset, save_echo_dataset, stack_frames, IngestReport,
    INGEST_FPS, INGEST_FRAMES,
};
pub use pgm::{read_pgm, write_pgm};
pub use sampling::{
    echo_quintuplets_for_split, make_echo_quintuplets, make_glyph_quintuplets,
    sample_cf_treatment, Confounder, Quintuplet, Treatment,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed PGM at {path}: {reason}")]
    MalformedPgm { path: PathBuf, reason: String },
    #[error("missing or invalid metadata.csv at {path} (header must be videoId,ef,fps,split)")]
    MissingMetadata { path: PathBuf },
    #[error("malformed metadata row at {path}:{line}")]
    MalformedMetadata { path: PathBuf, line: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Echo(#[from] EchoError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
