use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad NIfTI magic {0:?}, expected \"n+1\\0\"")]
    BadMagic([u8; 4]),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("truncated NIfTI payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed NIfTI header: {0}")]
    BadHeader(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("label value {0} is outside the alphabet {{0, 1, 2, 4}}")]
    LabelAlphabet(u8),

    #[error("case {case_id}: missing {modality} file")]
    MissingModality { case_id: String, modality: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("case has no nonzero voxel in any modality")]
    EmptyCase,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("epoch {epoch} outside [0, {max})")]
    EpochOutOfRange { epoch: usize, max: usize },

    #[error("{cases} cases cannot be split into {folds} folds")]
    TooFewCases { cases: usize, folds: usize },

    #[error("tumor does not fit inside the brain ellipsoid: {0}")]
    TumorTooLarge(String),

    #[error("training diverged at epoch {epoch}, iteration {iteration}: loss = {loss}")]
    Diverged {
        epoch: usize,
        iteration: usize,
        loss: f64,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("incompatible label space: member {member} predicts {classes} classes")]
    IncompatibleLabelSpace { member: String, classes: usize },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
