//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}, row {row}: {message}")]
    ManifestRow {
        path: PathBuf,
        /// 1-based data row number (header not counted).
        row: usize,
        message: String,
    },

    #[error("manifest {path}: duplicate sample_id `{sample_id}` (rows {first_row} and {second_row})")]
    DuplicateSampleId {
        path: PathBuf,
        sample_id: String,
        first_row: usize,
        second_row: usize,
    },

    #[error("manifest {path}: {message}")]
    ManifestFormat { path: PathBuf, message: String },

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error(
        "sample `{sample_id}` has no iris circle annotation; crops require \
         iris_cx/iris_cy/iris_r in the manifest (or a configured iris locator)"
    )]
    MissingIrisCircle { sample_id: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown dataset_id `{0}`")]
    UnknownDataset(String),

    #[error("unknown backbone `{0}`")]
    UnknownBackbone(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("checkpoint {path}: architecture mismatch: {message}")]
    ArchitectureMismatch { path: PathBuf, message: String },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error(
        "manifest fingerprint mismatch: plan was built for `{expected}` but the manifest hashes to `{actual}`"
    )]
    FingerprintMismatch { expected: String, actual: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("synthetic provider cannot serve band {band} class {class_index}: {message}")]
    ProviderShortfall {
        band: &'static str,
        class_index: u8,
        message: String,
    },

    #[error("non-finite prediction for item `{id}`")]
    NonFinitePrediction { id: String },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
