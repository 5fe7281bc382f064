//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- file / container ----
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("truncated file {path}: needed {needed} bytes, found {found}")]
    TruncatedFile {
        path: String,
        needed: usize,
        found: usize,
    },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("CIFAR file {path}: length {len} is not a multiple of the {record} byte record size")]
    BadRecordSize {
        path: String,
        len: u64,
        record: usize,
    },
    #[error("label {label} out of range (n_out = {n_out})")]
    LabelOutOfRange { label: usize, n_out: usize },
    #[error("container format error: {0}")]
    BadContainer(String),

    // ---- dataset / preprocessing ----
    #[error("crop size {crop} exceeds raw image side {side}")]
    CropTooLarge { crop: usize, side: usize },
    #[error("3-channel images require grayscale conversion (per-channel mode unsupported)")]
    ColorWithoutGrayscale,
    #[error("input covariance is not symmetric positive definite")]
    NonPositiveDefiniteCovariance,
    #[error("dataset is empty")]
    EmptyDataset,

    // ---- moments / equilibrium ----
    #[error("mini-batch size {batch} exceeds dataset size {n}")]
    BatchTooLarge { batch: usize, n: usize },
    #[error("sigma_xx factorization failed even after ridge {ridge:.3e}")]
    SingularAfterRidge { ridge: f64 },

    // ---- dynamics ----
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite update at step {step}")]
    NonFiniteUpdate { step: u64 },
    #[error("no convergence: cos theta {cos_theta:.6} after {steps} steps (threshold {threshold})")]
    NoConvergence {
        steps: u64,
        cos_theta: f64,
        threshold: f64,
    },
    #[error("zero norm in cosine similarity")]
    ZeroNorm,

    // ---- OU oracle ----
    #[error("drift matrix is not stable: eigenvalue with real part {min_real:.6e}")]
    UnstableDrift { min_real: f64 },
    #[error("Lyapunov solve ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("dt {dt} too coarse for drift spectrum (max real part {max_real:.4})")]
    UnstableDiscretization { dt: f64, max_real: f64 },
    #[error("diffusion matrix is not positive semidefinite (eigenvalue {eig:.3e})")]
    NonPsdDiffusion { eig: f64 },
    #[error("diffusion matrix is identically zero")]
    ZeroDiffusion,

    // ---- FDT estimators ----
    #[error("trajectory holds no snapshots")]
    EmptyTrajectory,
    #[error("estimated diffusion matrix is zero")]
    ZeroDhat,
    #[error("output index {index} out of range (n_out = {n_out})")]
    IndexOutOfRange { index: usize, n_out: usize },

    // ---- spectrum ----
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("DC Fourier component is zero; cannot normalize")]
    ZeroDcComponent,

    // ---- cnn ----
    #[error("filter side {filter} exceeds image side {side}")]
    FilterTooLarge { filter: usize, side: usize },

    // ---- cli-facing plumbing ----
    #[error("fingerprint mismatch: artifact was built from {expected}, got {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
