//! Stochastic linear learning dynamics and fluctuation-dissipation
//! diagnostics.
//!
//! The crate simulates SGD on a linear map over real or synthetic datasets,
//! collects steady-state weight and mini-batch-moment fluctuations, and
//! tests the stationary identity
//! `sigma_xx * sigma_WW + sigma_WW * sigma_xx = 2 D` together with its
//! antisymmetric-part diagnostic, a per-output-index refinement, Fourier
//! line cuts of the matrices involved, and a single-filter convolutional
//! extension. An exact Ornstein-Uhlenbeck solver acts as the independent
//! oracle for the whole pipeline.

pub mod container;
pub mod dataset;
pub mod error;
pub mod matrix;
pub mod dynamics;
pub mod fdt;
pub mod moments;
pub mod ou;

pub use error::{Error, Result};
pub use matrix::Matrix;

use rand_chacha::ChaCha12Rng;

/// All stochastic components draw from this generator family so that a
/// 64-bit seed pins every run exactly, independent of platform.
pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    use rand::SeedableRng;
    ChaCha12Rng::seed_from_u64(seed)
}
