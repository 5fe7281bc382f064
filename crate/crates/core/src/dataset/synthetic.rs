//! Synthetic Gaussian datasets with a known teacher map, the oracle-friendly
//! test data for the learning pipeline.

use super::{DataSource, LabeledDataset};
use crate::error::{Error, Result};
use crate::matrix::{asymmetry, Matrix};
use nalgebra::{Cholesky, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub n_out: usize,
    pub n_samples: usize,
    /// d x d symmetric positive-definite input covariance.
    #[serde(with = "crate::matrix::serde_rows")]
    pub input_covariance: Matrix,
    /// n_out x d teacher map.
    #[serde(with = "crate::matrix::serde_rows")]
    pub teacher: Matrix,
    pub label_noise_std: f64,
    /// When set, outputs are teacher scores plus noise instead of one-hot
    /// argmax labels.
    #[serde(default)]
    pub continuous_labels: bool,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Identity covariance, zero noise, one-hot labels.
    pub fn isotropic(d: usize, n_out: usize, n_samples: usize, teacher: Matrix, seed: u64) -> Self {
        SyntheticSpec {
            d,
            n_out,
            n_samples,
            input_covariance: Matrix::identity(d, d),
            teacher,
            label_noise_std: 0.0,
            continuous_labels: false,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_covariance.nrows() != self.d || self.input_covariance.ncols() != self.d {
            return Err(Error::ShapeMismatch(format!(
                "input covariance is {}x{}, expected {}x{}",
                self.input_covariance.nrows(),
                self.input_covariance.ncols(),
                self.d,
                self.d
            )));
        }
        if self.teacher.nrows() != self.n_out || self.teacher.ncols() != self.d {
            return Err(Error::ShapeMismatch(format!(
                "teacher is {}x{}, expected {}x{}",
                self.teacher.nrows(),
                self.teacher.ncols(),
                self.n_out,
                self.d
            )));
        }
        if asymmetry(&self.input_covariance) > 1e-12 {
            return Err(Error::NonPositiveDefiniteCovariance);
        }
        if !self.label_noise_std.is_finite() || self.label_noise_std < 0.0 {
            return Err(Error::InvalidInput("label_noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Draw `n_samples` inputs from N(0, input_covariance) and label each with
/// the teacher. Deterministic for a fixed seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let chol = Cholesky::new(spec.input_covariance.clone())
        .ok_or(Error::NonPositiveDefiniteCovariance)?;
    let factor = chol.l();

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut inputs = Matrix::zeros(spec.n_samples, spec.d);
    let mut outputs = Matrix::zeros(spec.n_samples, spec.n_out);
    let mut z = DVector::zeros(spec.d);

    for s in 0..spec.n_samples {
        for i in 0..spec.d {
            z[i] = StandardNormal.sample(&mut rng);
        }
        let x = &factor * &z;
        for i in 0..spec.d {
            inputs[(s, i)] = x[i];
        }
        let mut scores = &spec.teacher * &x;
        for i in 0..spec.n_out {
            let noise: f64 = StandardNormal.sample(&mut rng);
            scores[i] += spec.label_noise_std * noise;
        }
        if spec.continuous_labels {
            for i in 0..spec.n_out {
                outputs[(s, i)] = scores[i];
            }
        } else {
            let argmax = scores.argmax().0;
            outputs[(s, argmax)] = 1.0;
        }
    }

    let pixel_side = {
        let a = (spec.d as f64).sqrt().round() as usize;
        (a * a == spec.d).then_some(a)
    };
    Ok(LabeledDataset {
        inputs,
        outputs,
        pixel_side,
        n_out: spec.n_out,
        source: DataSource::Synthetic,
    })
}
