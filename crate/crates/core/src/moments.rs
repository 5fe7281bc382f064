//! Full-batch and mini-batch correlation matrices and the equilibrium map.
//!
//! For inputs x and outputs y over a batch,
//! `sigma_xx = mean(x x^T)` and `sigma_yx = mean(y x^T)`; the
//! error-minimizing map is `w0 = sigma_yx (sigma_xx + ridge I)^-1`.

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::{all_finite, asymmetry, Matrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentKind {
    Full,
    Mini,
}

/// A (sigma_xx, sigma_yx) pair tagged with how it was sampled.
#[derive(Debug, Clone)]
pub struct MomentPair {
    /// d x d input-input correlation.
    pub sigma_xx: Matrix,
    /// n_out x d output-input correlation.
    pub sigma_yx: Matrix,
    pub batch_size: usize,
    pub kind: MomentKind,
    /// Sample indices of a mini batch, sorted ascending.
    pub batch_indices: Option<Vec<usize>>,
}

impl MomentPair {
    /// Check the symmetry and positive-semidefiniteness contracts.
    /// Eigenvalue work makes this a test/boundary helper, not a hot-path call.
    pub fn validate(&self) -> Result<()> {
        if asymmetry(&self.sigma_xx) > 1e-10 {
            return Err(Error::InvalidInput("sigma_xx is not symmetric".into()));
        }
        let trace = self.sigma_xx.trace();
        let min_eig = self
            .sigma_xx
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 * trace.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "sigma_xx has negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(())
    }
}

/// `out = a^T b / rows`, accumulated as contiguous column dot products.
/// Both the full-batch and mini-batch paths go through this one routine so
/// the degenerate batch_size == n case is reproducible bit for bit.
fn scaled_gram_into(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    let inv_n = 1.0 / a.nrows() as f64;
    for i in 0..a.ncols() {
        let ca = a.column(i);
        let ca = ca.as_slice();
        for j in 0..b.ncols() {
            let cb = b.column(j);
            let cb = cb.as_slice();
            let mut acc = 0.0;
            for (x, y) in ca.iter().zip(cb) {
                acc += x * y;
            }
            out[(i, j)] = acc * inv_n;
        }
    }
}

/// Same as [`scaled_gram_into`] for a^T a, filling both triangles from one.
fn scaled_gram_symmetric_into(a: &Matrix, out: &mut Matrix) {
    let inv_n = 1.0 / a.nrows() as f64;
    for i in 0..a.ncols() {
        let ca = a.column(i);
        let ca = ca.as_slice();
        for j in i..a.ncols() {
            let cb = a.column(j);
            let cb = cb.as_slice();
            let mut acc = 0.0;
            for (x, y) in ca.iter().zip(cb) {
                acc += x * y;
            }
            let v = acc * inv_n;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
}

/// Dataset-wide moments: `sigma_xx = N^-1 sum x x^T`, `sigma_yx = N^-1 sum y x^T`.
pub fn full_moments(data: &LabeledDataset) -> Result<MomentPair> {
    let n = data.n_samples();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = data.dim();
    let mut sigma_xx = Matrix::zeros(d, d);
    scaled_gram_symmetric_into(&data.inputs, &mut sigma_xx);
    let mut sigma_yx = Matrix::zeros(data.n_out, d);
    scaled_gram_into(&data.outputs, &data.inputs, &mut sigma_yx);
    Ok(MomentPair {
        sigma_xx,
        sigma_yx,
        batch_size: n,
        kind: MomentKind::Full,
        batch_indices: None,
    })
}

/// Reusable buffers for drawing mini batches inside a training loop.
///
/// Indices are drawn without replacement and sorted before the gather, so
/// the degenerate batch_size == n case reproduces [`full_moments`] bit for
/// bit (moments are order-free set statistics, so sorting changes nothing
/// else). The sampler keeps transposed copies of the dataset so each
/// gathered sample is one contiguous memcpy instead of a strided walk over
/// the whole matrix.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    inputs_t: Matrix,
    outputs_t: Matrix,
    x_batch: Matrix,
    y_batch: Matrix,
    indices: Vec<usize>,
    batch_size: usize,
    n_samples: usize,
}

impl BatchSampler {
    pub fn new(data: &LabeledDataset, batch_size: usize) -> Result<Self> {
        let n = data.n_samples();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 || batch_size > n {
            return Err(Error::BatchTooLarge {
                batch: batch_size,
                n,
            });
        }
        Ok(BatchSampler {
            inputs_t: data.inputs.transpose(),
            outputs_t: data.outputs.transpose(),
            x_batch: Matrix::zeros(batch_size, data.dim()),
            y_batch: Matrix::zeros(batch_size, data.n_out),
            indices: Vec::with_capacity(batch_size),
            batch_size,
            n_samples: n,
        })
    }

    /// Draw a fresh batch and gather its rows.
    pub fn draw<R: Rng>(&mut self, rng: &mut R) {
        let n = self.n_samples;
        self.indices.clear();
        self.indices
            .extend(rand::seq::index::sample(rng, n, self.batch_size));
        self.indices.sort_unstable();
        for (row, &idx) in self.indices.iter().enumerate() {
            self.x_batch
                .row_mut(row)
                .tr_copy_from(&self.inputs_t.column(idx));
            self.y_batch
                .row_mut(row)
                .tr_copy_from(&self.outputs_t.column(idx));
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// sigma_yx of the current batch, written into `out` (n_out x d).
    pub fn sigma_yx_into(&self, out: &mut Matrix) {
        out.gemm_tr(1.0 / self.batch_size as f64, &self.y_batch, &self.x_batch, 0.0);
    }

    /// sigma_xx of the current batch, written into `out` (d x d).
    pub fn sigma_xx_into(&self, out: &mut Matrix) {
        out.gemm_tr(1.0 / self.batch_size as f64, &self.x_batch, &self.x_batch, 0.0);
    }

    /// Batch rows as matrices (inputs, outputs), for callers that transform
    /// samples before taking moments.
    pub fn batch(&self) -> (&Matrix, &Matrix) {
        (&self.x_batch, &self.y_batch)
    }
}

/// Moments of one random mini batch, sampled without replacement.
pub fn mini_batch_moments<R: Rng>(
    data: &LabeledDataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<MomentPair> {
    let mut sampler = BatchSampler::new(data, batch_size)?;
    sampler.draw(rng);
    let mut sigma_xx = Matrix::zeros(data.dim(), data.dim());
    let mut sigma_yx = Matrix::zeros(data.n_out, data.dim());
    sampler.sigma_xx_into(&mut sigma_xx);
    sampler.sigma_yx_into(&mut sigma_yx);
    Ok(MomentPair {
        sigma_xx,
        sigma_yx,
        batch_size,
        kind: MomentKind::Mini,
        batch_indices: Some(sampler.indices.clone()),
    })
}

/// The error-minimizing linear map and the conditioning of the solve.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    /// n_out x d solution of w0 (sigma_xx + ridge I) = sigma_yx.
    pub w0: Matrix,
    pub ridge_lambda: f64,
    /// lambda_max / lambda_min of the regularized sigma_xx.
    pub condition_estimate: f64,
}

/// Default ridge: 1e-6 * trace(sigma_xx) / d, small enough to be negligible
/// at data scale while keeping the factorization alive after cropping.
pub fn default_ridge(sigma_xx: &Matrix) -> f64 {
    1e-6 * sigma_xx.trace() / sigma_xx.nrows() as f64
}

/// Solve `w0 = sigma_yx (sigma_xx + ridge I)^-1` through a symmetric
/// positive-definite factorization.
pub fn equilibrium(full: &MomentPair, ridge_lambda: f64) -> Result<Equilibrium> {
    if full.kind != MomentKind::Full {
        return Err(Error::InvalidInput(
            "equilibrium requires full-batch moments".into(),
        ));
    }
    let d = full.sigma_xx.nrows();
    let mut regularized = full.sigma_xx.clone();
    for i in 0..d {
        regularized[(i, i)] += ridge_lambda;
    }
    let eigs = regularized.clone().symmetric_eigenvalues();
    let (min_eig, max_eig) = eigs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let chol = regularized
        .cholesky()
        .ok_or(Error::SingularAfterRidge {
            ridge: ridge_lambda,
        })?;
    let w0 = chol.solve(&full.sigma_yx.transpose()).transpose();
    if !all_finite(&w0) {
        return Err(Error::SingularAfterRidge {
            ridge: ridge_lambda,
        });
    }
    let condition_estimate = if min_eig > 0.0 {
        max_eig / min_eig
    } else {
        f64::INFINITY
    };
    Ok(Equilibrium {
        w0,
        ridge_lambda,
        condition_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, DataSource, SyntheticSpec};
    use crate::matrix::relative_frobenius_diff;
    use crate::rng_from_seed;

    fn dataset_from_rows(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> LabeledDataset {
        let n = inputs.len();
        let d = inputs[0].len();
        let n_out = outputs[0].len();
        LabeledDataset {
            inputs: Matrix::from_fn(n, d, |r, c| inputs[r][c]),
            outputs: Matrix::from_fn(n, n_out, |r, c| outputs[r][c]),
            pixel_side: None,
            n_out,
            source: DataSource::Synthetic,
        }
    }

    fn random_dataset(n: usize, d: usize, n_out: usize, seed: u64) -> LabeledDataset {
        let mut rng = rng_from_seed(seed);
        let inputs = (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let outputs = (0..n)
            .map(|_| {
                let mut row = vec![0.0; n_out];
                row[rng.random_range(0..n_out)] = 1.0;
                row
            })
            .collect();
        dataset_from_rows(inputs, outputs)
    }

    #[test]
    fn single_sample_outer_product() {
        let data = dataset_from_rows(vec![vec![1.0, 0.0]], vec![vec![1.0]]);
        let m = full_moments(&data).unwrap();
        assert_eq!(m.sigma_xx, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(m.sigma_yx, Matrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(m.kind, MomentKind::Full);
    }

    #[test]
    fn zero_inputs_give_zero_moments() {
        let data = dataset_from_rows(
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        );
        let m = full_moments(&data).unwrap();
        assert_eq!(m.sigma_xx, Matrix::zeros(2, 2));
        assert_eq!(m.sigma_yx, Matrix::zeros(2, 2));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let data = LabeledDataset {
            inputs: Matrix::zeros(0, 3),
            outputs: Matrix::zeros(0, 2),
            pixel_side: None,
            n_out: 2,
            source: DataSource::Synthetic,
        };
        assert!(matches!(full_moments(&data), Err(Error::EmptyDataset)));
    }

    #[test]
    fn matches_naive_double_loop() {
        let data = random_dataset(50, 6, 3, 11);
        let m = full_moments(&data).unwrap();
        let n = data.n_samples() as f64;
        // Independent accumulation, one outer product at a time.
        let mut xx = Matrix::zeros(6, 6);
        let mut yx = Matrix::zeros(3, 6);
        for s in 0..data.n_samples() {
            for i in 0..6 {
                for j in 0..6 {
                    xx[(i, j)] += data.inputs[(s, i)] * data.inputs[(s, j)] / n;
                }
                for k in 0..3 {
                    yx[(k, i)] += data.outputs[(s, k)] * data.inputs[(s, i)] / n;
                }
            }
        }
        assert!(relative_frobenius_diff(&m.sigma_xx, &xx) < 1e-12);
        assert!(relative_frobenius_diff(&m.sigma_yx, &yx) < 1e-12);
        m.validate().unwrap();
    }

    #[test]
    fn full_batch_mini_batch_degenerates_bit_exactly() {
        let data = random_dataset(40, 5, 2, 3);
        let full = full_moments(&data).unwrap();
        let mini = mini_batch_moments(&data, 40, &mut rng_from_seed(9)).unwrap();
        assert_eq!(mini.kind, MomentKind::Mini);
        for (a, b) in full.sigma_xx.iter().zip(mini.sigma_xx.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in full.sigma_yx.iter().zip(mini.sigma_yx.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn singleton_batch_is_one_outer_product() {
        let data = random_dataset(10, 4, 2, 5);
        let mini = mini_batch_moments(&data, 1, &mut rng_from_seed(4)).unwrap();
        let idx = mini.batch_indices.as_ref().unwrap()[0];
        for i in 0..4 {
            for j in 0..4 {
                let expect = data.inputs[(idx, i)] * data.inputs[(idx, j)];
                assert!((mini.sigma_xx[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn oversized_batch_is_rejected() {
        let data = random_dataset(10, 4, 2, 5);
        assert!(matches!(
            mini_batch_moments(&data, 11, &mut rng_from_seed(0)),
            Err(Error::BatchTooLarge { batch: 11, n: 10 })
        ));
    }

    #[test]
    fn mini_batch_mean_is_consistent_with_full_batch() {
        let data = random_dataset(200, 4, 2, 21);
        let full = full_moments(&data).unwrap();
        let mut rng = rng_from_seed(77);
        let draws = 10_000;
        let mut mean = Matrix::zeros(2, 4);
        let mut mean_sq = Matrix::zeros(2, 4);
        for _ in 0..draws {
            let m = mini_batch_moments(&data, 20, &mut rng).unwrap();
            mean += &m.sigma_yx;
            mean_sq += m.sigma_yx.map(|v| v * v);
        }
        mean /= draws as f64;
        mean_sq /= draws as f64;
        for i in 0..2 {
            for j in 0..4 {
                let var = (mean_sq[(i, j)] - mean[(i, j)] * mean[(i, j)]).max(0.0);
                let se = (var / draws as f64).sqrt();
                let dev = (mean[(i, j)] - full.sigma_yx[(i, j)]).abs();
                assert!(
                    dev <= 3.0 * se + 1e-12,
                    "entry ({i},{j}) off by {dev:.3e} with se {se:.3e}"
                );
            }
        }
    }

    #[test]
    fn identity_sigma_xx_returns_sigma_yx() {
        let pair = MomentPair {
            sigma_xx: Matrix::identity(3, 3),
            sigma_yx: Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            batch_size: 10,
            kind: MomentKind::Full,
            batch_indices: None,
        };
        let eq = equilibrium(&pair, 0.0).unwrap();
        assert!(relative_frobenius_diff(&eq.w0, &pair.sigma_yx) < 1e-14);
        assert!((eq.condition_estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_teacher_is_recovered() {
        let teacher = Matrix::from_fn(3, 6, |r, c| ((r * 6 + c) as f64 * 0.37).sin());
        let mut spec = SyntheticSpec::isotropic(6, 3, 3_000, teacher.clone(), 13);
        spec.continuous_labels = true;
        let data = generate_synthetic(&spec).unwrap();
        let full = full_moments(&data).unwrap();
        let eq = equilibrium(&full, 0.0).unwrap();
        assert!(relative_frobenius_diff(&eq.w0, &teacher) < 1e-8);
    }

    #[test]
    fn rank_deficient_sigma_xx_without_ridge_fails() {
        let pair = MomentPair {
            sigma_xx: Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            sigma_yx: Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            batch_size: 5,
            kind: MomentKind::Full,
            batch_indices: None,
        };
        assert!(matches!(
            equilibrium(&pair, 0.0),
            Err(Error::SingularAfterRidge { .. })
        ));
        // A ridge rescues the same matrix.
        assert!(equilibrium(&pair, 1e-6).is_ok());
    }

    #[test]
    fn equilibrium_solves_the_normal_equations() {
        let data = random_dataset(120, 5, 3, 31);
        let full = full_moments(&data).unwrap();
        let eq = equilibrium(&full, 0.0).unwrap();
        let residual = relative_frobenius_diff(&(&eq.w0 * &full.sigma_xx), &full.sigma_yx);
        assert!(residual < 1e-8, "normal equation residual {residual:.3e}");
    }

    #[test]
    fn mini_batch_requires_full_kind_for_equilibrium() {
        let data = random_dataset(30, 4, 2, 8);
        let mini = mini_batch_moments(&data, 5, &mut rng_from_seed(2)).unwrap();
        assert!(equilibrium(&mini, 0.0).is_err());
    }
}
