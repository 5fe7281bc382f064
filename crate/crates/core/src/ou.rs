//! Multidimensional Ornstein-Uhlenbeck machinery.
//!
//! For `dx = -gamma x dt + f dt` with white noise of intensity
//! `<f f^T> = 2 D delta`, the stationary covariance solves the Lyapunov
//! equation `gamma sigma + sigma gamma^T = 2 D`, and `gamma sigma`
//! decomposes into a symmetric part (D when the solve is exact) plus an
//! antisymmetric part Q whose size measures broken detailed balance.
//!
//! This module is the trusted oracle for the learning-dynamics pipeline:
//! an exact dense solver plus a direct Euler-Maruyama simulator.

use crate::error::{Error, Result};
use crate::matrix::{asymmetry, max_abs, Matrix};
use crate::rng_from_seed;
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuSystem {
    /// n x n drift matrix; all eigenvalues must have positive real part.
    #[serde(with = "crate::matrix::serde_rows")]
    pub gamma: Matrix,
    /// n x n symmetric positive-semidefinite diffusion matrix.
    #[serde(with = "crate::matrix::serde_rows")]
    pub diffusion: Matrix,
}

impl OuSystem {
    pub fn new(gamma: Matrix, diffusion: Matrix) -> Result<Self> {
        let sys = OuSystem { gamma, diffusion };
        sys.validate()?;
        Ok(sys)
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.gamma.nrows();
        if self.gamma.ncols() != n {
            return Err(Error::NotSquare {
                rows: n,
                cols: self.gamma.ncols(),
            });
        }
        if self.diffusion.nrows() != n || self.diffusion.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "diffusion is {}x{}, drift is {}x{}",
                self.diffusion.nrows(),
                self.diffusion.ncols(),
                n,
                n
            )));
        }
        if asymmetry(&self.diffusion) > 1e-12 {
            return Err(Error::InvalidInput("diffusion is not symmetric".into()));
        }
        let min_real = self.min_drift_real_part();
        if min_real <= 0.0 {
            return Err(Error::UnstableDrift { min_real });
        }
        Ok(())
    }

    pub fn min_drift_real_part(&self) -> f64 {
        self.gamma
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|e| e.re)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_drift_real_part(&self) -> f64 {
        self.gamma
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Stationary covariance plus its detailed-balance decomposition.
#[derive(Debug, Clone)]
pub struct StationaryResult {
    /// Solution of `gamma sigma + sigma gamma^T = 2 D`, symmetrized.
    pub sigma: Matrix,
    /// Antisymmetric part of `gamma sigma`. Equals `gamma sigma - D` when
    /// the Lyapunov identity holds exactly, but the antisymmetrization is
    /// robust to residual asymmetry.
    pub q_matrix: Matrix,
    /// Symmetric part of `gamma sigma`, reported for cross-checking
    /// against the input diffusion.
    pub sym_matrix: Matrix,
    /// ||gamma sigma + sigma gamma^T - 2D||_F / ||2D||_F.
    pub residual: f64,
}

/// Solve the stationary Lyapunov equation via the Kronecker-vectorized
/// dense linear system `(I (x) gamma + gamma (x) I) vec(sigma) = vec(2D)`.
/// Dense LU is ample at the n <= 64 scale this crate targets.
pub fn solve_lyapunov(system: &OuSystem) -> Result<StationaryResult> {
    system.validate()?;
    let n = system.dim();
    let eye = Matrix::identity(n, n);
    let k = eye.kronecker(&system.gamma) + system.gamma.kronecker(&eye);

    // Column-stacked vec(2D).
    let mut rhs = DVector::zeros(n * n);
    for c in 0..n {
        for r in 0..n {
            rhs[c * n + r] = 2.0 * system.diffusion[(r, c)];
        }
    }
    let lu = k.lu();
    let solution = lu
        .solve(&rhs)
        .ok_or_else(|| Error::IllConditioned("Kronecker system is singular".into()))?;
    let mut sigma = Matrix::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            sigma[(r, c)] = solution[c * n + r];
        }
    }
    sigma = (&sigma + sigma.transpose()) * 0.5;

    let two_d = &system.diffusion * 2.0;
    let lhs = &system.gamma * &sigma + &sigma * system.gamma.transpose();
    let denom = lhs.norm().max(two_d.norm());
    let residual = if denom == 0.0 {
        0.0
    } else {
        (&lhs - &two_d).norm() / two_d.norm().max(f64::MIN_POSITIVE)
    };
    if !residual.is_finite() || residual >= 1e-10 {
        return Err(Error::IllConditioned(format!(
            "Lyapunov residual {residual:.3e} exceeds 1e-10"
        )));
    }

    let gamma_sigma = &system.gamma * &sigma;
    let q_matrix = (&gamma_sigma - gamma_sigma.transpose()) * 0.5;
    let sym_matrix = (&gamma_sigma + gamma_sigma.transpose()) * 0.5;
    Ok(StationaryResult {
        sigma,
        q_matrix,
        sym_matrix,
        residual,
    })
}

/// Factor a symmetric PSD matrix as `L L^T` through its eigendecomposition.
/// Eigenvalues below `-1e-12 * trace` are rejected; small negatives are
/// clamped to zero.
fn psd_factor(d: &Matrix) -> Result<Matrix> {
    let n = d.nrows();
    let eig = d.clone().symmetric_eigen();
    let floor = -1e-12 * d.trace().abs().max(1.0);
    let mut scaled = eig.eigenvectors.clone();
    for i in 0..n {
        let lambda = eig.eigenvalues[i];
        if lambda < floor {
            return Err(Error::NonPsdDiffusion { eig: lambda });
        }
        let root = lambda.max(0.0).sqrt();
        for r in 0..n {
            scaled[(r, i)] *= root;
        }
    }
    Ok(scaled)
}

/// Euler-Maruyama integration `x <- x - gamma x dt + sqrt(2 dt) L xi`
/// with `L L^T = D`; returns the time average of `x x^T` after burn-in.
pub fn simulate_ou(
    system: &OuSystem,
    dt: f64,
    n_steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Matrix> {
    system.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    let max_real = system.max_drift_real_part();
    if dt * max_real >= 0.5 {
        return Err(Error::UnstableDiscretization { dt, max_real });
    }
    if n_steps <= burn_in {
        return Err(Error::InvalidInput(
            "n_steps must exceed burn_in".into(),
        ));
    }
    let n = system.dim();
    let factor = psd_factor(&system.diffusion)?;
    let noise_scale = (2.0 * dt).sqrt();

    let mut rng = rng_from_seed(seed);
    let mut x: DVector<f64> = DVector::zeros(n);
    let mut xi: DVector<f64> = DVector::zeros(n);
    let mut accum = Matrix::zeros(n, n);
    let mut kept = 0usize;

    for step in 0..n_steps {
        for i in 0..n {
            xi[i] = StandardNormal.sample(&mut rng);
        }
        let drift = &system.gamma * &x;
        let kick = &factor * &xi;
        for i in 0..n {
            x[i] += -drift[i] * dt + noise_scale * kick[i];
        }
        if step >= burn_in {
            accum.ger(1.0, &x, &x, 1.0);
            kept += 1;
        }
    }
    Ok(accum / kept as f64)
}

/// Detailed-balance diagnostic: `max|Q| / max|D|` and whether it clears
/// the given tolerance. Q = 0 means the stationary state satisfies
/// detailed balance.
pub fn detailed_balance_check(result: &StationaryResult, tolerance: f64) -> Result<(bool, f64)> {
    let d_max = max_abs(&result.sym_matrix);
    if d_max == 0.0 {
        return Err(Error::ZeroDiffusion);
    }
    let ratio = max_abs(&result.q_matrix) / d_max;
    Ok((ratio < tolerance, ratio))
}

/// Brute-force reference for tests and cross-checks: assemble the
/// n^2 x n^2 system entry by entry from index arithmetic, then solve.
/// Kept separate from [`solve_lyapunov`] so the two routes stay
/// independent.
pub fn lyapunov_kronecker_reference(gamma: &Matrix, diffusion: &Matrix) -> Matrix {
    let n = gamma.nrows();
    let mut system = Matrix::zeros(n * n, n * n);
    // Row (r, c) of the equation gamma sigma + sigma gamma^T = 2 D:
    // sum_k gamma[r][k] sigma[k][c] + sum_k sigma[r][k] gamma[c][k].
    for r in 0..n {
        for c in 0..n {
            let row = r * n + c;
            for k in 0..n {
                system[(row, k * n + c)] += gamma[(r, k)];
                system[(row, r * n + k)] += gamma[(c, k)];
            }
        }
    }
    let mut rhs = DVector::zeros(n * n);
    for r in 0..n {
        for c in 0..n {
            rhs[r * n + c] = 2.0 * diffusion[(r, c)];
        }
    }
    let solution = system.lu().solve(&rhs).expect("reference solve failed");
    Matrix::from_fn(n, n, |r, c| solution[r * n + c])
}

/// Random stable test systems: drift with a guaranteed stability margin,
/// diffusion symmetric positive semidefinite.
pub fn random_stable_system(n: usize, margin: f64, seed: u64) -> OuSystem {
    let mut rng = rng_from_seed(seed);
    let mut draw = |scale: f64| -> f64 {
        let v: f64 = StandardNormal.sample(&mut rng);
        v * scale
    };
    let raw = Matrix::from_fn(n, n, |_, _| draw(1.0 / (n as f64).sqrt()));
    let min_real = raw
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::INFINITY, f64::min);
    let mut gamma = raw;
    let shift = margin - min_real.min(0.0);
    for i in 0..n {
        gamma[(i, i)] += shift;
    }
    let half = Matrix::from_fn(n, n, |_, _| draw(1.0 / (n as f64).sqrt()));
    let mut diffusion = &half * half.transpose();
    for i in 0..n {
        diffusion[(i, i)] += 0.1;
    }
    OuSystem::new(gamma, diffusion).expect("constructed system must be stable")
}
