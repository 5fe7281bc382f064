//! Estimators and checks for the stationary fluctuation-dissipation
//! identity `sigma_xx sigma_WW + sigma_WW sigma_xx = 2 D`.
//!
//! The diffusion estimate is the equal-time correlator of mini-batch
//! sigma_yx fluctuations, known only up to an overall constant; every
//! comparison therefore fits a scalar least-squares factor and reports the
//! residual shape mismatch, which is the pass/fail quantity.

use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::matrix::{max_abs, symmetrize, Matrix};
use crate::moments::{Equilibrium, MomentKind, MomentPair};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaWwCenter {
    /// Center snapshots on the equilibrium map (the identity as written).
    W0,
    /// Center on the empirical snapshot mean; removes the small finite-step
    /// stationary bias away from w0.
    EmpiricalMean,
}

/// Equal-time fluctuation correlator of the sigma_yx snapshots:
/// `d_hat = (1/2) mean_n (sigma_yx_n - sigma_yx)^T (sigma_yx_n - sigma_yx)`
/// with the full-batch sigma_yx as the mean. Symmetric PSD by construction.
pub fn estimate_diffusion(traj: &TrajectoryRecord, full: &MomentPair) -> Result<Matrix> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if full.kind != MomentKind::Full {
        return Err(Error::InvalidInput(
            "estimate_diffusion needs full-batch moments as the mean".into(),
        ));
    }
    let (n_out, d) = full.sigma_yx.shape();
    if traj.n_out() != n_out || traj.dim() != d {
        return Err(Error::ShapeMismatch(format!(
            "trajectory is {}x{}, moments are {n_out}x{d}",
            traj.n_out(),
            traj.dim()
        )));
    }
    let mut accum = Matrix::zeros(d, d);
    let mut delta = Matrix::zeros(n_out, d);
    for snap in &traj.sigma_yx_snapshots {
        delta.copy_from(snap);
        delta -= &full.sigma_yx;
        accum.gemm_tr(1.0, &delta, &delta, 1.0);
    }
    Ok(accum * (0.5 / traj.len() as f64))
}

/// Weight-fluctuation covariance:
/// `sigma_WW = mean_n (w_n - center)^T (w_n - center)`.
pub fn estimate_sigma_ww(
    traj: &TrajectoryRecord,
    eq: &Equilibrium,
    center: SigmaWwCenter,
) -> Result<Matrix> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let (n_out, d) = eq.w0.shape();
    if traj.n_out() != n_out || traj.dim() != d {
        return Err(Error::ShapeMismatch(format!(
            "trajectory is {}x{}, equilibrium is {n_out}x{d}",
            traj.n_out(),
            traj.dim()
        )));
    }
    let center_matrix = match center {
        SigmaWwCenter::W0 => eq.w0.clone(),
        SigmaWwCenter::EmpiricalMean => {
            let mut mean = Matrix::zeros(n_out, d);
            for snap in &traj.w_snapshots {
                mean += snap;
            }
            mean / traj.len() as f64
        }
    };
    let mut accum = Matrix::zeros(d, d);
    let mut delta = Matrix::zeros(n_out, d);
    for snap in &traj.w_snapshots {
        delta.copy_from(snap);
        delta -= &center_matrix;
        accum.gemm_tr(1.0, &delta, &delta, 1.0);
    }
    Ok(accum / traj.len() as f64)
}

/// Outcome of testing the stationary identity on one matrix triple.
#[derive(Debug, Clone)]
pub struct FdtReport {
    /// Estimated diffusion (up to an overall constant), symmetrized.
    pub d_hat: Matrix,
    pub sigma_ww: Matrix,
    /// sigma_xx sigma_WW + sigma_WW sigma_xx, exactly symmetric.
    pub lhs: Matrix,
    /// Least-squares scalar c* fitting lhs ~ c* 2 d_hat.
    pub proportionality: f64,
    /// ||lhs - c* 2 d_hat||_F / ||lhs||_F.
    pub relative_residual: f64,
    /// max|antisymmetric part of sigma_xx sigma_WW| over
    /// max|symmetric part|.
    pub q_ratio: f64,
    /// Integrated autocorrelation time of the snapshot trace statistic,
    /// when estimated from a trajectory.
    pub autocorrelation_time: Option<f64>,
    /// Snapshot count discounted by autocorrelation.
    pub effective_sample_size: Option<f64>,
}

/// Scalar summary of a report, the part serialized into JSON bundles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FdtSummary {
    pub proportionality: f64,
    pub relative_residual: f64,
    pub q_ratio: f64,
    pub autocorrelation_time: Option<f64>,
    pub effective_sample_size: Option<f64>,
}

impl FdtReport {
    pub fn summary(&self) -> FdtSummary {
        FdtSummary {
            proportionality: self.proportionality,
            relative_residual: self.relative_residual,
            q_ratio: self.q_ratio,
            autocorrelation_time: self.autocorrelation_time,
            effective_sample_size: self.effective_sample_size,
        }
    }
}

/// Test `sigma_xx sigma_ww + sigma_ww sigma_xx ~ c* 2 d_hat`.
///
/// Inputs are symmetrized first; the left side is built as `T + T^T` with
/// `T = sigma_xx sigma_ww`, which is symmetric to the bit and equals the
/// two-sided product for symmetric inputs. T's antisymmetric part is the Q
/// diagnostic.
pub fn fdt_check(sigma_xx: &Matrix, sigma_ww: &Matrix, d_hat: &Matrix) -> Result<FdtReport> {
    let d = sigma_xx.nrows();
    if sigma_xx.ncols() != d || sigma_ww.shape() != (d, d) || d_hat.shape() != (d, d) {
        return Err(Error::ShapeMismatch(format!(
            "sigma_xx {}x{}, sigma_ww {}x{}, d_hat {}x{}",
            sigma_xx.nrows(),
            sigma_xx.ncols(),
            sigma_ww.nrows(),
            sigma_ww.ncols(),
            d_hat.nrows(),
            d_hat.ncols()
        )));
    }
    let a = symmetrize(sigma_xx);
    let s = symmetrize(sigma_ww);
    let dh = symmetrize(d_hat);

    let t = &a * &s;
    let t_t = t.transpose();
    let lhs = &t + &t_t;
    let q = (&t - &t_t) * 0.5;
    let sym_part = &lhs * 0.5;

    let two_dhat = &dh * 2.0;
    let dhat_norm_sq = two_dhat.dot(&two_dhat);
    if dhat_norm_sq == 0.0 {
        return Err(Error::ZeroDhat);
    }
    let proportionality = lhs.dot(&two_dhat) / dhat_norm_sq;
    let lhs_norm = lhs.norm();
    let relative_residual = if lhs_norm == 0.0 {
        0.0
    } else {
        (&lhs - &two_dhat * proportionality).norm() / lhs_norm
    };
    let sym_max = max_abs(&sym_part);
    let q_ratio = if sym_max == 0.0 {
        0.0
    } else {
        max_abs(&q) / sym_max
    };

    Ok(FdtReport {
        d_hat: dh,
        sigma_ww: s,
        lhs,
        proportionality,
        relative_residual,
        q_ratio,
        autocorrelation_time: None,
        effective_sample_size: None,
    })
}

/// Full estimator pipeline over one trajectory, including the
/// autocorrelation-corrected sample size.
pub fn analyze_trajectory(
    traj: &TrajectoryRecord,
    full: &MomentPair,
    eq: &Equilibrium,
    center: SigmaWwCenter,
) -> Result<FdtReport> {
    let d_hat = estimate_diffusion(traj, full)?;
    let sigma_ww = estimate_sigma_ww(traj, eq, center)?;
    let mut report = fdt_check(&full.sigma_xx, &sigma_ww, &d_hat)?;
    let (tau, ess) = trajectory_ess(traj, eq);
    report.autocorrelation_time = Some(tau);
    report.effective_sample_size = Some(ess);
    Ok(report)
}

/// Per-output-index refinement: the identity restricted to one pair (i, k)
/// of output rows.
#[derive(Debug, Clone)]
pub struct RefinedFdtReport {
    pub index_pairs: Vec<(usize, usize)>,
    pub per_pair_residual: Vec<f64>,
    pub per_pair_proportionality: Vec<f64>,
    /// d x d diffusion block for each pair.
    pub d_hats: Vec<Matrix>,
    /// d x d weight-covariance block for each pair.
    pub sigma_wws: Vec<Matrix>,
}

/// For each requested pair (i, k), estimate
/// `D_ik[a, b] = <delta_i[a] delta_k[b]> / 2` and
/// `S_ik[a, b] = <v_i[a] v_k[b]>` (v = w - w0 rows), then fit
/// `sigma_xx^T S_ik + S_ik sigma_xx = c* 2 D_ik` per pair.
pub fn refined_fdt_check(
    traj: &TrajectoryRecord,
    full: &MomentPair,
    eq: &Equilibrium,
    pairs: &[(usize, usize)],
) -> Result<RefinedFdtReport> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let n_out = traj.n_out();
    let d = traj.dim();
    for &(i, k) in pairs {
        if i >= n_out || k >= n_out {
            return Err(Error::IndexOutOfRange {
                index: i.max(k),
                n_out,
            });
        }
    }
    if full.sigma_yx.shape() != (n_out, d) || eq.w0.shape() != (n_out, d) {
        return Err(Error::ShapeMismatch(
            "moments/equilibrium shapes do not match trajectory".into(),
        ));
    }

    let n_snap = traj.len();
    let mut d_accum = vec![Matrix::zeros(d, d); pairs.len()];
    let mut s_accum = vec![Matrix::zeros(d, d); pairs.len()];
    // Row-major scratch for the two snapshot deltas of the current step.
    let mut delta_rows = vec![vec![0.0_f64; d]; n_out];
    let mut v_rows = vec![vec![0.0_f64; d]; n_out];

    for n in 0..n_snap {
        let dm = &traj.sigma_yx_snapshots[n];
        let wm = &traj.w_snapshots[n];
        for i in 0..n_out {
            for a in 0..d {
                delta_rows[i][a] = dm[(i, a)] - full.sigma_yx[(i, a)];
                v_rows[i][a] = wm[(i, a)] - eq.w0[(i, a)];
            }
        }
        for (p, &(i, k)) in pairs.iter().enumerate() {
            let (di, dk) = (&delta_rows[i], &delta_rows[k]);
            let (vi, vk) = (&v_rows[i], &v_rows[k]);
            let d_m = &mut d_accum[p];
            let s_m = &mut s_accum[p];
            for a in 0..d {
                let da = di[a];
                let va = vi[a];
                for b in 0..d {
                    d_m[(a, b)] += da * dk[b];
                    s_m[(a, b)] += va * vk[b];
                }
            }
        }
    }

    let a_sym = symmetrize(&full.sigma_xx);
    let mut per_pair_residual = Vec::with_capacity(pairs.len());
    let mut per_pair_proportionality = Vec::with_capacity(pairs.len());
    let mut d_hats = Vec::with_capacity(pairs.len());
    let mut sigma_wws = Vec::with_capacity(pairs.len());
    for p in 0..pairs.len() {
        let d_hat = &d_accum[p] * (0.5 / n_snap as f64);
        let s_ww = &s_accum[p] / n_snap as f64;
        let lhs = a_sym.transpose() * &s_ww + &s_ww * &a_sym;
        let two_dhat = &d_hat * 2.0;
        let denom = two_dhat.dot(&two_dhat);
        let c_star = if denom == 0.0 {
            0.0
        } else {
            lhs.dot(&two_dhat) / denom
        };
        let lhs_norm = lhs.norm();
        let residual = if lhs_norm == 0.0 {
            0.0
        } else {
            (&lhs - &two_dhat * c_star).norm() / lhs_norm
        };
        per_pair_residual.push(residual);
        per_pair_proportionality.push(c_star);
        d_hats.push(d_hat);
        sigma_wws.push(s_ww);
    }

    Ok(RefinedFdtReport {
        index_pairs: pairs.to_vec(),
        per_pair_residual,
        per_pair_proportionality,
        d_hats,
        sigma_wws,
    })
}

/// Integrated autocorrelation time of a scalar series with Sokal's
/// adaptive window, and the matching effective sample size n / (2 tau).
pub fn integrated_autocorrelation(series: &[f64]) -> (f64, f64) {
    let n = series.len();
    if n < 2 {
        return (0.5, n as f64);
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let c0: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
    if c0 == 0.0 {
        return (0.5, nf);
    }
    let mut tau = 0.5;
    let max_lag = n / 4;
    for lag in 1..=max_lag.max(1) {
        if lag >= n {
            break;
        }
        let mut ck = 0.0;
        for t in 0..n - lag {
            ck += (series[t] - mean) * (series[t + lag] - mean);
        }
        ck /= nf;
        tau += ck / c0;
        if (lag as f64) >= 5.0 * tau {
            break;
        }
    }
    let tau = tau.max(0.5);
    (tau, nf / (2.0 * tau))
}

/// Autocorrelation of the trajectory's trace statistic ||w_n - w0||_F^2.
pub fn trajectory_ess(traj: &TrajectoryRecord, eq: &Equilibrium) -> (f64, f64) {
    let series: Vec<f64> = traj
        .w_snapshots
        .iter()
        .map(|w| (w - &eq.w0).norm_squared())
        .collect();
    integrated_autocorrelation(&series)
}
