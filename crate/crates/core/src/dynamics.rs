//! Discrete SGD recursion on the linear map W with steady-state sampling.
//!
//! Each step draws a fresh mini batch and applies
//! `w <- w (I - eps sigma_xx) + eps sigma_yx`. In `FullXx` mode the
//! dissipative factor uses the full-batch sigma_xx and only sigma_yx
//! fluctuates (the simplified dynamics under which the stationary identity
//! is derived); in `MiniBoth` mode both moments come from the mini batch
//! (the full dynamics actually run in experiments). After cos theta against
//! the equilibrium map crosses the configured threshold, W and mini-batch
//! moment snapshots are collected at a fixed stride.

use crate::container::Container;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::{all_finite, Matrix};
use crate::moments::{equilibrium, full_moments, BatchSampler, Equilibrium, MomentPair};
use crate::rng_from_seed;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsMode {
    /// Full-batch sigma_xx, mini-batch sigma_yx.
    FullXx,
    /// Mini-batch sigma_xx and sigma_yx.
    MiniBoth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgdConfig {
    pub epsilon: f64,
    pub batch_size: usize,
    pub mode: DynamicsMode,
    /// cos theta value that ends the convergence phase.
    pub convergence_threshold: f64,
    pub max_steps: u64,
    /// Number of post-convergence snapshots.
    pub steady_samples: usize,
    /// Steps between consecutive snapshots (1 = every step).
    pub sample_stride: usize,
    pub seed: u64,
    /// Also record mini-batch sigma_xx snapshots in MiniBoth mode. Off by
    /// default: d x d per snapshot dwarfs everything else at image scale.
    #[serde(default)]
    pub record_sigma_xx: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            epsilon: 0.01,
            batch_size: 100,
            mode: DynamicsMode::MiniBoth,
            convergence_threshold: 0.999,
            max_steps: 200_000,
            steady_samples: 30_000,
            sample_stride: 1,
            seed: 0,
            record_sigma_xx: false,
        }
    }
}

impl SgdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        if !(self.convergence_threshold > 0.0 && self.convergence_threshold <= 1.0) {
            return Err(Error::InvalidInput(
                "convergence_threshold must lie in (0, 1]".into(),
            ));
        }
        if self.steady_samples == 0 || self.sample_stride == 0 {
            return Err(Error::InvalidInput(
                "steady_samples and sample_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LearningState {
    pub w: Matrix,
    pub step: u64,
    pub cos_theta: f64,
}

/// One recursion step: `w' = w (I - eps sigma_xx) + eps sigma_yx`.
///
/// Evaluated as `w - eps (w sigma_xx) + eps sigma_yx` with one fused
/// elementwise pass, the exact float semantics shared by every training
/// loop in the crate.
pub fn sgd_step(state: &LearningState, moments: &MomentPair, epsilon: f64) -> Result<LearningState> {
    let (n_out, d) = state.w.shape();
    if moments.sigma_xx.shape() != (d, d) || moments.sigma_yx.shape() != (n_out, d) {
        return Err(Error::ShapeMismatch(format!(
            "w {}x{}, sigma_xx {}x{}, sigma_yx {}x{}",
            n_out,
            d,
            moments.sigma_xx.nrows(),
            moments.sigma_xx.ncols(),
            moments.sigma_yx.nrows(),
            moments.sigma_yx.ncols()
        )));
    }
    let mut w = state.w.clone();
    let mut scratch = Matrix::zeros(n_out, d);
    step_in_place(&mut w, &mut scratch, &moments.sigma_xx, &moments.sigma_yx, epsilon);
    if !all_finite(&w) {
        return Err(Error::NonFiniteUpdate {
            step: state.step + 1,
        });
    }
    Ok(LearningState {
        w,
        step: state.step + 1,
        cos_theta: state.cos_theta,
    })
}

fn step_in_place(
    w: &mut Matrix,
    scratch: &mut Matrix,
    sigma_xx: &Matrix,
    sigma_yx: &Matrix,
    epsilon: f64,
) {
    scratch.gemm(1.0, w, sigma_xx, 0.0);
    let w_slice = w.as_mut_slice();
    let g = scratch.as_slice();
    let s = sigma_yx.as_slice();
    for i in 0..w_slice.len() {
        w_slice[i] = w_slice[i] - epsilon * g[i] + epsilon * s[i];
    }
}

/// Normalized Frobenius inner product between two maps, the convergence
/// metric of the training loop.
pub fn cosine_to_equilibrium(w: &Matrix, w0: &Matrix) -> Result<f64> {
    if w.shape() != w0.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            w.nrows(),
            w.ncols(),
            w0.nrows(),
            w0.ncols()
        )));
    }
    let nw = w.norm();
    let n0 = w0.norm();
    if nw == 0.0 || n0 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((w.dot(w0) / (nw * n0)).clamp(-1.0, 1.0))
}

/// Steady-state ensemble: aligned W and mini-batch moment snapshots.
///
/// `w_snapshots[k]` is the state right before the step driven by
/// `sigma_yx_snapshots[k]` (and `sigma_xx_snapshots[k]` when recorded), so
/// snapshot k corresponds to one recursion step n and the two series share
/// index alignment.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub w_snapshots: Vec<Matrix>,
    pub sigma_yx_snapshots: Vec<Matrix>,
    pub sigma_xx_snapshots: Option<Vec<Matrix>>,
    pub config: SgdConfig,
    /// Step index at which cos theta first crossed the threshold.
    pub converged_at: u64,
    /// (step, cos theta) samples from the convergence phase.
    pub convergence_curve: Vec<(u64, f64)>,
    /// State after the last sampled step, for resuming.
    pub final_w: Matrix,
    pub final_step: u64,
    pub(crate) rng_state: ChaCha12Rng,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.w_snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_snapshots.is_empty()
    }

    pub fn n_out(&self) -> usize {
        self.final_w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.final_w.ncols()
    }
}

struct Runner<'a> {
    config: &'a SgdConfig,
    sampler: BatchSampler,
    rng: ChaCha12Rng,
    w: Matrix,
    scratch: Matrix,
    sigma_yx_mini: Matrix,
    sigma_xx_mini: Matrix,
    full_sigma_xx: &'a Matrix,
    step: u64,
}

impl<'a> Runner<'a> {
    /// Draw a batch and advance one step. Returns the step's mini moments
    /// through the runner's buffers.
    fn advance(&mut self) -> Result<()> {
        self.sampler.draw(&mut self.rng);
        self.sampler.sigma_yx_into(&mut self.sigma_yx_mini);
        let sigma_xx: &Matrix = match self.config.mode {
            DynamicsMode::FullXx => self.full_sigma_xx,
            DynamicsMode::MiniBoth => {
                self.sampler.sigma_xx_into(&mut self.sigma_xx_mini);
                &self.sigma_xx_mini
            }
        };
        step_in_place(
            &mut self.w,
            &mut self.scratch,
            sigma_xx,
            &self.sigma_yx_mini,
            self.config.epsilon,
        );
        self.step += 1;
        if !all_finite(&self.w) {
            return Err(Error::NonFiniteUpdate { step: self.step });
        }
        Ok(())
    }
}

const CURVE_STRIDE: u64 = 100;

/// Iterate the SGD recursion until cos theta reaches the threshold, then
/// collect `steady_samples` aligned (W, mini-moment) snapshots spaced
/// `sample_stride` steps apart. Deterministic for a fixed seed.
pub fn run_to_steady_state(
    data: &LabeledDataset,
    config: &SgdConfig,
    eq: &Equilibrium,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let full = full_moments(data)?;
    run_with_full_moments(data, config, eq, &full)
}

/// Same as [`run_to_steady_state`] for callers that already hold the
/// full-batch moments.
pub fn run_with_full_moments(
    data: &LabeledDataset,
    config: &SgdConfig,
    eq: &Equilibrium,
    full: &MomentPair,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let d = data.dim();
    let n_out = data.n_out;
    if eq.w0.shape() != (n_out, d) {
        return Err(Error::ShapeMismatch(format!(
            "equilibrium w0 is {}x{}, dataset needs {}x{}",
            eq.w0.nrows(),
            eq.w0.ncols(),
            n_out,
            d
        )));
    }

    let mut runner = Runner {
        config,
        sampler: BatchSampler::new(data, config.batch_size)?,
        rng: rng_from_seed(config.seed),
        w: Matrix::zeros(n_out, d),
        scratch: Matrix::zeros(n_out, d),
        sigma_yx_mini: Matrix::zeros(n_out, d),
        sigma_xx_mini: Matrix::zeros(d, d),
        full_sigma_xx: &full.sigma_xx,
        step: 0,
    };

    // Convergence phase. W starts at zero, where cos theta is taken as 0.
    // cos theta alone is scale-blind (for isotropic sigma_xx it hits 1 after
    // a single step while ||W|| is still tiny), so the amplitude ratio
    // ||W|| / ||w0|| must clear the same threshold before sampling starts;
    // otherwise the decaying transient contaminates every steady-state
    // estimator.
    let w0_norm = eq.w0.norm();
    let mut curve = Vec::new();
    let converged_at;
    loop {
        let cos = cosine_to_equilibrium(&runner.w, &eq.w0).unwrap_or(0.0);
        let amplitude = if w0_norm > 0.0 {
            runner.w.norm() / w0_norm
        } else {
            0.0
        };
        if runner.step % CURVE_STRIDE == 0 {
            curve.push((runner.step, cos));
        }
        if cos >= config.convergence_threshold && amplitude >= config.convergence_threshold {
            converged_at = runner.step;
            if curve.last().map(|&(s, _)| s) != Some(runner.step) {
                curve.push((runner.step, cos));
            }
            break;
        }
        if runner.step >= config.max_steps {
            return Err(Error::NoConvergence {
                steps: runner.step,
                cos_theta: cos,
                threshold: config.convergence_threshold,
            });
        }
        runner.advance()?;
    }

    // Sampling phase.
    let record_xx = config.record_sigma_xx && config.mode == DynamicsMode::MiniBoth;
    let mut w_snapshots = Vec::with_capacity(config.steady_samples);
    let mut sigma_yx_snapshots = Vec::with_capacity(config.steady_samples);
    let mut sigma_xx_snapshots = record_xx.then(|| Vec::with_capacity(config.steady_samples));
    collect_samples(
        &mut runner,
        config.steady_samples,
        &mut w_snapshots,
        &mut sigma_yx_snapshots,
        &mut sigma_xx_snapshots,
    )?;

    Ok(TrajectoryRecord {
        w_snapshots,
        sigma_yx_snapshots,
        sigma_xx_snapshots,
        config: config.clone(),
        converged_at,
        convergence_curve: curve,
        final_w: runner.w.clone(),
        final_step: runner.step,
        rng_state: runner.rng.clone(),
    })
}

fn collect_samples(
    runner: &mut Runner,
    samples: usize,
    w_snapshots: &mut Vec<Matrix>,
    sigma_yx_snapshots: &mut Vec<Matrix>,
    sigma_xx_snapshots: &mut Option<Vec<Matrix>>,
) -> Result<()> {
    for _ in 0..samples {
        w_snapshots.push(runner.w.clone());
        runner.advance()?;
        sigma_yx_snapshots.push(runner.sigma_yx_mini.clone());
        if let Some(xx) = sigma_xx_snapshots.as_mut() {
            xx.push(runner.sigma_xx_mini.clone());
        }
        for _ in 1..runner.config.sample_stride {
            runner.advance()?;
        }
    }
    Ok(())
}

/// Continue sampling a persisted trajectory. A run of `a + b` samples and a
/// run of `a` samples extended by `b` produce identical records.
pub fn extend_trajectory(
    data: &LabeledDataset,
    traj: &TrajectoryRecord,
    extra_samples: usize,
) -> Result<TrajectoryRecord> {
    let full = full_moments(data)?;
    let mut out = traj.clone();
    let mut runner = Runner {
        config: &traj.config,
        sampler: BatchSampler::new(data, traj.config.batch_size)?,
        rng: traj.rng_state.clone(),
        w: traj.final_w.clone(),
        scratch: Matrix::zeros(traj.n_out(), traj.dim()),
        sigma_yx_mini: Matrix::zeros(traj.n_out(), traj.dim()),
        sigma_xx_mini: Matrix::zeros(traj.dim(), traj.dim()),
        full_sigma_xx: &full.sigma_xx,
        step: traj.final_step,
    };
    collect_samples(
        &mut runner,
        extra_samples,
        &mut out.w_snapshots,
        &mut out.sigma_yx_snapshots,
        &mut out.sigma_xx_snapshots,
    )?;
    out.final_w = runner.w.clone();
    out.final_step = runner.step;
    out.rng_state = runner.rng.clone();
    Ok(out)
}

/// Run both dynamics modes with the same seed and compare the resulting
/// weight-fluctuation covariances.
#[derive(Debug, Clone)]
pub struct ModeComparison {
    pub sigma_ww_full_xx: Matrix,
    pub sigma_ww_mini_both: Matrix,
    /// ||full - mini||_F / max(||full||_F, ||mini||_F); 0 when both vanish.
    pub relative_difference: f64,
}

pub fn compare_modes(data: &LabeledDataset, config: &SgdConfig) -> Result<ModeComparison> {
    let full = full_moments(data)?;
    let eq = equilibrium(&full, crate::moments::default_ridge(&full.sigma_xx))?;
    let run_mode = |mode: DynamicsMode| -> Result<Matrix> {
        let cfg = SgdConfig {
            mode,
            ..config.clone()
        };
        let traj = run_with_full_moments(data, &cfg, &eq, &full)?;
        crate::fdt::estimate_sigma_ww(&traj, &eq, crate::fdt::SigmaWwCenter::W0)
    };
    let sigma_ww_full_xx = run_mode(DynamicsMode::FullXx)?;
    let sigma_ww_mini_both = run_mode(DynamicsMode::MiniBoth)?;
    let denom = sigma_ww_full_xx.norm().max(sigma_ww_mini_both.norm());
    let relative_difference = if denom == 0.0 {
        0.0
    } else {
        (&sigma_ww_full_xx - &sigma_ww_mini_both).norm() / denom
    };
    Ok(ModeComparison {
        sigma_ww_full_xx,
        sigma_ww_mini_both,
        relative_difference,
    })
}

// ---- persistence ----

fn stack_snapshots(snaps: &[Matrix]) -> Matrix {
    if snaps.is_empty() {
        return Matrix::zeros(0, 0);
    }
    let (r, c) = snaps[0].shape();
    let mut out = Matrix::zeros(snaps.len(), r * c);
    for (k, m) in snaps.iter().enumerate() {
        for i in 0..r {
            for j in 0..c {
                out[(k, i * c + j)] = m[(i, j)];
            }
        }
    }
    out
}

fn unstack_snapshots(stacked: &Matrix, rows: usize, cols: usize) -> Vec<Matrix> {
    (0..stacked.nrows())
        .map(|k| Matrix::from_fn(rows, cols, |i, j| stacked[(k, i * cols + j)]))
        .collect()
}

impl TrajectoryRecord {
    /// Persist to the shared container format. Deterministic content: the
    /// same run writes byte-identical artifacts.
    pub fn to_container(&self, dataset_fingerprint: &str) -> Container {
        let curve = Matrix::from_fn(self.convergence_curve.len(), 2, |r, c| {
            let (step, cos) = self.convergence_curve[r];
            if c == 0 {
                step as f64
            } else {
                cos
            }
        });
        let mut c = Container::new(
            "trajectory",
            json!({
                "config": self.config,
                "converged_at": self.converged_at,
                "final_step": self.final_step,
                "n_out": self.n_out(),
                "d": self.dim(),
                "dataset_fingerprint": dataset_fingerprint,
                "rng_state": serde_json::to_value(&self.rng_state)
                    .expect("rng state serializes"),
            }),
        );
        c.push("w_snapshots", stack_snapshots(&self.w_snapshots));
        c.push("sigma_yx_snapshots", stack_snapshots(&self.sigma_yx_snapshots));
        if let Some(xx) = &self.sigma_xx_snapshots {
            c.push("sigma_xx_snapshots", stack_snapshots(xx));
        }
        c.push("final_w", self.final_w.clone());
        c.push("curve", curve);
        c
    }

    pub fn save(&self, path: &Path, dataset_fingerprint: &str) -> Result<()> {
        self.to_container(dataset_fingerprint).write(path)
    }

    /// Load a trajectory plus the fingerprint of the dataset it was run on.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let c = Container::read(path)?;
        if c.kind != "trajectory" {
            return Err(Error::BadContainer(format!(
                "expected trajectory container, found {:?}",
                c.kind
            )));
        }
        let config: SgdConfig = serde_json::from_value(c.meta["config"].clone())
            .map_err(|e| Error::BadContainer(format!("config: {e}")))?;
        let rng_state: ChaCha12Rng = serde_json::from_value(c.meta["rng_state"].clone())
            .map_err(|e| Error::BadContainer(format!("rng state: {e}")))?;
        let n_out = c.meta["n_out"].as_u64().unwrap_or(0) as usize;
        let d = c.meta["d"].as_u64().unwrap_or(0) as usize;
        let fingerprint = c.meta["dataset_fingerprint"]
            .as_str()
            .unwrap_or_default()
            .to_string();
        let curve_m = c.matrix("curve")?;
        let convergence_curve = (0..curve_m.nrows())
            .map(|r| (curve_m[(r, 0)] as u64, curve_m[(r, 1)]))
            .collect();
        let sigma_xx_snapshots = c
            .matrix("sigma_xx_snapshots")
            .ok()
            .map(|m| unstack_snapshots(m, d, d));
        let record = TrajectoryRecord {
            w_snapshots: unstack_snapshots(c.matrix("w_snapshots")?, n_out, d),
            sigma_yx_snapshots: unstack_snapshots(c.matrix("sigma_yx_snapshots")?, n_out, d),
            sigma_xx_snapshots,
            config,
            converged_at: c.meta["converged_at"].as_u64().unwrap_or(0),
            convergence_curve,
            final_w: c.matrix("final_w")?.clone(),
            final_step: c.meta["final_step"].as_u64().unwrap_or(0),
            rng_state,
        };
        Ok((record, fingerprint))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};
    use crate::matrix::relative_frobenius_diff;
    use crate::moments::MomentKind;
    use rand_distr::{Distribution, StandardNormal};

    fn random_spd(d: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        let half = Matrix::from_fn(d, d, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v / (d as f64).sqrt()
        });
        &half * half.transpose() + Matrix::identity(d, d) * 0.5
    }

    fn full_pair(sigma_xx: Matrix, sigma_yx: Matrix) -> MomentPair {
        MomentPair {
            batch_size: 1,
            kind: MomentKind::Full,
            batch_indices: None,
            sigma_xx,
            sigma_yx,
        }
    }

    fn toy_state(w: Matrix) -> LearningState {
        LearningState {
            w,
            step: 0,
            cos_theta: 0.0,
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let sigma_xx = random_spd(5, 1);
        let w_true = Matrix::from_fn(2, 5, |r, c| ((r + 2 * c) as f64 * 0.3).cos());
        let sigma_yx = &w_true * &sigma_xx;
        let pair = full_pair(sigma_xx, sigma_yx);
        let eq = equilibrium(&pair, 0.0).unwrap();
        let next = sgd_step(&toy_state(eq.w0.clone()), &pair, 0.05).unwrap();
        assert!(relative_frobenius_diff(&next.w, &eq.w0) < 1e-12);
    }

    #[test]
    fn zero_step_size_is_identity() {
        let pair = full_pair(random_spd(4, 2), Matrix::from_element(3, 4, 0.7));
        let w = Matrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64);
        let next = sgd_step(&toy_state(w.clone()), &pair, 0.0).unwrap();
        for (a, b) in w.iter().zip(next.w.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(next.step, 1);
    }

    #[test]
    fn matches_per_element_loop() {
        let sigma_xx = random_spd(4, 3);
        let mut rng = rng_from_seed(4);
        let sigma_yx = Matrix::from_fn(3, 4, |_, _| StandardNormal.sample(&mut rng));
        let w = Matrix::from_fn(3, 4, |_, _| StandardNormal.sample(&mut rng));
        let eps = 0.07;
        let next = sgd_step(&toy_state(w.clone()), &full_pair(sigma_xx.clone(), sigma_yx.clone()), eps)
            .unwrap();
        let mut expect = Matrix::zeros(3, 4);
        for i in 0..3 {
            for j in 0..4 {
                let mut prod = 0.0;
                for k in 0..4 {
                    prod += w[(i, k)] * sigma_xx[(k, j)];
                }
                expect[(i, j)] = w[(i, j)] - eps * prod + eps * sigma_yx[(i, j)];
            }
        }
        assert!(relative_frobenius_diff(&next.w, &expect) < 1e-13);
    }

    #[test]
    fn step_is_affine_in_w() {
        let pair = full_pair(random_spd(4, 5), Matrix::from_element(2, 4, 0.3));
        let mut rng = rng_from_seed(6);
        let wa = Matrix::from_fn(2, 4, |_, _| StandardNormal.sample(&mut rng));
        let wb = Matrix::from_fn(2, 4, |_, _| StandardNormal.sample(&mut rng));
        let eps = 0.02;
        let sum = sgd_step(&toy_state(&wa + &wb), &pair, eps).unwrap().w;
        let base = sgd_step(&toy_state(wb.clone()), &pair, eps).unwrap().w;
        let linear_part = &wa - (&wa * &pair.sigma_xx) * eps;
        assert!(relative_frobenius_diff(&(sum - base), &linear_part) < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let pair = full_pair(random_spd(4, 7), Matrix::zeros(2, 4));
        let state = toy_state(Matrix::zeros(2, 5));
        assert!(matches!(
            sgd_step(&state, &pair, 0.1),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn noiseless_descent_contracts_toward_equilibrium() {
        let sigma_xx = random_spd(5, 9);
        let w_true = Matrix::from_fn(2, 5, |r, c| ((r * 5 + c) as f64).sin());
        let pair = full_pair(sigma_xx.clone(), &w_true * &sigma_xx);
        let eq = equilibrium(&pair, 0.0).unwrap();
        let mut state = toy_state(Matrix::zeros(2, 5));
        let mut prev = (&state.w - &eq.w0).norm();
        for _ in 0..50 {
            state = sgd_step(&state, &pair, 0.1).unwrap();
            let dist = (&state.w - &eq.w0).norm();
            assert!(dist <= prev * (1.0 + 1e-12));
            prev = dist;
        }
    }

    #[test]
    fn cosine_basics() {
        let w0 = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(cosine_to_equilibrium(&w0, &w0).unwrap(), 1.0);
        assert_eq!(cosine_to_equilibrium(&(-&w0), &w0).unwrap(), -1.0);
        assert_eq!(cosine_to_equilibrium(&(&w0 * 2.0), &w0).unwrap(), 1.0);
        assert!(matches!(
            cosine_to_equilibrium(&Matrix::zeros(2, 2), &w0),
            Err(Error::ZeroNorm)
        ));
    }

    fn teacher_dataset(seed: u64) -> (LabeledDataset, Matrix) {
        let teacher = Matrix::from_fn(3, 8, |r, c| ((1 + r * 8 + c) as f64 * 0.7).sin() * 0.8);
        let mut spec = SyntheticSpec::isotropic(8, 3, 2_000, teacher.clone(), seed);
        spec.continuous_labels = true;
        (generate_synthetic(&spec).unwrap(), teacher)
    }

    #[test]
    fn converges_to_noiseless_teacher() {
        let (data, teacher) = teacher_dataset(21);
        let config = SgdConfig {
            epsilon: 0.05,
            batch_size: 50,
            mode: DynamicsMode::MiniBoth,
            convergence_threshold: 0.999,
            max_steps: 50_000,
            steady_samples: 200,
            sample_stride: 1,
            seed: 5,
            record_sigma_xx: false,
        };
        let full = full_moments(&data).unwrap();
        let eq = equilibrium(&full, 0.0).unwrap();
        let traj = run_to_steady_state(&data, &config, &eq).unwrap();
        assert_eq!(traj.len(), 200);
        assert!(traj.converged_at > 0);
        let err = relative_frobenius_diff(&traj.final_w, &teacher);
        assert!(err < 0.05, "distance to teacher {err}");
        // Noiseless continuous labels: interpolation, so cos theta stays up.
        let cos = cosine_to_equilibrium(&traj.final_w, &eq.w0).unwrap();
        assert!(cos >= 0.999);
    }

    #[test]
    fn unstable_step_size_fails_loudly() {
        let (data, _) = teacher_dataset(3);
        // lambda_max of the isotropic sigma_xx is near 1, so epsilon = 3
        // violates the stability bound.
        let config = SgdConfig {
            epsilon: 3.0,
            batch_size: 2_000,
            max_steps: 5_000,
            ..SgdConfig::default()
        };
        let full = full_moments(&data).unwrap();
        let eq = equilibrium(&full, 0.0).unwrap();
        let err = run_to_steady_state(&data, &config, &eq).unwrap_err();
        assert!(matches!(
            err,
            Error::NonFiniteUpdate { .. } | Error::NoConvergence { .. }
        ));
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let (data, _) = teacher_dataset(8);
        let config = SgdConfig {
            epsilon: 0.05,
            batch_size: 40,
            convergence_threshold: 0.99,
            steady_samples: 50,
            sample_stride: 3,
            seed: 1234,
            ..SgdConfig::default()
        };
        let full = full_moments(&data).unwrap();
        let eq = equilibrium(&full, 0.0).unwrap();
        let a = run_to_steady_state(&data, &config, &eq).unwrap();
        let b = run_to_steady_state(&data, &config, &eq).unwrap();
        assert_eq!(a.converged_at, b.converged_at);
        for (ma, mb) in a.w_snapshots.iter().zip(&b.w_snapshots) {
            assert_eq!(ma, mb);
        }
        for (ma, mb) in a.sigma_yx_snapshots.iter().zip(&b.sigma_yx_snapshots) {
            assert_eq!(ma, mb);
        }
    }

    #[test]
    fn extend_matches_longer_run() {
        let (data, _) = teacher_dataset(15);
        let base = SgdConfig {
            epsilon: 0.05,
            batch_size: 40,
            convergence_threshold: 0.99,
            steady_samples: 60,
            sample_stride: 2,
            seed: 77,
            ..SgdConfig::default()
        };
        let full = full_moments(&data).unwrap();
        let eq = equilibrium(&full, 0.0).unwrap();
        let long = run_to_steady_state(&data, &base, &eq).unwrap();
        let short_cfg = SgdConfig {
            steady_samples: 25,
            ..base.clone()
        };
        let short = run_to_steady_state(&data, &short_cfg, &eq).unwrap();
        let extended = extend_trajectory(&data, &short, 35).unwrap();
        assert_eq!(extended.len(), long.len());
        for (a, b) in extended.w_snapshots.iter().zip(&long.w_snapshots) {
            assert_eq!(a, b);
        }
        assert_eq!(extended.final_w, long.final_w);
        assert_eq!(extended.final_step, long.final_step);
    }

    #[test]
    fn trajectory_round_trips_through_container() {
        let (data, _) = teacher_dataset(2);
        let config = SgdConfig {
            epsilon: 0.05,
            batch_size: 30,
            convergence_threshold: 0.99,
            steady_samples: 10,
            seed: 3,
            ..SgdConfig::default()
        };
        let full = full_moments(&data).unwrap();
        let eq = equilibrium(&full, 0.0).unwrap();
        let traj = run_to_steady_state(&data, &config, &eq).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.fdtc");
        traj.save(&path, "fingerprint123").unwrap();
        let (back, fp) = TrajectoryRecord::load(&path).unwrap();
        assert_eq!(fp, "fingerprint123");
        assert_eq!(back.len(), traj.len());
        assert_eq!(back.converged_at, traj.converged_at);
        for (a, b) in traj.w_snapshots.iter().zip(&back.w_snapshots) {
            assert_eq!(a, b);
        }
        // The restored rng state continues exactly like the original.
        let ext_orig = extend_trajectory(&data, &traj, 5).unwrap();
        let ext_back = extend_trajectory(&data, &back, 5).unwrap();
        assert_eq!(ext_orig.final_w, ext_back.final_w);
    }
}
