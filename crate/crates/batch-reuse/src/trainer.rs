//! Phase I (paired batch reuse with interpolation and spherical projection),
//! the online and full-batch baselines, and the Phase II ridge solve.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, normalize};
use crate::model::{sample_batch, sample_batch_from, Batch, DataConfig, LinkSpec, ModelError};
use crate::network::NetworkState;
use crate::rng::{self, Purpose};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("weight row {0} collapsed to zero norm after interpolation")]
    ZeroNorm(usize),
    #[error("ridge regression needs at least one sample")]
    EmptyRidge,
    #[error("ridge normal matrix is singular or ill-conditioned (lambda = {lambda})")]
    Conditioning { lambda: f64 },
    #[error("non-finite weights at step {0}")]
    NonFinite(u64),
    #[error("{0}")]
    Schedule(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    #[default]
    Paired,
    Online,
    FullBatch,
}

impl std::str::FromStr for TrainMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paired" | "paired-reuse" | "paired_reuse" => Ok(Self::Paired),
            "online" => Ok(Self::Online),
            "full-batch" | "full_batch" => Ok(Self::FullBatch),
            _ => Err(format!("unknown mode {s:?} (expected paired, online or full-batch)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Full gradient of `(f(x) - y)^2`, neurons interacting through `f`.
    #[default]
    Squared,
    /// Single-neuron update `y act'(<w, x>) x`, neurons independent.
    Correlation,
}

/// Fully resolved training schedule. Rates are given as multiples of `1/d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub mode: TrainMode,
    pub eta_weak: f64,
    pub eta_strong: f64,
    /// Interpolation strength; the weak-phase retention is `1 - xi_weak * d^(-(p*-2)_+/2)`.
    pub xi_weak: f64,
    pub t11: u64,
    pub t12: u64,
    pub t2: u64,
    /// Step count for the online and full-batch modes.
    pub steps: u64,
    /// Size of the single batch in full-batch mode.
    pub full_batch_n: usize,
    pub lambda: f64,
    pub batch_size: usize,
    pub loss: Loss,
    pub c_a: f64,
    pub c_b: f64,
    /// Strong phase keeps both steps and full interpolation instead of one plain step.
    pub strong_phase_xi_one: bool,
}

impl TrainSchedule {
    pub fn rate(c: f64, d: usize) -> f64 {
        c / d as f64
    }

    /// Weak-phase interpolation parameter for dimension `d` and reduced exponent `p_star`.
    pub fn weak_xi(&self, d: usize, p_star: usize) -> f64 {
        let e = (p_star.saturating_sub(2)) as f64 / 2.0;
        1.0 - self.xi_weak * (d as f64).powf(-e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub step: u64,
    pub samples: u64,
    pub overlaps: Vec<f64>,
    pub top_decile: f64,
    pub mean_abs: f64,
}

impl CheckpointStats {
    pub fn new(step: u64, samples: u64, overlaps: Vec<f64>) -> Self {
        let (top_decile, mean_abs) = overlap_summary(&overlaps);
        Self { step, samples, overlaps, top_decile, mean_abs }
    }
}

/// `(mean of the top 10% of |overlap|, mean |overlap|)`.
pub fn overlap_summary(overlaps: &[f64]) -> (f64, f64) {
    if overlaps.is_empty() {
        return (0.0, 0.0);
    }
    let mut abs: Vec<f64> = overlaps.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| b.total_cmp(a));
    let k = abs.len().div_ceil(10);
    let top = abs[..k].iter().sum::<f64>() / k as f64;
    (top, abs.iter().sum::<f64>() / abs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEntry {
    pub threshold: f64,
    pub step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestErrorEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunRecord {
    pub config: serde_json::Value,
    pub seed: u64,
    pub mode: TrainMode,
    pub checkpoints: Vec<CheckpointStats>,
    pub recovery: Vec<RecoveryEntry>,
    pub test_error: Option<TestErrorEstimate>,
    pub wall_clock_s: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RecordLine {
    Header { config: serde_json::Value, seed: u64, mode: TrainMode },
    Checkpoint(CheckpointStats),
    Summary { recovery: Vec<RecoveryEntry>, test_error: Option<TestErrorEstimate>, wall_clock_s: f64 },
}

impl RunRecord {
    /// JSON lines: a header, one object per checkpoint, and a summary.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let mut lines = vec![RecordLine::Header {
            config: self.config.clone(),
            seed: self.seed,
            mode: self.mode,
        }];
        lines.extend(self.checkpoints.iter().cloned().map(RecordLine::Checkpoint));
        lines.push(RecordLine::Summary {
            recovery: self.recovery.clone(),
            test_error: self.test_error.clone(),
            wall_clock_s: self.wall_clock_s,
        });
        crate::io::write_json_lines(out, &lines)
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, String> {
        let mut rec = RunRecord::default();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<RecordLine>(&line).map_err(|e| format!("line {}: {e}", i + 1))? {
                RecordLine::Header { config, seed, mode } => {
                    rec.config = config;
                    rec.seed = seed;
                    rec.mode = mode;
                }
                RecordLine::Checkpoint(c) => rec.checkpoints.push(c),
                RecordLine::Summary { recovery, test_error, wall_clock_s } => {
                    rec.recovery = recovery;
                    rec.test_error = test_error;
                    rec.wall_clock_s = wall_clock_s;
                }
            }
        }
        Ok(rec)
    }
}

/// The target and data stream a run trains against.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub link: &'a LinkSpec,
    pub theta: &'a [f64],
    pub data: DataConfig,
}

/// Resumable snapshot of a Phase I run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub state: NetworkState,
    /// Index of the next pair (or step) to execute.
    pub next_step: u64,
    pub seed: u64,
}

/// Adds `eta * P_u g_j` to every row, where `g_j` is the batch-averaged gradient
/// direction of neuron `j` and `P_u = I - u u^T` projects out the row of `frozen`
/// (the current row when `frozen` is `None`).
pub fn apply_gradient(
    state: &mut NetworkState,
    frozen: Option<&[f64]>,
    batch: &Batch,
    eta: f64,
    loss: Loss,
    c_a: f64,
) {
    let bsz = batch.len();
    if eta == 0.0 || bsz == 0 {
        return;
    }
    let (d, n) = (state.dim, state.width());
    let xt = DMatrixView::from_slice(&batch.inputs, d, bsz);
    let wt = DMatrixView::from_slice(&state.weights, d, n);
    // pre[(b, j)] = <x_b, w_j>
    let mut pre = xt.tr_mul(&wt);
    let scale = eta / bsz as f64;
    match loss {
        Loss::Correlation => {
            for j in 0..n {
                let act = &state.activations[j];
                let bias = state.b[j];
                for b in 0..bsz {
                    pre[(b, j)] = scale * batch.labels[b] * act.deriv(pre[(b, j)] + bias);
                }
            }
        }
        Loss::Squared => {
            let mut resid = batch.labels.clone();
            for j in 0..n {
                let act = &state.activations[j];
                let (aj, bias) = (state.a[j] / n as f64, state.b[j]);
                for (b, r) in resid.iter_mut().enumerate() {
                    *r -= aj * act.eval(pre[(b, j)] + bias);
                }
            }
            for j in 0..n {
                let act = &state.activations[j];
                let (sj, bias) = (scale * state.a[j] / c_a, state.b[j]);
                for b in 0..bsz {
                    pre[(b, j)] = sj * resid[b] * act.deriv(pre[(b, j)] + bias);
                }
            }
        }
    }
    let grad = xt * pre;
    let g = grad.as_slice();
    for j in 0..n {
        let gj = &g[j * d..(j + 1) * d];
        let row = &mut state.weights[j * d..(j + 1) * d];
        match frozen {
            Some(f) => {
                let u = &f[j * d..(j + 1) * d];
                let c = dot(u, gj);
                for k in 0..d {
                    row[k] += gj[k] - c * u[k];
                }
            }
            None => {
                // Project against the row as it was before this update.
                let c = dot(row, gj);
                for k in 0..d {
                    row[k] += gj[k] - c * row[k];
                }
            }
        }
    }
}

/// `w <- (1 - xi) w + xi w_prev` on every row. The convex form makes `xi = 1`
/// reproduce the previous even-step weights exactly and `xi = 0` a no-op.
pub fn interpolate(state: &mut NetworkState, xi: f64) {
    if xi == 0.0 {
        return;
    }
    for (w, p) in state.weights.iter_mut().zip(&state.prev_even) {
        *w = (1.0 - xi) * *w + xi * p;
    }
}

/// Interpolates every row toward the previous even-step weights, renormalizes,
/// and snapshots the result as the new previous even-step weights.
pub fn interpolate_and_normalize(state: &mut NetworkState, xi: Option<f64>) -> Result<(), TrainError> {
    if let Some(xi) = xi {
        interpolate(state, xi);
    }
    let d = state.dim;
    for j in 0..state.width() {
        let n = normalize(&mut state.weights[j * d..(j + 1) * d]);
        if n == 0.0 || !n.is_finite() {
            return Err(TrainError::ZeroNorm(j));
        }
    }
    state.prev_even.copy_from_slice(&state.weights);
    Ok(())
}

/// One interpolation/normalization followed by two gradient steps on the same
/// batch, both projected against the freshly normalized weights. `xi = None`
/// skips interpolation (the very first pair).
pub fn phase1_pair_step(
    state: &mut NetworkState,
    batch: &Batch,
    etas: (f64, f64),
    xi: Option<f64>,
    loss: Loss,
    c_a: f64,
) -> Result<(), TrainError> {
    interpolate_and_normalize(state, xi)?;
    let frozen = state.prev_even.clone();
    apply_gradient(state, Some(&frozen), batch, etas.0, loss, c_a);
    apply_gradient(state, Some(&frozen), batch, etas.1, loss, c_a);
    Ok(())
}

/// Overlaps of the weights a pending interpolation/normalization would produce,
/// without touching the state.
fn settled_overlaps(state: &NetworkState, xi: Option<f64>, theta: &[f64]) -> Vec<f64> {
    let d = state.dim;
    (0..state.width())
        .map(|j| {
            let row = state.row(j);
            let prev = &state.prev_even[j * d..(j + 1) * d];
            let xi = xi.unwrap_or(0.0);
            let (mut num, mut sq) = (0.0, 0.0);
            for k in 0..d {
                let v = (1.0 - xi) * row[k] + xi * prev[k];
                num += v * theta[k];
                sq += v * v;
            }
            num / sq.sqrt()
        })
        .collect()
}

pub fn checkpoint_cadence(total: u64) -> u64 {
    (total / 512).max(1)
}

// Interpolation strength applied after pair `t`, i.e. the one that completes it.
fn xi_after(t: u64, sched: &TrainSchedule, weak_xi: f64) -> f64 {
    if t < sched.t11 {
        weak_xi
    } else if sched.strong_phase_xi_one {
        1.0
    } else {
        0.0
    }
}

/// Paired batch reuse: `t11` weak pairs then `t12` strong pairs, starting at pair
/// `start` (zero for a fresh run). The returned record holds the checkpoints; the
/// state is left interpolated and normalized.
pub fn run_phase1(
    state: &mut NetworkState,
    problem: &Problem,
    sched: &TrainSchedule,
    start: u64,
) -> Result<RunRecord, TrainError> {
    let d = state.dim;
    let total = sched.t11 + sched.t12;
    let weak_xi = sched.weak_xi(d, problem.link.reduced_exponent());
    let (eta_w, eta_s) = (TrainSchedule::rate(sched.eta_weak, d), TrainSchedule::rate(sched.eta_strong, d));
    let cadence = checkpoint_cadence(total);
    let bsz = sched.batch_size.max(1);
    let mut rec = RunRecord { seed: problem.data.seed, mode: TrainMode::Paired, ..Default::default() };
    let pending = |t: u64| if t == 0 { None } else { Some(xi_after(t - 1, sched, weak_xi)) };
    if start == 0 {
        rec.checkpoints.push(CheckpointStats::new(0, 0, state.overlaps(problem.theta)));
    }
    for t in start..total {
        let etas = if t < sched.t11 {
            (eta_w, eta_w)
        } else if sched.strong_phase_xi_one {
            (eta_s, eta_s)
        } else {
            (eta_s, 0.0)
        };
        let batch = sample_batch(problem.link, problem.theta, bsz, &problem.data, t)?;
        phase1_pair_step(state, &batch, etas, pending(t), sched.loss, sched.c_a)?;
        if !state.weights.iter().all(|v| v.is_finite()) {
            return Err(TrainError::NonFinite(t));
        }
        let done = t + 1;
        if done % cadence == 0 || done == total {
            let ov = settled_overlaps(state, pending(done), problem.theta);
            rec.checkpoints.push(CheckpointStats::new(done, done * bsz as u64, ov));
        }
    }
    if total > 0 {
        interpolate_and_normalize(state, pending(total))?;
    }
    Ok(rec)
}

/// Online projected SGD: a fresh batch and a renormalization every step.
pub fn run_online_baseline(
    state: &mut NetworkState,
    problem: &Problem,
    sched: &TrainSchedule,
) -> Result<RunRecord, TrainError> {
    let d = state.dim;
    let eta = TrainSchedule::rate(sched.eta_weak, d);
    let bsz = sched.batch_size.max(1);
    let cadence = checkpoint_cadence(sched.steps);
    let mut rec = RunRecord { seed: problem.data.seed, mode: TrainMode::Online, ..Default::default() };
    rec.checkpoints.push(CheckpointStats::new(0, 0, state.overlaps(problem.theta)));
    for t in 0..sched.steps {
        let batch = sample_batch(problem.link, problem.theta, bsz, &problem.data, t)?;
        apply_gradient(state, None, &batch, eta, sched.loss, sched.c_a);
        interpolate_and_normalize(state, None)?;
        let done = t + 1;
        if done % cadence == 0 || done == sched.steps {
            rec.checkpoints.push(CheckpointStats::new(done, done * bsz as u64, state.overlaps(problem.theta)));
        }
    }
    Ok(rec)
}

/// Projected gradient descent on one fixed batch of `full_batch_n` samples.
pub fn run_full_batch(
    state: &mut NetworkState,
    problem: &Problem,
    sched: &TrainSchedule,
) -> Result<RunRecord, TrainError> {
    let d = state.dim;
    let eta = TrainSchedule::rate(sched.eta_weak, d);
    let n = sched.full_batch_n as u64;
    let batch = sample_batch(problem.link, problem.theta, sched.full_batch_n, &problem.data, 0)?;
    let cadence = checkpoint_cadence(sched.steps);
    let mut rec = RunRecord { seed: problem.data.seed, mode: TrainMode::FullBatch, ..Default::default() };
    rec.checkpoints.push(CheckpointStats::new(0, n, state.overlaps(problem.theta)));
    for t in 0..sched.steps {
        apply_gradient(state, None, &batch, eta, sched.loss, sched.c_a);
        interpolate_and_normalize(state, None)?;
        if !state.weights.iter().all(|v| v.is_finite()) {
            return Err(TrainError::NonFinite(t));
        }
        let done = t + 1;
        if done % cadence == 0 || done == sched.steps {
            rec.checkpoints.push(CheckpointStats::new(done, n, state.overlaps(problem.theta)));
        }
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeOutcome {
    pub a: Vec<f64>,
    pub lambda: f64,
    /// Norm of the gradient of the ridge objective at the solution (up to a factor 2).
    pub stationarity: f64,
    pub train_mse: f64,
}

/// Phase-II samples are drawn in chunks of this size, chunk `i` from counter `i`.
pub const RIDGE_CHUNK: usize = 2048;

/// Features `act_j(<w_j, x> + b_j)` for the rows of `batch`, as a `len x N` matrix.
pub fn feature_matrix(state: &NetworkState, batch: &Batch) -> DMatrix<f64> {
    let xt = DMatrixView::from_slice(&batch.inputs, state.dim, batch.len());
    let wt = DMatrixView::from_slice(&state.weights, state.dim, state.width());
    let mut psi = xt.tr_mul(&wt);
    for j in 0..state.width() {
        let act = &state.activations[j];
        for v in psi.column_mut(j).iter_mut() {
            *v = act.eval(*v + state.b[j]);
        }
    }
    psi
}

/// Minimizer of `(1/T) |Psi a / N - y|^2 + lambda |a|^2` from the accumulated
/// `Psi^T Psi` and `Psi^T y`.
pub fn ridge_from_moments(
    gram: &DMatrix<f64>,
    cross: &DVector<f64>,
    count: usize,
    lambda: f64,
) -> Result<Vec<f64>, TrainError> {
    if count == 0 {
        return Err(TrainError::EmptyRidge);
    }
    let n = gram.nrows() as f64;
    let t = count as f64;
    let mut m = gram / (n * n * t);
    for i in 0..gram.nrows() {
        m[(i, i)] += lambda;
    }
    let rhs = cross / (n * t);
    let chol = m.clone().cholesky().ok_or(TrainError::Conditioning { lambda })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lambda == 0.0 && (lo / hi).powi(2) < 1e-14 {
        return Err(TrainError::Conditioning { lambda });
    }
    let mut a = chol.solve(&rhs);
    // One step of iterative refinement.
    let r = &rhs - &m * &a;
    a += chol.solve(&r);
    Ok(a.iter().copied().collect())
}

/// Samples fresh biases, draws `t2` labeled samples and fits the second layer.
/// The fitted coefficients are written into `state.a`.
pub fn phase2_ridge(
    state: &mut NetworkState,
    problem: &Problem,
    t2: u64,
    lambda: f64,
    c_b: f64,
    seed: u64,
) -> Result<RidgeOutcome, TrainError> {
    if t2 == 0 {
        return Err(TrainError::EmptyRidge);
    }
    state.sample_biases(c_b, seed);
    let n = state.width();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut cross = DVector::<f64>::zeros(n);
    let mut yy = 0.0;
    let mut left = t2 as usize;
    let mut counter = 0u64;
    while left > 0 {
        let m = left.min(RIDGE_CHUNK);
        let r = rng::stream_at(seed, 0, Purpose::Phase2, counter);
        let batch = sample_batch_from(problem.link, problem.theta, m, &problem.data, r)?;
        let psi = feature_matrix(state, &batch);
        gram += psi.tr_mul(&psi);
        let y = DVector::from_column_slice(&batch.labels);
        cross += psi.tr_mul(&y);
        yy += y.norm_squared();
        left -= m;
        counter += 1;
    }
    let a = ridge_from_moments(&gram, &cross, t2 as usize, lambda)?;
    let av = DVector::from_column_slice(&a);
    let (nf, tf) = (n as f64, t2 as f64);
    let grad = (&gram * &av / nf - &cross) / (nf * tf) + &av * lambda;
    // |Psi a / N - y|^2 expanded through the moments.
    let sse = (av.dot(&(&gram * &av)) / (nf * nf) - 2.0 * av.dot(&cross) / nf + yy).max(0.0);
    state.a = a.clone();
    Ok(RidgeOutcome { a, lambda, stationarity: grad.norm(), train_mse: sse / tf })
}

/// Data-driven ridge strength `sqrt(E|psi|^4 / T2) / N^2`, with the fourth
/// moment of the feature vector estimated from a 1024-sample probe.
pub fn auto_lambda(state: &NetworkState, problem: &Problem, t2: u64, seed: u64) -> Result<f64, TrainError> {
    let r = rng::stream_at(seed, 1, Purpose::Phase2, 0);
    let probe = sample_batch_from(problem.link, problem.theta, 1024, &problem.data, r)?;
    let psi = feature_matrix(state, &probe);
    let m4 = psi.row_iter().map(|r| r.norm_squared().powi(2)).sum::<f64>() / 1024.0;
    let n = state.width() as f64;
    Ok((m4 / t2.max(1) as f64).sqrt() / (n * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::HermiteSeries;
    use crate::model::{make_direction, DirectionMode};
    use crate::network::{init_network, ActivationSpec};

    fn setup(n: usize, d: usize) -> (NetworkState, LinkSpec, Vec<f64>, DataConfig) {
        let mut s = init_network(n, d, 1.0, 5).unwrap();
        s.set_activations(vec![ActivationSpec::polynomial(vec![0.1, 0.5, 0.4, 0.3]); n]).unwrap();
        (s, LinkSpec::hermite(3), make_direction(d, DirectionMode::Axis, 0), DataConfig::new(d, 0.0, 1).unwrap())
    }

    #[test]
    fn zero_rate_keeps_unit_rows() {
        let (mut s, link, theta, data) = setup(4, 8);
        let before = s.weights.clone();
        let batch = sample_batch(&link, &theta, 3, &data, 0).unwrap();
        phase1_pair_step(&mut s, &batch, (0.0, 0.0), Some(0.0), Loss::Squared, 1.0).unwrap();
        for (a, b) in s.weights.iter().zip(&before) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn increments_are_orthogonal_to_frozen_rows() {
        let (mut s, link, theta, data) = setup(6, 10);
        let batch = sample_batch(&link, &theta, 4, &data, 0).unwrap();
        interpolate_and_normalize(&mut s, None).unwrap();
        let frozen = s.prev_even.clone();
        for loss in [Loss::Squared, Loss::Correlation] {
            let before = s.weights.clone();
            apply_gradient(&mut s, Some(&frozen), &batch, 0.3, loss, 1.0);
            apply_gradient(&mut s, Some(&frozen), &batch, 0.3, loss, 1.0);
            for j in 0..6 {
                let inc: Vec<f64> = (0..10).map(|k| s.row(j)[k] - before[j * 10 + k]).collect();
                let scale = crate::linalg::norm(&inc).max(1.0);
                assert!(dot(&inc, &frozen[j * 10..(j + 1) * 10]).abs() < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn full_interpolation_restores_previous_rows() {
        let (mut s, link, theta, data) = setup(3, 6);
        let batch = sample_batch(&link, &theta, 2, &data, 0).unwrap();
        phase1_pair_step(&mut s, &batch, (0.5, 0.5), None, Loss::Correlation, 1.0).unwrap();
        let prev = s.prev_even.clone();
        assert_ne!(s.weights, prev);
        interpolate(&mut s, 1.0);
        assert_eq!(s.weights, prev);
    }

    #[test]
    fn correlation_update_matches_formula() {
        let (mut s, link, theta, data) = setup(1, 5);
        let batch = sample_batch(&link, &theta, 1, &data, 3).unwrap();
        interpolate_and_normalize(&mut s, None).unwrap();
        let w = s.row(0).to_vec();
        let x = batch.row(0);
        let v = dot(&w, x);
        let c = 0.2 * batch.labels[0] * s.activations[0].deriv(v);
        apply_gradient(&mut s, None, &batch, 0.2, Loss::Correlation, 1.0);
        for k in 0..5 {
            let expect = w[k] + c * (x[k] - v * w[k]);
            assert!((s.row(0)[k] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_phase_one_records_only_init() {
        let (mut s, link, theta, data) = setup(4, 8);
        let sched = TrainSchedule {
            mode: TrainMode::Paired,
            eta_weak: 1.0,
            eta_strong: 1.0,
            xi_weak: 0.1,
            t11: 0,
            t12: 0,
            t2: 0,
            steps: 0,
            full_batch_n: 1,
            lambda: 0.0,
            batch_size: 1,
            loss: Loss::Squared,
            c_a: 1.0,
            c_b: 1.0,
            strong_phase_xi_one: false,
        };
        let p = Problem { link: &link, theta: &theta, data };
        let rec = run_phase1(&mut s, &p, &sched, 0).unwrap();
        assert_eq!(rec.checkpoints.len(), 1);
        assert_eq!(rec.checkpoints[0].step, 0);
    }

    #[test]
    fn ridge_hand_system() {
        // N = 2 features over T = 3 samples, solved densely by hand.
        let psi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0]);
        let y = DVector::from_column_slice(&[0.3, -0.2, 1.1]);
        let lambda = 0.01;
        let a = ridge_from_moments(&psi.tr_mul(&psi), &psi.tr_mul(&y), 3, lambda).unwrap();
        // (Psi^T Psi / (4*3) + lambda I) a = Psi^T y / (2*3)
        let g = psi.tr_mul(&psi) / 12.0;
        let r = psi.tr_mul(&y) / 6.0;
        let (m00, m01, m11) = (g[(0, 0)] + lambda, g[(0, 1)], g[(1, 1)] + lambda);
        let det = m00 * m11 - m01 * m01;
        let a0 = (m11 * r[0] - m01 * r[1]) / det;
        let a1 = (m00 * r[1] - m01 * r[0]) / det;
        assert!((a[0] - a0).abs() < 1e-10 && (a[1] - a1).abs() < 1e-10);
    }

    #[test]
    fn heavy_shrinkage() {
        let (mut s, link, theta, data) = setup(8, 6);
        let p = Problem { link: &link, theta: &theta, data };
        let out = phase2_ridge(&mut s, &p, 500, 1e6, 2.0, 3).unwrap();
        assert!(out.a.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-3);
        assert!(matches!(phase2_ridge(&mut s, &p, 0, 1.0, 1.0, 3), Err(TrainError::EmptyRidge)));
    }

    #[test]
    fn representable_target_fits_exactly() {
        // Every neuron sits on theta with a cubic activation, so shifted cubics span the link.
        let d = 4;
        let mut s = init_network(6, d, 1.0, 2).unwrap();
        let theta = make_direction(d, DirectionMode::Axis, 0);
        for j in 0..6 {
            s.row_mut(j).copy_from_slice(&theta);
        }
        s.set_activations(vec![ActivationSpec::new(HermiteSeries::basis(3), 0.0); 6]).unwrap();
        let link = LinkSpec::new(HermiteSeries::new(vec![0.0, 0.5, 0.5, 0.7])).unwrap();
        let p = Problem { link: &link, theta: &theta, data: DataConfig::new(d, 0.0, 4).unwrap() };
        let out = phase2_ridge(&mut s, &p, 5000, 1e-12, 3.0, 8).unwrap();
        assert!(out.train_mse <= 1e-8, "mse {}", out.train_mse);
    }

    #[test]
    fn record_round_trip() {
        let rec = RunRecord {
            config: serde_json::json!({"k": 1}),
            seed: 9,
            mode: TrainMode::Online,
            checkpoints: vec![CheckpointStats::new(0, 0, vec![0.1, -0.3])],
            recovery: vec![RecoveryEntry { threshold: 0.5, step: None }],
            test_error: Some(TestErrorEstimate { mean: 0.2, std_error: 0.01, count: 1000 }),
            wall_clock_s: 1.5,
        };
        let mut buf = Vec::new();
        rec.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 3);
        assert_eq!(RunRecord::read_jsonl(&buf[..]).unwrap(), rec);
    }

    #[test]
    fn top_decile_summary() {
        let ov: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let (top, mean) = overlap_summary(&ov);
        assert!((top - 0.925).abs() < 1e-12);
        assert!((mean - 0.475).abs() < 1e-12);
    }
}
