//! End-to-end runs, sweeps over `(d, n)` grids, recovery times, scaling fits,
//! test error, heatmap tables and run manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::io::{fmt_f64, to_json_string};
use crate::model::{make_direction, sample_batch_from, DataConfig, LinkSpec};
use crate::network::{init_network, NetworkError, NetworkState};
use crate::rng::{self, Purpose};
use crate::trainer::{
    auto_lambda, feature_matrix, phase2_ridge, run_full_batch, run_online_baseline, run_phase1, Problem,
    RecoveryEntry, RunRecord, TestErrorEstimate, TrainError, TrainMode,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("scaling fit needs at least 3 finite points, got {0}")]
    TooFewPoints(usize),
    #[error("test error needs at least 1000 samples, got {0}")]
    TestSamples(usize),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const TEST_CHUNK: usize = 4096;

/// Monte-Carlo `E[(f(x) - link(<x, theta>))^2]` on fresh noise-free inputs.
pub fn test_error(
    state: &NetworkState,
    link: &LinkSpec,
    theta: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<TestErrorEstimate, ExperimentError> {
    if n_mc < 1000 {
        return Err(ExperimentError::TestSamples(n_mc));
    }
    let data = DataConfig::new(state.dim, 0.0, seed).map_err(TrainError::from)?;
    let a = DVector::from_column_slice(&state.a) / state.width() as f64;
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut left = n_mc;
    let mut counter = 0;
    while left > 0 {
        let m = left.min(TEST_CHUNK);
        let r = rng::stream_at(seed, 0, Purpose::Test, counter);
        let batch = sample_batch_from(link, theta, m, &data, r).map_err(TrainError::from)?;
        let pred = feature_matrix(state, &batch) * &a;
        for (p, y) in pred.iter().zip(&batch.labels) {
            let e = (p - y).powi(2);
            sum += e;
            sq += e * e;
        }
        left -= m;
        counter += 1;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(TestErrorEstimate { mean, std_error: (var / n).sqrt(), count: n_mc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapStatistic {
    /// Mean of the top 10% of `|overlap|`.
    TopDecile,
    /// Largest single `|overlap|`.
    PerNeuronFirst,
}

/// First checkpoint index at which the statistic reaches `threshold`.
pub fn recovery_time(record: &RunRecord, threshold: f64, statistic: OverlapStatistic) -> Option<usize> {
    record.checkpoints.iter().position(|c| {
        let v = match statistic {
            OverlapStatistic::TopDecile => c.top_decile,
            OverlapStatistic::PerNeuronFirst => c.overlaps.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        };
        v >= threshold
    })
}

/// Step (pair or iteration) at which the top-decile statistic reaches `threshold`.
pub fn recovery_step(record: &RunRecord, threshold: f64) -> Option<u64> {
    recovery_time(record, threshold, OverlapStatistic::TopDecile).map(|i| record.checkpoints[i].step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(ln d, ln tau)`; non-finite or non-positive times are skipped.
pub fn fit_scaling(taus: &BTreeMap<usize, f64>) -> Result<ScalingFit, ExperimentError> {
    let pts: Vec<(f64, f64)> = taus
        .iter()
        .filter(|(_, t)| t.is_finite() && **t > 0.0)
        .map(|(&d, &t)| ((d as f64).ln(), t.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(ExperimentError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ScalingFit { slope, intercept: my - slope * mx, r2 })
}

/// A finished run: its record and the trained network.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub state: NetworkState,
    pub link: LinkSpec,
    pub theta: Vec<f64>,
}

/// Builds the network, trains it in the configured mode, fits the second layer
/// when `t2 > 0` and estimates the test error. `cfg` must be resolved.
pub fn run_single(cfg: &Config, seed: u64) -> Result<RunOutcome, ExperimentError> {
    let start = Instant::now();
    let link = cfg.link()?;
    let d = cfg.model.dim;
    let theta = make_direction(d, cfg.model.direction, seed);
    let data = DataConfig::new(d, cfg.model.noise_std, seed).map_err(ConfigError::from)?;
    let c_a = cfg.network.c_a.unwrap_or(1.0);
    let mut state = init_network(cfg.network.width, d, c_a, seed)?;
    let family = cfg.network.family.as_ref().ok_or_else(|| ExperimentError::Grid("config is not resolved".into()))?;
    state.sample_activations(link.degree().max(1), family, seed)?;
    let problem = Problem { link: &link, theta: &theta, data };
    let sched = cfg.schedule(cfg.trainer.lambda.unwrap_or(0.0));
    let mut record = match sched.mode {
        TrainMode::Paired => run_phase1(&mut state, &problem, &sched, 0)?,
        TrainMode::Online => run_online_baseline(&mut state, &problem, &sched)?,
        TrainMode::FullBatch => run_full_batch(&mut state, &problem, &sched)?,
    };
    record.recovery = cfg
        .trainer
        .thresholds
        .iter()
        .map(|&threshold| RecoveryEntry { threshold, step: recovery_step(&record, threshold) })
        .collect();
    let mut echoed = cfg.clone();
    if sched.t2 > 0 {
        let lambda = match cfg.trainer.lambda {
            Some(l) => l,
            None => auto_lambda(&state, &problem, sched.t2, seed)?,
        };
        echoed.trainer.lambda = Some(lambda);
        phase2_ridge(&mut state, &problem, sched.t2, lambda, sched.c_b, seed)?;
        record.test_error = Some(test_error(&state, &link, &theta, cfg.trainer.test_samples, seed)?);
    }
    echoed.cli.seed = seed;
    record.config = serde_json::to_value(&echoed).expect("config serializes");
    record.seed = seed;
    record.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(RunOutcome { record, state, link, theta })
}

/// Grid of dimensions and sample budgets sharing one configuration template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub dims: Vec<usize>,
    /// Total distinct samples per run; multiples of `d` when `per_dim` is set.
    pub budgets: Vec<f64>,
    pub per_dim: bool,
    pub seeds: u64,
    pub base_seed: u64,
    pub mode: TrainMode,
    pub template: Config,
}

impl SweepGrid {
    pub fn from_config(cfg: &Config) -> Self {
        let e = &cfg.experiments;
        Self {
            dims: e.dims.clone(),
            budgets: e.budgets.clone(),
            per_dim: e.budget_per_dim,
            seeds: e.seeds,
            base_seed: cfg.cli.seed,
            mode: cfg.trainer.mode,
            template: cfg.clone(),
        }
    }

    pub fn budget(&self, d: usize, b: f64) -> u64 {
        if self.per_dim {
            (b * d as f64).round() as u64
        } else {
            b.round() as u64
        }
    }

    /// Seed of repetition `rep`; shared across cells so cells differ only in `(d, n)`.
    pub fn seed(&self, rep: u64) -> u64 {
        self.base_seed.wrapping_add(rep)
    }

    pub fn cell_config(&self, d: usize, n: u64) -> Result<Config, ConfigError> {
        let mut c = self.template.clone();
        c.model.dim = d;
        c.trainer.mode = self.mode;
        c.trainer.sample_budget = Some(n);
        c.resolved()
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.dims.is_empty() || self.budgets.is_empty() || self.seeds == 0 {
            return Err(ExperimentError::Grid("need at least one dimension, budget and seed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub d: usize,
    pub n: u64,
    pub rep: u64,
    pub seed: u64,
    pub result: Result<RunRecord, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub d: usize,
    pub n: u64,
    pub stat: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cells: Vec<CellRun>,
    pub heatmap: Vec<HeatmapRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (m, s)
}

/// Runs every `(d, n, seed)` job on a pool of `parallelism` workers and
/// averages per cell. Failed runs are recorded and excluded from the averages.
pub fn run_sweep(grid: &SweepGrid, parallelism: usize) -> Result<SweepOutcome, ExperimentError> {
    grid.validate()?;
    let mut jobs = Vec::new();
    for &d in &grid.dims {
        for &b in &grid.budgets {
            let n = grid.budget(d, b);
            for rep in 0..grid.seeds {
                jobs.push((d, n, rep));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ExperimentError::Grid(e.to_string()))?;
    let cells: Vec<CellRun> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, n, rep)| {
                let seed = grid.seed(rep);
                let result = grid
                    .cell_config(d, n)
                    .map_err(ExperimentError::from)
                    .and_then(|c| run_single(&c, seed))
                    .map(|o| o.record)
                    .map_err(|e| e.to_string());
                CellRun { d, n, rep, seed, result }
            })
            .collect()
    });
    let mut heatmap = Vec::new();
    for group in cells.chunk_by(|a, b| (a.d, a.n) == (b.d, b.n)) {
        let ok: Vec<&RunRecord> = group.iter().filter_map(|c| c.result.as_ref().ok()).collect();
        let last = |r: &RunRecord| r.checkpoints.last().map(|c| (c.top_decile, c.mean_abs));
        let stats: [(&str, Vec<f64>); 3] = [
            ("top_decile", ok.iter().filter_map(|r| last(r).map(|v| v.0)).collect()),
            ("mean_abs", ok.iter().filter_map(|r| last(r).map(|v| v.1)).collect()),
            ("test_error", ok.iter().filter_map(|r| r.test_error.as_ref().map(|t| t.mean)).collect()),
        ];
        for (name, vals) in stats {
            if vals.is_empty() && name == "test_error" {
                continue;
            }
            let (mean, std) = mean_std(&vals);
            heatmap.push(HeatmapRow { d: group[0].d, n: group[0].n, stat: name.into(), mean, std, count: vals.len() });
        }
    }
    Ok(SweepOutcome { cells, heatmap })
}

pub fn write_heatmap_csv<W: Write>(rows: &[HeatmapRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "d,n,stat,mean,std,count")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.d, r.n, r.stat, fmt_f64(r.mean), fmt_f64(r.std), r.count)?;
    }
    Ok(())
}

/// Simple linear-scale SVG heatmap of one statistic, `n` across and `d` down.
pub fn heatmap_svg(rows: &[HeatmapRow], stat: &str) -> String {
    let sel: Vec<&HeatmapRow> = rows.iter().filter(|r| r.stat == stat).collect();
    let mut ds: Vec<usize> = sel.iter().map(|r| r.d).collect();
    let mut ns: Vec<u64> = sel.iter().map(|r| r.n).collect();
    ds.sort_unstable();
    ds.dedup();
    ns.sort_unstable();
    ns.dedup();
    let finite = sel.iter().map(|r| r.mean).filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let (cw, ch, left, top) = (60, 30, 70, 30);
    let (w, h) = (left + cw * ns.len() + 10, top + ch * ds.len() + 30);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
    s += &format!("<text x=\"{left}\" y=\"18\" font-size=\"13\">{stat}</text>\n");
    for r in &sel {
        let i = ns.iter().position(|&n| n == r.n).unwrap_or(0);
        let j = ds.iter().position(|&d| d == r.d).unwrap_or(0);
        let t = if hi > lo && r.mean.is_finite() { (r.mean - lo) / (hi - lo) } else { 0.5 };
        let shade = (255.0 * (1.0 - t)).round() as u8;
        s += &format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{cw}\" height=\"{ch}\" fill=\"rgb(255,{shade},{shade})\"><title>{:.4}</title></rect>\n",
            left + i * cw,
            top + j * ch,
            r.mean
        );
    }
    for (j, d) in ds.iter().enumerate() {
        s += &format!("<text x=\"4\" y=\"{}\" font-size=\"11\">d={d}</text>\n", top + j * ch + 19);
    }
    for (i, n) in ns.iter().enumerate() {
        s += &format!("<text x=\"{}\" y=\"{}\" font-size=\"11\">{n}</text>\n", left + i * cw + 4, top + ds.len() * ch + 16);
    }
    s + "</svg>\n"
}

/// Self-description written next to every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &Config, seeds: Vec<u64>, outputs: Vec<String>) -> Self {
        let value = serde_json::to_value(config).expect("config serializes");
        let mut versions = BTreeMap::new();
        versions.insert(env!("CARGO_PKG_NAME").to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("format".to_string(), "1".to_string());
        Self { command: command.into(), config_hash: config_hash(config), seeds, versions, config: value, outputs }
    }
}

/// SHA-256 of the canonical JSON form of a config.
pub fn config_hash(config: &Config) -> String {
    let text = to_json_string(config).expect("config serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes each successful cell's record as `cells/d{d}_n{n}_r{rep}.jsonl`, the
/// heatmap CSV and optionally an SVG per statistic. Returns the written paths.
pub fn write_sweep(out: &Path, outcome: &SweepOutcome, svg: bool) -> Result<Vec<String>, ExperimentError> {
    let cells_dir = out.join("cells");
    std::fs::create_dir_all(&cells_dir)?;
    let mut written = Vec::new();
    for c in &outcome.cells {
        let name = format!("cells/d{}_n{}_r{}.jsonl", c.d, c.n, c.rep);
        let mut f = std::io::BufWriter::new(std::fs::File::create(out.join(&name))?);
        match &c.result {
            Ok(r) => r.write_jsonl(&mut f)?,
            Err(e) => writeln!(f, "{}", serde_json::json!({"kind": "error", "seed": c.seed, "message": e}))?,
        }
        f.flush()?;
        written.push(name);
    }
    write_heatmap_csv(&outcome.heatmap, std::fs::File::create(out.join("heatmap.csv"))?)?;
    written.push("heatmap.csv".into());
    if svg {
        let mut stats: Vec<&str> = outcome.heatmap.iter().map(|r| r.stat.as_str()).collect();
        stats.dedup();
        for stat in stats {
            let name = format!("heatmap_{stat}.svg");
            std::fs::write(out.join(&name), heatmap_svg(&outcome.heatmap, stat))?;
            written.push(name);
        }
    }
    Ok(written)
}
