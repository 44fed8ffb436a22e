//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 numeric or
//! configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{apply_env, Config, ConfigError};
use crate::diagnostics::{init_tail_fraction, population_gain, two_step_expansion_terms};
use crate::experiments::{run_single, run_sweep, write_sweep, Manifest, SweepGrid};
use crate::exponents::{check_activation_conditions, monomial_reduction, ReductionMode};
use crate::io::{fmt_f64, write_json};
use crate::model::LinkSpec;
use crate::network::sample_activation;
use crate::rng::{self, Purpose};
use crate::trainer::{TrainCheckpoint, TrainMode};

#[derive(Debug, Parser)]
#[command(name = "batch-reuse", version, about = "Batch-reuse SGD on Gaussian single-index models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Config file (JSON, or `section.key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides `cli.seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and Monte-Carlo estimates.
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,
    /// Training mode: paired, online or full-batch.
    #[arg(long, global = true, value_name = "MODE")]
    pub mode: Option<TrainMode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Information exponent and monomial reduction certificate of a link.
    Exponent {
        /// Link coefficients in the normalized Hermite basis, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "power")]
        hermite: Option<Vec<f64>>,
        /// Link coefficients in the monomial basis, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        power: Option<Vec<f64>>,
    },
    /// Samples activations and reports how often each condition holds.
    ActivationCheck {
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// One training run in the configured mode.
    Train,
    /// One online (default) or full-batch run.
    Baseline,
    /// Grid of dimensions and sample budgets.
    Sweep,
    /// Expansion, population-gain and initialization-tail reports.
    Diagnose,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

fn numeric<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numeric(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

/// Config file, then environment, then flags.
fn load_config(common: &Common) -> Result<Config, CliError> {
    let mut raw = match &common.config {
        Some(p) => Config::read_raw(p)?,
        None => json!({}),
    };
    apply_env(&mut raw, std::env::vars())?;
    let mut cfg = Config::from_value(raw)?;
    if let Some(s) = common.seed {
        cfg.cli.seed = s;
    }
    if let Some(p) = common.parallelism {
        cfg.cli.parallelism = p;
    }
    if let Some(m) = common.mode {
        cfg.trainer.mode = m;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_out<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<String, CliError> {
    write_json(&dir.join(name), value).map_err(|e| numeric(format!("writing {name}: {e}")))?;
    Ok(name.to_string())
}

fn finish(common: &Common, command: &str, cfg: &Config, seeds: Vec<u64>, mut outputs: Vec<String>) -> Result<(), CliError> {
    outputs.push("manifest.json".into());
    let resolved = cfg.resolved().unwrap_or_else(|_| cfg.clone());
    let manifest = Manifest::new(command, &resolved, seeds, outputs);
    write_out(&common.out, "manifest.json", &manifest)?;
    println!("wrote {}", common.out.join("manifest.json").display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let common = &cli.common;
    let mut cfg = load_config(common)?;
    match &cli.command {
        Command::Exponent { hermite, power } => {
            if let Some(h) = hermite {
                cfg.model.link_hermite = Some(h.clone());
                cfg.model.link_power = None;
            } else if let Some(p) = power {
                cfg.model.link_power = Some(p.clone());
                cfg.model.link_hermite = None;
            }
            exponent(common, &cfg)
        }
        Command::ActivationCheck { samples } => activation_check(common, &cfg, *samples),
        Command::Train => train(common, &cfg, "train"),
        Command::Baseline => {
            cfg.trainer.mode = match common.mode {
                None => TrainMode::Online,
                Some(TrainMode::Paired) => {
                    return Err(CliError::Usage("baseline runs online or full-batch, not paired".into()))
                }
                Some(m) => m,
            };
            train(common, &cfg, "baseline")
        }
        Command::Sweep => sweep(common, &cfg),
        Command::Diagnose => diagnose(common, &cfg),
    }
}

fn exponent(common: &Common, cfg: &Config) -> Result<(), CliError> {
    let series = cfg.model.link_series()?;
    let link = LinkSpec::bare(series.clone()).map_err(numeric)?;
    let max = cfg.exponents.max_power;
    let general = monomial_reduction(&series, ReductionMode::GeneralMin, max).map_err(numeric)?;
    let odd = monomial_reduction(&series, ReductionMode::OddTarget1, max).ok();
    let even = monomial_reduction(&series, ReductionMode::EvenTarget2, max).ok();
    println!("link (hermite): {:?}", series.coeffs());
    println!("IE = {}", link.info_exponent());
    println!(
        "GE-upper = {} with power {} (coefficient {})",
        general.achieved_ie,
        general.power,
        fmt_f64(general.coefficient)
    );
    prepare_out(&common.out)?;
    let report = json!({
        "link_hermite": series.coeffs(),
        "info_exponent": link.info_exponent(),
        "generative_upper": general,
        "odd_target_1": odd,
        "even_target_2": even,
    });
    let out = write_out(&common.out, "exponent.json", &report)?;
    finish(common, "exponent", cfg, vec![cfg.cli.seed], vec![out])
}

fn activation_check(common: &Common, cfg: &Config, samples: usize) -> Result<(), CliError> {
    let cfg = cfg.resolved()?;
    let link = cfg.link()?;
    let cert = link
        .reduction()
        .cloned()
        .ok_or_else(|| numeric("link has no reduction certificate within the power cap"))?;
    let family = cfg.network.family.clone().expect("resolved config has a family");
    let mut counts = [0usize; 4];
    let mut reports = Vec::with_capacity(samples);
    for i in 0..samples {
        let mut r = rng::stream_at(cfg.cli.seed, 0, Purpose::Activation, i as u64);
        let act = sample_activation(link.degree().max(1), &family, &mut r).map_err(numeric)?;
        let rep = check_activation_conditions(&act, &link, &cert).map_err(numeric)?;
        for (c, ok) in counts.iter_mut().zip([rep.weak_recovery, rep.strong_recovery, rep.approximation, rep.all_pass()]) {
            *c += ok as usize;
        }
        reports.push(json!({"coeffs": act.series.coeffs(), "relu_mix": act.relu_mix, "report": rep}));
    }
    let rate = |c: usize| c as f64 / samples.max(1) as f64;
    println!("label power {} reaching exponent {}", cert.power, cert.achieved_ie);
    println!("weak recovery  {:.3}", rate(counts[0]));
    println!("strong recovery {:.3}", rate(counts[1]));
    println!("approximation  {:.3}", rate(counts[2]));
    println!("all conditions {:.3}", rate(counts[3]));
    prepare_out(&common.out)?;
    let report = json!({
        "certificate": cert,
        "samples": samples,
        "pass_rates": {
            "weak_recovery": rate(counts[0]),
            "strong_recovery": rate(counts[1]),
            "approximation": rate(counts[2]),
            "all": rate(counts[3]),
        },
        "activations": reports,
    });
    let out = write_out(&common.out, "activation_check.json", &report)?;
    finish(common, "activation-check", &cfg, vec![cfg.cli.seed], vec![out])
}

fn train(common: &Common, cfg: &Config, command: &str) -> Result<(), CliError> {
    let cfg = cfg.resolved()?;
    let seed = cfg.cli.seed;
    let outcome = run_single(&cfg, seed).map_err(numeric)?;
    let rec = &outcome.record;
    prepare_out(&common.out)?;
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(common.out.join("run.jsonl")).map_err(|e| numeric(format!("run.jsonl: {e}")))?,
    );
    rec.write_jsonl(&mut f).and_then(|_| f.flush()).map_err(numeric)?;
    let last_step = rec.checkpoints.last().map_or(0, |c| c.step);
    let ckpt = TrainCheckpoint { state: outcome.state, next_step: last_step, seed };
    let ck = write_out(&common.out, "checkpoint.json", &ckpt)?;
    if let Some(c) = rec.checkpoints.last() {
        println!("mode {:?}, step {}, samples {}", rec.mode, c.step, c.samples);
        println!("top-decile |overlap| {:.4}, mean |overlap| {:.4}", c.top_decile, c.mean_abs);
    }
    for r in &rec.recovery {
        println!("recovery at {}: {:?}", r.threshold, r.step);
    }
    if let Some(t) = &rec.test_error {
        println!("test error {:.4} +- {:.4}", t.mean, t.std_error);
    }
    let mut echoed: Config = serde_json::from_value(rec.config.clone()).map_err(numeric)?;
    echoed.cli.parallelism = cfg.cli.parallelism;
    finish(common, command, &echoed, vec![seed], vec!["run.jsonl".into(), ck])
}

fn sweep(common: &Common, cfg: &Config) -> Result<(), CliError> {
    let grid = SweepGrid::from_config(cfg);
    for &d in &grid.dims {
        for &b in &grid.budgets {
            grid.cell_config(d, grid.budget(d, b))?;
        }
    }
    let outcome = run_sweep(&grid, cfg.cli.parallelism).map_err(numeric)?;
    prepare_out(&common.out)?;
    let outputs = write_sweep(&common.out, &outcome, cfg.experiments.svg).map_err(numeric)?;
    let failed = outcome.cells.iter().filter(|c| c.result.is_err()).count();
    println!("{} runs, {} failed", outcome.cells.len(), failed);
    for r in &outcome.heatmap {
        println!("d={:<5} n={:<8} {:<11} {:.4} +- {:.4} ({})", r.d, r.n, r.stat, r.mean, r.std, r.count);
    }
    let seeds = (0..grid.seeds).map(|r| grid.seed(r)).collect();
    finish(common, "sweep", cfg, seeds, outputs)
}

fn diagnose(common: &Common, cfg: &Config) -> Result<(), CliError> {
    let cfg = cfg.resolved()?;
    let link = cfg.link()?;
    let d = cfg.model.dim;
    let seed = cfg.cli.seed;
    let dg = &cfg.diagnostics;
    let family = cfg.network.family.clone().expect("resolved config has a family");
    let mut r = rng::stream_at(seed, 0, Purpose::Activation, 0);
    let act = sample_activation(link.degree().max(1), &family, &mut r).map_err(numeric)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.cli.parallelism.max(1)).build().map_err(numeric)?;
    // Expansion exactness on random instances.
    let eta = dg.eta / d as f64;
    let mut worst = 0.0f64;
    let mut rr = rng::stream(seed, 1, Purpose::Diagnostics);
    for _ in 0..dg.expansion_instances {
        let w = rng::unit_vector(&mut rr, d);
        let theta = rng::unit_vector(&mut rr, d);
        let mut x = vec![0.0; d];
        rng::fill_normal(&mut rr, &mut x);
        let y = link.eval(crate::linalg::dot(&x, &theta));
        let t = two_step_expansion_terms(&act, &w, &theta, &x, y, eta);
        let scale = t.realized_unprojected.abs().max(1e-300);
        worst = worst.max((t.reconstruction(eta) - t.realized_unprojected).abs() / scale);
    }
    // Same convention as the trainer's weak phase.
    let keep = dg.xi.unwrap_or(0.0) * (d as f64).powf(-(link.reduced_exponent().saturating_sub(2) as f64) / 2.0);
    let xi = 1.0 - keep;
    let gains = pool.install(|| {
        dg.kappas
            .iter()
            .map(|&k| population_gain(&link, &act, k, eta, xi, d, cfg.model.noise_std, dg.samples, seed).map(|g| (k, g)))
            .collect::<Result<Vec<_>, _>>()
    });
    let gains = gains.map_err(numeric)?;
    let tail = init_tail_fraction(d, dg.tail_trials, dg.tail_c2, seed).map_err(numeric)?;
    println!("expansion: worst relative reconstruction error {:.3e} over {}", worst, dg.expansion_instances);
    for (k, g) in &gains {
        println!(
            "gain at kappa {k}: {:.4e} +- {:.1e} (drift {:.4e}, leading {:.4e})",
            g.mean, g.std_error, g.analytic_drift, g.analytic_leading_term
        );
    }
    let bound = (-16.0 * dg.tail_c2 * dg.tail_c2).exp();
    println!("init tail at c2 = {}: {:.5} (bound {:.5})", dg.tail_c2, tail, bound);
    prepare_out(&common.out)?;
    let report = json!({
        "activation": {"coeffs": act.series.coeffs(), "relu_mix": act.relu_mix},
        "expansion": {"instances": dg.expansion_instances, "worst_relative_error": worst},
        "population_gain": gains.iter().map(|(k, g)| json!({"kappa": k, "estimate": g})).collect::<Vec<_>>(),
        "init_tail": {"c2": dg.tail_c2, "trials": dg.tail_trials, "fraction": tail, "bound": bound},
    });
    let out = write_out(&common.out, "diagnose.json", &report)?;
    finish(common, "diagnose", &cfg, vec![seed], vec![out])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_are_usage_errors() {
        assert_eq!(run(["batch-reuse", "frobnicate"]), 1);
        assert_eq!(run(["batch-reuse", "train", "--seed", "abc"]), 1);
        assert_eq!(run(["batch-reuse", "--help"]), 0);
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        assert_eq!(run(["batch-reuse", "train", "--config", "/nonexistent/cfg.json"]), 1);
    }
}
