//! Run configuration: one section per module, read from JSON or from flat
//! `section.key = value` lines, with environment overrides. Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::exponents::DEFAULT_MAX_POWER;
use crate::hermite::HermiteSeries;
use crate::model::{DirectionMode, LinkSpec, ModelError};
use crate::network::ActivationFamily;
use crate::trainer::{Loss, TrainMode, TrainSchedule};

/// Prefix of environment overrides; `__` separates section and key,
/// e.g. `BATCHREUSE_TRAINER__T11=4096`.
pub const ENV_PREFIX: &str = "BATCHREUSE_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentsSection {
    pub max_power: usize,
}

impl Default for ExponentsSection {
    fn default() -> Self {
        Self { max_power: DEFAULT_MAX_POWER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub dim: usize,
    /// Link coefficients in the normalized Hermite basis.
    pub link_hermite: Option<Vec<f64>>,
    /// Link coefficients in the monomial basis; exclusive with `link_hermite`.
    pub link_power: Option<Vec<f64>>,
    pub noise_std: f64,
    pub direction: DirectionMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { dim: 128, link_hermite: None, link_power: None, noise_std: 0.0, direction: DirectionMode::Axis }
    }
}

impl ModelSection {
    pub fn link_series(&self) -> Result<HermiteSeries, ConfigError> {
        match (&self.link_hermite, &self.link_power) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid("set only one of model.link_hermite and model.link_power".into())),
            (Some(h), None) => Ok(HermiteSeries::new(h.clone())),
            (None, Some(p)) => Ok(HermiteSeries::from_monomial(p)),
            (None, None) => Ok(HermiteSeries::basis(3)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub width: usize,
    /// Second-layer scale; defaults to `d^(-(p*-1)/2)`.
    pub c_a: Option<f64>,
    /// Use the link itself as every neuron's activation.
    pub well_specified: bool,
    /// Activation family; defaults to random Hermite signs up to the link degree.
    pub family: Option<ActivationFamily>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { width: 512, c_a: None, well_specified: false, family: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub mode: TrainMode,
    /// Weak-phase rate as a multiple of `1/d`.
    pub eta_weak: f64,
    pub eta_strong: f64,
    /// Interpolation strength; defaults to `0.1 / ln d`.
    pub xi_weak: Option<f64>,
    pub t11: u64,
    pub t12: u64,
    pub t2: u64,
    pub steps: u64,
    pub full_batch_n: usize,
    /// Ridge strength; `None` picks it from the feature moments.
    pub lambda: Option<f64>,
    pub batch_size: usize,
    pub loss: Loss,
    /// Bias range; defaults to `4 sqrt(ln d)`.
    pub c_b: Option<f64>,
    pub strong_phase_xi_one: bool,
    /// Total distinct samples; when set it replaces `t11`/`t12`, `steps` or
    /// `full_batch_n` according to the mode.
    pub sample_budget: Option<u64>,
    /// Share of the paired budget spent in the weak phase.
    pub weak_fraction: f64,
    pub thresholds: Vec<f64>,
    pub test_samples: usize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        Self {
            mode: TrainMode::Paired,
            eta_weak: 1.0,
            eta_strong: 1.0,
            xi_weak: None,
            t11: 2048,
            t12: 0,
            t2: 20_000,
            steps: 256,
            full_batch_n: 2048,
            lambda: None,
            batch_size: 1,
            loss: Loss::Correlation,
            c_b: None,
            strong_phase_xi_one: false,
            sample_budget: None,
            weak_fraction: 1.0,
            thresholds: vec![0.5],
            test_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub kappas: Vec<f64>,
    pub samples: usize,
    /// Rate multiple of `1/d` for the population gain.
    pub eta: f64,
    /// Interpolation constant for the population gain, used like `trainer.xi_weak`;
    /// defaults to `0.1 / ln d`.
    pub xi: Option<f64>,
    pub tail_c2: f64,
    pub tail_trials: usize,
    pub expansion_instances: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            kappas: vec![0.05, 0.1, 0.2],
            samples: 1_000_000,
            eta: 0.01,
            xi: None,
            tail_c2: 0.5,
            tail_trials: 100_000,
            expansion_instances: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentsSection {
    pub dims: Vec<usize>,
    /// Sample budgets; multiples of `d` when `budget_per_dim` is set.
    pub budgets: Vec<f64>,
    pub budget_per_dim: bool,
    pub seeds: u64,
    pub svg: bool,
}

impl Default for ExperimentsSection {
    fn default() -> Self {
        Self { dims: vec![32, 64], budgets: vec![4.0, 16.0], budget_per_dim: true, seeds: 2, svg: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliSection {
    pub seed: u64,
    pub parallelism: usize,
}

impl Default for CliSection {
    fn default() -> Self {
        Self { seed: 0, parallelism: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub exponents: ExponentsSection,
    pub model: ModelSection,
    pub network: NetworkSection,
    pub trainer: TrainerSection,
    pub diagnostics: DiagnosticsSection,
    pub experiments: ExperimentsSection,
    pub cli: CliSection,
}

/// Parses `section.key = value` lines (or `[section]` headers followed by
/// `key = value`). Values are JSON when they parse as JSON, strings otherwise.
pub fn parse_flat(text: &str) -> Result<Value, ConfigError> {
    let mut root = Map::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: format!("expected key = value, got {line:?}") })?;
        let key = key.trim();
        let full = match &section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        };
        set_dotted(&mut root, &full, parse_value(value.trim()))
            .map_err(|msg| ConfigError::Syntax { line: i + 1, msg })?;
    }
    Ok(Value::Object(root))
}

fn parse_value(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

fn set_dotted(root: &mut Map<String, Value>, key: &str, value: Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed key {key:?}"));
    }
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        let entry = node.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
        node = entry.as_object_mut().ok_or_else(|| format!("{key:?}: {p:?} is not a section"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Applies `BATCHREUSE_SECTION__KEY=value` pairs to a raw config value.
pub fn apply_env<I: IntoIterator<Item = (String, String)>>(raw: &mut Value, vars: I) -> Result<(), ConfigError> {
    let root = raw.as_object_mut().ok_or_else(|| ConfigError::Invalid("config root must be an object".into()))?;
    for (k, v) in vars {
        if let Some(rest) = k.strip_prefix(ENV_PREFIX) {
            let key = rest.to_lowercase().replace("__", ".");
            set_dotted(root, &key, parse_value(&v)).map_err(|m| ConfigError::Invalid(format!("{k}: {m}")))?;
        }
    }
    Ok(())
}

impl Config {
    pub fn from_value(raw: Value) -> Result<Self, ConfigError> {
        let raw = if raw.is_null() { Value::Object(Map::new()) } else { raw };
        serde_json::from_value(raw).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Reads JSON (when the text starts with `{`) or flat key-value text.
    pub fn parse_str(text: &str) -> Result<Value, ConfigError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Syntax { line: e.line(), msg: e.to_string() })
        } else {
            parse_flat(text)
        }
    }

    pub fn read_raw(path: &Path) -> Result<Value, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::parse_str(&text)
    }

    pub fn link(&self) -> Result<LinkSpec, ConfigError> {
        Ok(LinkSpec::with_max_power(self.model.link_series()?, self.exponents.max_power)?)
    }

    /// Expands every data-dependent default for the configured dimension and
    /// link, so the result can be echoed as a self-describing record. The ridge
    /// strength stays `None` when automatic; it is resolved per run.
    pub fn resolved(&self) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        let d = c.model.dim;
        if d < 3 {
            return Err(ConfigError::Invalid(format!("model.dim must be at least 3, got {d}")));
        }
        let link = c.link()?;
        let series = link.series();
        if c.model.link_hermite.is_none() && c.model.link_power.is_none() {
            c.model.link_hermite = Some(series.coeffs().to_vec());
        }
        let ln_d = (d as f64).ln();
        let p_star = link.reduced_exponent();
        c.network.c_a.get_or_insert((d as f64).powf(-((p_star as f64) - 1.0) / 2.0));
        c.trainer.xi_weak.get_or_insert(0.1 / ln_d);
        c.trainer.c_b.get_or_insert(4.0 * ln_d.sqrt());
        c.diagnostics.xi.get_or_insert(0.1 / ln_d);
        if c.network.family.is_none() {
            c.network.family = Some(if c.network.well_specified {
                ActivationFamily::Fixed { coeffs: series.coeffs().to_vec(), relu_mix: 0.0 }
            } else {
                ActivationFamily::HermiteRademacher { degree: link.degree(), magnitudes: None }
            });
        }
        if let Some(n) = c.trainer.sample_budget {
            let b = c.trainer.batch_size.max(1) as u64;
            match c.trainer.mode {
                TrainMode::Paired => {
                    let pairs = n / b;
                    c.trainer.t11 = ((pairs as f64) * c.trainer.weak_fraction.clamp(0.0, 1.0)).round() as u64;
                    c.trainer.t12 = pairs - c.trainer.t11;
                }
                TrainMode::Online => c.trainer.steps = n / b,
                TrainMode::FullBatch => c.trainer.full_batch_n = n as usize,
            }
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        let t = &self.trainer;
        if self.network.width == 0 {
            return bad("network.width must be positive");
        }
        if t.batch_size == 0 {
            return bad("trainer.batch_size must be positive");
        }
        if !(t.eta_weak.is_finite() && t.eta_strong.is_finite()) {
            return bad("trainer rates must be finite");
        }
        if t.lambda.is_some_and(|l| !(l >= 0.0)) {
            return bad("trainer.lambda must be non-negative");
        }
        if !(self.model.noise_std >= 0.0) {
            return bad("model.noise_std must be non-negative");
        }
        if t.mode == TrainMode::FullBatch && t.full_batch_n == 0 {
            return bad("trainer.full_batch_n must be positive in full-batch mode");
        }
        Ok(())
    }

    /// Training schedule of a resolved config; `lambda` is the resolved ridge strength.
    pub fn schedule(&self, lambda: f64) -> TrainSchedule {
        let t = &self.trainer;
        TrainSchedule {
            mode: t.mode,
            eta_weak: t.eta_weak,
            eta_strong: t.eta_strong,
            xi_weak: t.xi_weak.unwrap_or(0.0),
            t11: t.t11,
            t12: t.t12,
            t2: t.t2,
            steps: t.steps,
            full_batch_n: t.full_batch_n,
            lambda,
            batch_size: t.batch_size,
            loss: t.loss,
            c_a: self.network.c_a.unwrap_or(1.0),
            c_b: t.c_b.unwrap_or(0.0),
            strong_phase_xi_one: t.strong_phase_xi_one,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_json_agree() {
        let flat = "# comment\nmodel.dim = 64\ntrainer.mode = online\n[network]\nwidth = 8\n";
        let json = r#"{"model":{"dim":64},"trainer":{"mode":"online"},"network":{"width":8}}"#;
        let a = Config::from_value(Config::parse_str(flat).unwrap()).unwrap();
        let b = Config::from_value(Config::parse_str(json).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trainer.mode, TrainMode::Online);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let raw = parse_flat("trainer.eta_wek = 1.0").unwrap();
        let err = Config::from_value(raw).unwrap_err().to_string();
        assert!(err.contains("eta_wek"), "{err}");
        assert!(Config::from_value(parse_flat("nosuch.key = 1").unwrap()).is_err());
    }

    #[test]
    fn env_overrides() {
        let mut raw = parse_flat("model.dim = 64").unwrap();
        let vars = [("BATCHREUSE_MODEL__DIM".to_string(), "32".to_string()), ("PATH".into(), "/bin".into())];
        apply_env(&mut raw, vars).unwrap();
        assert_eq!(Config::from_value(raw).unwrap().model.dim, 32);
    }

    #[test]
    fn resolution_fills_defaults() {
        let mut c = Config::default();
        c.model.dim = 64;
        c.trainer.sample_budget = Some(1000);
        c.trainer.batch_size = 4;
        c.trainer.weak_fraction = 0.6;
        let r = c.resolved().unwrap();
        assert_eq!(r.network.c_a, Some(1.0));
        assert_eq!((r.trainer.t11, r.trainer.t12), (150, 100));
        assert!((r.trainer.c_b.unwrap() - 4.0 * 64f64.ln().sqrt()).abs() < 1e-15);
        assert_eq!(r.resolved().unwrap(), r);
        c.model.link_power = Some(vec![0.0, 1.0]);
        c.model.link_hermite = Some(vec![0.0, 1.0]);
        assert!(c.resolved().is_err());
    }
}
