//! Target single-index model `y = link(<x, theta>) + noise` with standard Gaussian inputs.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::{
    information_exponent, monomial_reduction, ExponentError, ReductionCertificate, ReductionMode,
    DEFAULT_MAX_POWER,
};
use crate::hermite::HermiteSeries;
use crate::io::fmt_f64;
use crate::rng::{self, Purpose};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid link: {0}")]
    Link(#[from] ExponentError),
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("direction has dimension {got}, expected {expected}")]
    DirectionMismatch { got: usize, expected: usize },
    #[error("batch csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A link in Hermite form together with its exponent data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    series: HermiteSeries,
    degree: usize,
    info_exponent: usize,
    reduction: Option<ReductionCertificate>,
}

impl LinkSpec {
    /// Builds the link and attaches the minimal-exponent power certificate
    /// (searching powers up to the default cap).
    pub fn new(series: HermiteSeries) -> Result<Self, ModelError> {
        Self::with_max_power(series, DEFAULT_MAX_POWER)
    }

    pub fn with_max_power(series: HermiteSeries, max_power: usize) -> Result<Self, ModelError> {
        let info_exponent = information_exponent(&series)?;
        let reduction = monomial_reduction(&series, ReductionMode::GeneralMin, max_power).ok();
        Ok(Self { degree: series.degree().unwrap_or(0), series, info_exponent, reduction })
    }

    /// Link with no reduction certificate attached.
    pub fn bare(series: HermiteSeries) -> Result<Self, ModelError> {
        let info_exponent = information_exponent(&series)?;
        Ok(Self { degree: series.degree().unwrap_or(0), series, info_exponent, reduction: None })
    }

    pub fn hermite(k: usize) -> Self {
        Self::new(HermiteSeries::basis(k)).expect("basis elements have a defined exponent")
    }

    pub fn series(&self) -> &HermiteSeries {
        &self.series
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn info_exponent(&self) -> usize {
        self.info_exponent
    }
    pub fn reduction(&self) -> Option<&ReductionCertificate> {
        self.reduction.as_ref()
    }

    /// Exponent reachable after the certified label power (the link's own exponent without one).
    pub fn reduced_exponent(&self) -> usize {
        self.reduction.as_ref().map_or(self.info_exponent, |c| c.achieved_ie)
    }

    /// Label power used by the certificate, 1 when absent.
    pub fn reduction_power(&self) -> usize {
        self.reduction.as_ref().map_or(1, |c| c.power)
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.series.eval(z)
    }

    /// `E[link(z)^2]`.
    pub fn second_moment(&self) -> f64 {
        self.series.norm().powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub dim: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl DataConfig {
    pub fn new(dim: usize, noise_std: f64, seed: u64) -> Result<Self, ModelError> {
        if dim < 2 {
            return Err(ModelError::Dimension(dim));
        }
        Ok(Self { dim, noise_std, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    #[default]
    Axis,
    Random,
}

pub fn make_direction(d: usize, mode: DirectionMode, seed: u64) -> Vec<f64> {
    match mode {
        DirectionMode::Axis => {
            let mut v = vec![0.0; d];
            v[0] = 1.0;
            v
        }
        DirectionMode::Random => rng::unit_vector(&mut rng::stream(seed, 0, Purpose::Direction), d),
    }
}

/// Row-major inputs with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub dim: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("x_{i}")).collect();
        writeln!(out, "{},y", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.row(i).iter().map(|&v| fmt_f64(v)).collect();
            writeln!(out, "{},{}", row.join(","), fmt_f64(self.labels[i]))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, ModelError> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| ModelError::Csv("empty file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let dim = cols.len().saturating_sub(1);
        let expected: Vec<String> =
            (0..dim).map(|i| format!("x_{i}")).chain(std::iter::once("y".into())).collect();
        if cols != expected {
            return Err(ModelError::Csv(format!("unexpected header {header:?}")));
        }
        let mut batch = Batch { dim, inputs: Vec::new(), labels: Vec::new() };
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ModelError::Csv(format!("row {}: {e}", n + 2)))?;
            if vals.len() != dim + 1 {
                return Err(ModelError::Csv(format!("row {} has {} fields", n + 2, vals.len())));
            }
            batch.inputs.extend_from_slice(&vals[..dim]);
            batch.labels.push(vals[dim]);
        }
        Ok(batch)
    }
}

/// Draws batch number `counter` of the data stream. The same counter always
/// yields the same batch, independent of what else was drawn.
pub fn sample_batch(
    link: &LinkSpec,
    theta: &[f64],
    n: usize,
    cfg: &DataConfig,
    counter: u64,
) -> Result<Batch, ModelError> {
    sample_batch_from(link, theta, n, cfg, rng::stream_at(cfg.seed, 0, Purpose::Data, counter))
}

pub fn sample_batch_from<R: rand::Rng>(
    link: &LinkSpec,
    theta: &[f64],
    n: usize,
    cfg: &DataConfig,
    mut rng: R,
) -> Result<Batch, ModelError> {
    if theta.len() != cfg.dim {
        return Err(ModelError::DirectionMismatch { got: theta.len(), expected: cfg.dim });
    }
    let d = cfg.dim;
    let mut inputs = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    for row in inputs.chunks_mut(d.max(1)).take(n) {
        rng::fill_normal(&mut rng, row);
        let noise = if cfg.noise_std > 0.0 {
            cfg.noise_std * rng.sample::<f64, _>(rand_distr::StandardNormal)
        } else {
            0.0
        };
        labels.push(link.eval(crate::linalg::dot(row, theta)) + noise);
    }
    Ok(Batch { dim: d, inputs, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions() {
        assert_eq!(make_direction(3, DirectionMode::Axis, 0), vec![1.0, 0.0, 0.0]);
        let v = make_direction(50, DirectionMode::Random, 11);
        assert!((crate::linalg::norm(&v) - 1.0).abs() < 1e-12);
        assert_eq!(v, make_direction(50, DirectionMode::Random, 11));
    }

    #[test]
    fn identity_link_copies_first_coordinate() {
        let link = LinkSpec::hermite(1);
        let cfg = DataConfig::new(4, 0.0, 3).unwrap();
        let b = sample_batch(&link, &make_direction(4, DirectionMode::Axis, 0), 20, &cfg, 0).unwrap();
        for i in 0..b.len() {
            assert_eq!(b.labels[i], b.row(i)[0]);
        }
        let empty = sample_batch(&link, &[1.0, 0.0, 0.0, 0.0], 0, &cfg, 0).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn cubic_link_is_standardized() {
        let link = LinkSpec::hermite(3);
        let cfg = DataConfig::new(5, 0.0, 9).unwrap();
        let n = 100_000;
        let b = sample_batch(&link, &make_direction(5, DirectionMode::Axis, 0), n, &cfg, 1).unwrap();
        let mean = b.labels.iter().sum::<f64>() / n as f64;
        let var = b.labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        // Var(he_3^2) = E[he_3^4] - 1 = 92.
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 3.0 * (92.0 / n as f64).sqrt());
    }

    #[test]
    fn csv_round_trip() {
        let link = LinkSpec::hermite(2);
        let cfg = DataConfig::new(3, 0.1, 5).unwrap();
        let b = sample_batch(&link, &[0.0, 1.0, 0.0], 7, &cfg, 2).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x_0,x_1,x_2,y\n"));
        assert_eq!(Batch::read_csv(&buf[..]).unwrap(), b);
    }
}
