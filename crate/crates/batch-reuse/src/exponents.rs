//! Information exponents, monomial label transformations and the sign conditions
//! a student activation must satisfy against a given link.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hermite::{HermiteError, HermiteSeries, DEFAULT_DEGREE_CAP, ZERO_RTOL};
use crate::model::LinkSpec;
use crate::network::ActivationSpec;

/// Power cap used when no other is configured.
pub const DEFAULT_MAX_POWER: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error("information exponent of the zero series is undefined")]
    ZeroSeries,
    #[error("information exponent of a constant series is undefined")]
    ConstantSeries,
    #[error("no power up to {searched_up_to} qualifies (best exponent {best_ie:?} at power {best_power:?})")]
    SearchExhausted {
        searched_up_to: usize,
        best_ie: Option<usize>,
        best_power: Option<usize>,
    },
    #[error(transparent)]
    Hermite(#[from] HermiteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    /// Smallest power whose exponent is at most two.
    EvenTarget2,
    /// Smallest power whose exponent is one.
    OddTarget1,
    /// Power minimizing the exponent, ties to the smaller power.
    GeneralMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCertificate {
    pub power: usize,
    pub achieved_ie: usize,
    pub searched_up_to: usize,
    /// First nonzero Hermite coefficient of `g^power`, with `g` scaled to unit norm.
    pub coefficient: f64,
}

/// Index of the first non-negligible coefficient past the constant term.
pub fn information_exponent(g: &HermiteSeries) -> Result<usize, ExponentError> {
    if g.is_zero() {
        return Err(ExponentError::ZeroSeries);
    }
    let tol = ZERO_RTOL * g.norm().max(1.0);
    g.coeffs()
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, c)| c.abs() > tol)
        .map(|(i, _)| i)
        .ok_or(ExponentError::ConstantSeries)
}

// Exponent of a candidate power after rescaling it to unit norm, so that the
// zero test does not depend on how large the power's coefficients have grown.
fn scaled_exponent(p: &HermiteSeries) -> Option<usize> {
    information_exponent(&p.normalized()).ok()
}

pub fn monomial_reduction(
    g: &HermiteSeries,
    mode: ReductionMode,
    max_power: usize,
) -> Result<ReductionCertificate, ExponentError> {
    monomial_reduction_capped(g, mode, max_power, DEFAULT_DEGREE_CAP)
}

pub fn monomial_reduction_capped(
    g: &HermiteSeries,
    mode: ReductionMode,
    max_power: usize,
    degree_cap: usize,
) -> Result<ReductionCertificate, ExponentError> {
    if g.is_zero() {
        return Err(ExponentError::ZeroSeries);
    }
    let unit = g.normalized();
    let mut acc = HermiteSeries::basis(0);
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 1..=max_power {
        acc = match acc.multiply_capped(&unit, degree_cap) {
            Ok(next) => next,
            // Past the degree cap the minimizing search reports what it has seen.
            Err(HermiteError::DegreeCap { .. }) if mode == ReductionMode::GeneralMin && best.is_some() => {
                let (power, achieved_ie, coefficient) = best.unwrap();
                return Ok(ReductionCertificate { power, achieved_ie, searched_up_to: i - 1, coefficient });
            }
            Err(e) => return Err(e.into()),
        };
        let Some(ie) = scaled_exponent(&acc) else {
            continue;
        };
        let coefficient = acc.coeff(ie);
        if best.is_none_or(|(_, b, _)| ie < b) {
            best = Some((i, ie, coefficient));
        }
        let done = match mode {
            ReductionMode::EvenTarget2 => ie <= 2,
            ReductionMode::OddTarget1 => ie == 1,
            ReductionMode::GeneralMin => ie == 1,
        };
        if done {
            return Ok(ReductionCertificate { power: i, achieved_ie: ie, searched_up_to: max_power, coefficient });
        }
    }
    match (mode, best) {
        (ReductionMode::GeneralMin, Some((power, achieved_ie, coefficient))) => {
            Ok(ReductionCertificate { power, achieved_ie, searched_up_to: max_power, coefficient })
        }
        _ => Err(ExponentError::SearchExhausted {
            searched_up_to: max_power,
            best_ie: best.map(|b| b.1),
            best_power: best.map(|b| b.0),
        }),
    }
}

/// Monomial upper bound on the generative exponent: `(min IE(g^i), argmin i)`.
pub fn generative_exponent_upper(
    g: &HermiteSeries,
    max_power: usize,
) -> Result<(usize, usize), ExponentError> {
    let c = monomial_reduction(g, ReductionMode::GeneralMin, max_power)?;
    Ok((c.achieved_ie, c.power))
}

/// `H(s^(ell) * (s')^(ell-1); k)`, the coefficient controlling the batch-reuse signal.
pub fn weak_recovery_functional(
    sigma: &HermiteSeries,
    ell: usize,
    k: usize,
) -> Result<f64, HermiteError> {
    assert!(ell >= 1, "derivative order must be at least one");
    let first = sigma.derivative();
    let high = sigma.nth_derivative(ell);
    let prod = high.multiply(&first.power(ell - 1)?)?;
    Ok(prod.hermite_coeff(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryCase {
    /// The link's own exponent is already minimal, no label power needed.
    Direct,
    /// Recovery goes through a label power of order at least two.
    Transformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub case: RecoveryCase,
    pub weak_recovery: bool,
    /// Signed product whose positivity is the weak-recovery condition.
    pub weak_value: f64,
    /// Magnitude of the activation-side factor, for the relaxed nonzero convention.
    pub activation_factor: f64,
    pub strong_recovery: bool,
    pub approximation: bool,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.weak_recovery && self.strong_recovery && self.approximation
    }
}

const STRONG_GRID: usize = 10_000;
const STRONG_GRID_MAX: f64 = 10.0;

/// Positivity of `s -> sum_j j! a_j b_j s^(j-1)` for all `s > 0`, checked on a
/// grid over (0, 10] plus the sign of the top-order term for large `s`.
pub fn strong_recovery_positive(link: &HermiteSeries, sigma: &HermiteSeries, from: usize) -> bool {
    let top = link.coeffs().len().max(sigma.coeffs().len());
    let terms: Vec<(usize, f64)> = (from.max(1)..top)
        .map(|j| {
            let f = crate::hermite::ln_factorial(j).exp();
            (j, f * link.coeff(j) * sigma.coeff(j))
        })
        .filter(|(_, c)| *c != 0.0)
        .collect();
    let Some(&(_, lead)) = terms.last() else {
        return false;
    };
    if lead <= 0.0 {
        return false;
    }
    (1..=STRONG_GRID).all(|i| {
        let s = STRONG_GRID_MAX * i as f64 / STRONG_GRID as f64;
        terms.iter().map(|&(j, c)| c * s.powi(j as i32 - 1)).sum::<f64>() > 0.0
    })
}

pub fn check_activation_conditions(
    sigma: &ActivationSpec,
    link: &LinkSpec,
    cert: &ReductionCertificate,
) -> Result<ConditionReport, HermiteError> {
    let act = &sigma.series;
    let target = link.series();
    let p_star = cert.achieved_ie;
    let (case, weak_value, activation_factor, strong_from) = if cert.power == 1 {
        let a = act.coeff(p_star);
        (RecoveryCase::Direct, target.coeff(p_star) * a, a.abs(), p_star)
    } else {
        let link_side = target.normalized().power(cert.power)?.coeff(p_star);
        let act_side = weak_recovery_functional(act, cert.power, p_star - 1)?;
        (RecoveryCase::Transformed, link_side * act_side, act_side.abs(), p_star + 1)
    };
    let q = target.degree().unwrap_or(0);
    let approximation = act.coeffs().iter().skip(q).any(|&b| b != 0.0);
    Ok(ConditionReport {
        case,
        weak_recovery: weak_value > 0.0,
        weak_value,
        activation_factor,
        strong_recovery: strong_recovery_positive(target, act, strong_from),
        approximation,
    })
}
