//! Bridges between simulation and analysis: the two-step Taylor expansion of a
//! reused batch, the expected pair-step alignment gain, initialization tails and
//! the Bihari–LaSalle comparison sequence.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hermite::{gauss_hermite_rule, ln_factorial, HermiteError, HermiteSeries, MAX_NODES};
use crate::linalg::{dot, norm};
use crate::model::LinkSpec;
use crate::network::ActivationSpec;
use crate::rng::{self, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("Monte-Carlo sample count must be positive")]
    NoSamples,
    #[error("overlap must lie strictly between 0 and 1, got {0}")]
    Overlap(f64),
    #[error("horizon {steps} reaches the blow-up time of the comparison sequence")]
    Blowup { steps: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Hermite(#[from] HermiteError),
}

/// Terms of the two-step expansion for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerms {
    /// `(eta |x|^2)^i y^(i+1) / i! * act'(v)^i * act^(i+1)(v) * <theta, x>`, `i = 0..deg`.
    pub terms: Vec<f64>,
    /// Same terms with `x` replaced by its projection orthogonal to `w`.
    pub projected_terms: Vec<f64>,
    /// Correlational term `y act'(v) <theta, x>`.
    pub csq: f64,
    pub projected_csq: f64,
    /// `<theta, w2 - w>` for two plain (unprojected) steps on the sample.
    pub realized_unprojected: f64,
    /// Alignment change after two projected steps and renormalization.
    pub realized_projected: f64,
}

impl ExpansionTerms {
    /// `eta * (csq + sum_i terms_i)`.
    pub fn reconstruction(&self, eta: f64) -> f64 {
        eta * (self.csq + self.terms.iter().sum::<f64>())
    }

    pub fn projected_reconstruction(&self, eta: f64) -> f64 {
        eta * (self.projected_csq + self.projected_terms.iter().sum::<f64>())
    }
}

/// Expansion of the alignment change produced by two correlation steps on the
/// same sample `(x, y)` from a unit weight `w`. Only the polynomial part of the
/// activation enters.
pub fn two_step_expansion_terms(
    sigma: &ActivationSpec,
    w: &[f64],
    theta: &[f64],
    x: &[f64],
    y: f64,
    eta: f64,
) -> ExpansionTerms {
    let series = &sigma.series;
    let deg = series.degree().unwrap_or(0);
    let derivs: Vec<HermiteSeries> = (1..=deg.max(1)).map(|k| series.nth_derivative(k)).collect();
    let first = |z: f64| derivs[0].eval(z);
    let v = dot(w, x);
    let tx = dot(theta, x);
    let kappa = dot(theta, w);
    let xx = dot(x, x);
    let px2 = xx - v * v;
    let tpx = tx - kappa * v;
    let sp = first(v);
    let mut terms = Vec::with_capacity(deg);
    let mut projected = Vec::with_capacity(deg);
    for i in 0..deg {
        let common = y.powi(i as i32 + 1) / ln_factorial(i).exp() * sp.powi(i as i32) * derivs[i].eval(v);
        terms.push((eta * xx).powi(i as i32) * common * tx);
        projected.push((eta * px2).powi(i as i32) * common * tpx);
    }
    // Plain steps. Both increments are multiples of `x`, so the change is read off
    // their total rather than from `<theta, w2> - kappa`, which loses digits.
    let c1 = eta * y * sp;
    let mut w1: Vec<f64> = w.iter().zip(x).map(|(a, b)| a + c1 * b).collect();
    let c2 = eta * y * first(dot(&w1, x));
    let realized_unprojected = (c1 + c2) * tx;
    // Projected steps with the projector frozen at `w`, then renormalization.
    let px: Vec<f64> = x.iter().zip(w).map(|(a, b)| a - v * b).collect();
    for (a, (b, p)) in w1.iter_mut().zip(w.iter().zip(&px)) {
        *a = b + eta * y * sp * p;
    }
    let c2 = eta * y * first(dot(&w1, x));
    let w2: Vec<f64> = w1.iter().zip(&px).map(|(a, p)| a + c2 * p).collect();
    let realized_projected = dot(theta, &w2) / norm(&w2) - kappa;
    ExpansionTerms {
        terms,
        projected_terms: projected,
        csq: y * sp * tx,
        projected_csq: y * sp * tpx,
        realized_unprojected,
        realized_projected,
    }
}

/// Monte-Carlo and analytic views of the expected pair-step alignment gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    /// Control-variate Monte-Carlo mean of the gain per pair step.
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
    /// Plain sample mean and its standard error, without the control variate.
    pub raw_mean: f64,
    pub raw_std_error: f64,
    /// Lowest-order term of the drift in the label-power expansion.
    pub analytic_leading_term: f64,
    /// Expected gain to second order in the interpolated step, all orders in the
    /// inner step size, computed by quadrature (polynomial part of the activation).
    pub analytic_drift: f64,
    /// The signal constant: `p*! a_p* b_p*` without a label power, otherwise
    /// `p*! H(link^I; p*) H(act^(I) act'^(I-1); p*-1) / (2 (I-1)!)`.
    pub signal_constant: f64,
}

/// `E[chi^k]` for `chi ~ chi-square with m degrees of freedom`.
pub fn chi_square_moment(m: usize, k: usize) -> f64 {
    (0..k).map(|i| (m + 2 * i) as f64).product()
}

// E[1{z > 0} he_m(z)]: 1/2 for m = 0, he_{m-1}(0) phi(0) / sqrt(m) otherwise.
fn step_coeff(m: usize) -> f64 {
    if m == 0 {
        return 0.5;
    }
    let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    HermiteSeries::basis(m - 1).eval(0.0) * phi0 / (m as f64).sqrt()
}

/// `E[y act'(v) (u - kappa v)]` for `(u, v)` standard normals with correlation
/// `kappa`, i.e. the correlational part of one step, ReLU component included.
pub fn csq_mean(link: &LinkSpec, sigma: &ActivationSpec, kappa: f64) -> f64 {
    let a = link.series();
    let dser = sigma.deriv_series();
    let one_minus = 1.0 - kappa * kappa;
    (1..a.coeffs().len())
        .map(|k| {
            let deriv_coeff = dser.coeff(k - 1) + sigma.relu_mix * step_coeff(k - 1);
            a.coeff(k) * deriv_coeff * (k as f64).sqrt() * kappa.powi(k as i32 - 1) * one_minus
        })
        .sum()
}

fn quadrature_nodes(degree: usize) -> usize {
    ((degree + 2) / 2 + 2).min(MAX_NODES)
}

/// Expected pair-step gain to second order in `eps = eta (1 - xi)`, returning
/// `(first-order coefficient, second-order normalization coefficient)` so that
/// the gain is `eps * first - eps^2 * second`.
fn drift_by_quadrature(
    link: &LinkSpec,
    sigma: &ActivationSpec,
    kappa: f64,
    eta: f64,
    d: usize,
    noise_std: f64,
) -> Result<(f64, f64), DiagnosticsError> {
    let act = &sigma.series;
    let deg = act.degree().unwrap_or(0).max(1);
    let q = link.degree().max(1);
    let derivs: Vec<HermiteSeries> = (1..=deg).map(|k| act.nth_derivative(k)).collect();
    let kmax = deg; // act' has degree deg-1, so its Taylor series has deg terms.
    let moments: Vec<f64> = (0..=2 * kmax + 1).map(|k| chi_square_moment(d - 2, k)).collect();
    let poly_degree = 2 * (deg - 1) * (q + deg + 1) + 2 * q + 4;
    let rule = gauss_hermite_rule(quadrature_nodes(poly_degree))?;
    let noise_rule = if noise_std > 0.0 { Some(gauss_hermite_rule(quadrature_nodes(poly_degree))?) } else { None };
    let s = (1.0 - kappa * kappa).sqrt();
    let inv_fact: Vec<f64> = (0..=kmax).map(|k| (-ln_factorial(k)).exp()).collect();
    let (noise_nodes, noise_weights): (Vec<f64>, Vec<f64>) = match &noise_rule {
        Some(r) => (r.nodes.clone(), r.weights.clone()),
        None => (vec![0.0], vec![1.0]),
    };
    let mut first = 0.0;
    let mut second = 0.0;
    let mut taylor = vec![0.0; kmax];
    let mut poly = vec![0.0; kmax];
    for (&v, &wv) in rule.nodes.iter().zip(&rule.weights) {
        let sp = derivs[0].eval(v);
        for (&z, &wz) in rule.nodes.iter().zip(&rule.weights) {
            let u = kappa * v + s * z;
            let clean = link.eval(u);
            for (&e, &we) in noise_nodes.iter().zip(&noise_weights) {
                let weight = wv * wz * we;
                let y = clean + noise_std * e;
                let b = eta * y * sp;
                let a = v + b * z * z;
                // act'(a + b chi) = sum_k taylor[k] chi^k
                for k in 0..kmax {
                    taylor[k] = derivs[k].eval(a) * b.powi(k as i32) * inv_fact[k];
                }
                let second_step: f64 = (0..kmax).map(|k| taylor[k] * moments[k]).sum();
                first += weight * y * s * z * (sp + second_step);
                // Q(chi) = y sp + y act'(a + b chi); E[Q^2 (z^2 + chi)].
                for k in 0..kmax {
                    poly[k] = y * taylor[k];
                }
                poly[0] += y * sp;
                let mut acc = 0.0;
                for i in 0..kmax {
                    for j in 0..kmax {
                        let c = poly[i] * poly[j];
                        acc += c * (z * z * moments[i + j] + moments[i + j + 1]);
                    }
                }
                second += weight * 0.5 * kappa * acc;
            }
        }
    }
    Ok((first, second))
}

/// Pair-step gain from a unit weight at overlap `kappa`: two correlation steps of
/// size `eta` on one fresh sample, both projected against the starting weight,
/// then interpolation with `xi` and renormalization, as in the trainer.
#[allow(clippy::too_many_arguments)]
pub fn population_gain(
    link: &LinkSpec,
    sigma: &ActivationSpec,
    kappa: f64,
    eta: f64,
    xi: f64,
    d: usize,
    noise_std: f64,
    n_mc: usize,
    seed: u64,
) -> Result<GainEstimate, DiagnosticsError> {
    if n_mc == 0 {
        return Err(DiagnosticsError::NoSamples);
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(DiagnosticsError::Overlap(kappa));
    }
    if d < 3 {
        return Err(DiagnosticsError::Argument(format!("dimension must be at least 3, got {d}")));
    }
    let eps = eta * (1.0 - xi);
    if eps == 0.0 {
        return Err(DiagnosticsError::Argument("eta * (1 - xi) must be nonzero".into()));
    }
    let s = (1.0 - kappa * kappa).sqrt();
    let csq = csq_mean(link, sigma, kappa);
    let chi = ChiSquared::new((d - 2) as f64).map_err(|e| DiagnosticsError::Argument(e.to_string()))?;
    const SHARD: usize = 1 << 15;
    let shards = n_mc.div_ceil(SHARD);
    let sums: Vec<[f64; 4]> = (0..shards)
        .into_par_iter()
        .map(|sh| {
            let mut r = rng::stream_at(seed, 0, Purpose::Diagnostics, sh as u64);
            let count = SHARD.min(n_mc - sh * SHARD);
            let mut acc = [0.0; 4];
            for _ in 0..count {
                let v: f64 = r.sample(StandardNormal);
                let z: f64 = r.sample(StandardNormal);
                let rest = chi.sample(&mut r);
                let noise = if noise_std > 0.0 { noise_std * r.sample::<f64, _>(StandardNormal) } else { 0.0 };
                let y = link.eval(kappa * v + s * z) + noise;
                let px2 = z * z + rest;
                let tpx = s * z;
                let c1 = eta * y * sigma.deriv(v);
                let c2 = eta * y * sigma.deriv(v + c1 * px2);
                let m = (1.0 - xi) * (c1 + c2);
                let qn = (1.0 + m * m * px2).sqrt();
                let gain = m * tpx / qn - kappa * m * m * px2 / (qn * (1.0 + qn));
                let adjusted = gain / eps - 2.0 * y * sigma.deriv(v) * tpx + 2.0 * csq;
                acc[0] += gain;
                acc[1] += gain * gain;
                acc[2] += adjusted;
                acc[3] += adjusted * adjusted;
            }
            acc
        })
        .collect();
    let tot = sums.iter().fold([0.0; 4], |mut a, s| {
        for i in 0..4 {
            a[i] += s[i];
        }
        a
    });
    let n = n_mc as f64;
    let stats = |sum: f64, sq: f64| {
        let mean = sum / n;
        let var = ((sq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
        (mean, (var / n).sqrt())
    };
    let (raw_mean, raw_se) = stats(tot[0], tot[1]);
    let (adj_mean, adj_se) = stats(tot[2], tot[3]);
    let (first, second) = drift_by_quadrature(link, sigma, kappa, eta, d, noise_std)?;
    Ok(GainEstimate {
        mean: eps * adj_mean,
        std_error: eps.abs() * adj_se,
        count: n_mc,
        raw_mean,
        raw_std_error: raw_se,
        analytic_leading_term: eps * leading_drift(link, sigma, kappa, eta, d)?,
        analytic_drift: eps * first - eps * eps * second,
        signal_constant: signal_constant(link, sigma)?,
    })
}

/// Lowest-order drift per unit interpolated step. Without a label power it is
/// the correlational term of both steps; with power `I` it is the term of order
/// `eta^(I-1)` that couples `link^I` to `act^(I) act'^(I-1)`.
pub fn leading_drift(
    link: &LinkSpec,
    sigma: &ActivationSpec,
    kappa: f64,
    eta: f64,
    d: usize,
) -> Result<f64, DiagnosticsError> {
    let power = link.reduction_power();
    let p_star = link.reduced_exponent();
    let act = &sigma.series;
    let geometry = kappa.powi(p_star as i32 - 1) * (1.0 - kappa * kappa);
    if power == 1 {
        let b = act.coeff(p_star);
        return Ok(2.0 * p_star as f64 * link.series().coeff(p_star) * b * geometry);
    }
    let link_side = link.series().power(power)?.coeff(p_star);
    let act_side = crate::exponents::weak_recovery_functional(act, power, p_star - 1)?;
    let scale = eta.powi(power as i32 - 1) * chi_square_moment(d - 2, power - 1) / ln_factorial(power - 1).exp();
    Ok(scale * (p_star as f64).sqrt() * link_side * act_side * geometry)
}

/// The signal constant in its textbook form (see [`GainEstimate::signal_constant`]).
pub fn signal_constant(link: &LinkSpec, sigma: &ActivationSpec) -> Result<f64, DiagnosticsError> {
    let power = link.reduction_power();
    let p_star = link.reduced_exponent();
    let fact = ln_factorial(p_star).exp();
    if power == 1 {
        return Ok(fact * link.series().coeff(p_star) * sigma.series.coeff(p_star));
    }
    let link_side = link.series().power(power)?.coeff(p_star);
    let act_side = crate::exponents::weak_recovery_functional(&sigma.series, power, p_star - 1)?;
    Ok(fact * link_side * act_side / (2.0 * ln_factorial(power - 1).exp()))
}

/// Fraction of uniform unit vectors with `<w, e_1> >= 2 c2 / sqrt(d)`.
pub fn init_tail_fraction(d: usize, n_trials: usize, c2: f64, seed: u64) -> Result<f64, DiagnosticsError> {
    if d < 2 || n_trials == 0 {
        return Err(DiagnosticsError::Argument(format!("need d >= 2 and trials > 0 (d={d}, trials={n_trials})")));
    }
    let cut = 2.0 * c2 / (d as f64).sqrt();
    let chi = ChiSquared::new((d - 1) as f64).map_err(|e| DiagnosticsError::Argument(e.to_string()))?;
    let mut r = rng::stream(seed, 0, Purpose::Diagnostics);
    let mut hits = 0usize;
    for _ in 0..n_trials {
        // First coordinate of a normalized Gaussian vector.
        let x: f64 = r.sample(StandardNormal);
        let rest = chi.sample(&mut r);
        if x / (x * x + rest).sqrt() >= cut {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_trials as f64)
}

/// Closed form `a0 / (1 - c (p-2) a0^(p-2) t)^(1/(p-2))` for `t = 0..=steps`.
///
/// This is the solution of `a' = c a^(p-1)`. It bounds from below any sequence with
/// `a_{t+1} >= a_t + c a_{t+1}^(p-1)`. The explicit recurrence
/// `a_{t+1} = a_t + c a_t^(p-1)` lags it slightly (by a relative `O(c a^(p-2))`),
/// because its increment uses the left end of each interval.
pub fn bihari_lasalle_lower(a0: f64, c: f64, p: u32, steps: usize) -> Result<Vec<f64>, DiagnosticsError> {
    if a0 <= 0.0 || c < 0.0 || p < 3 {
        return Err(DiagnosticsError::Argument("need a0 > 0, c >= 0 and p >= 3".into()));
    }
    let k = (p - 2) as f64;
    let rate = c * k * a0.powf(k);
    if rate * steps as f64 >= 1.0 {
        return Err(DiagnosticsError::Blowup { steps });
    }
    Ok((0..=steps).map(|t| a0 / (1.0 - rate * t as f64).powf(1.0 / k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_activation_has_no_higher_terms() {
        let sigma = ActivationSpec::polynomial(vec![0.0, 1.0]);
        let w = [1.0, 0.0, 0.0];
        let theta = [0.6, 0.8, 0.0];
        let t = two_step_expansion_terms(&sigma, &w, &theta, &[0.3, -1.0, 2.0], 0.7, 0.1);
        assert_eq!(t.terms.len(), 1);
        assert!((t.reconstruction(0.1) - t.realized_unprojected).abs() < 1e-14);
    }

    #[test]
    fn zero_rate_reduces_to_correlational_term() {
        let sigma = ActivationSpec::polynomial(vec![0.0, 0.3, 0.5, 0.2]);
        let w = [1.0, 0.0];
        let theta = [0.0, 1.0];
        let t = two_step_expansion_terms(&sigma, &w, &theta, &[0.4, 1.1], -0.9, 0.0);
        assert_eq!(t.terms[0], t.csq);
        assert!(t.terms[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn chi_moments() {
        assert_eq!(chi_square_moment(5, 0), 1.0);
        assert_eq!(chi_square_moment(5, 1), 5.0);
        assert_eq!(chi_square_moment(5, 2), 35.0);
    }

    #[test]
    fn csq_mean_matches_quadrature() {
        let link = LinkSpec::new(HermiteSeries::new(vec![0.0, 0.2, 0.7, 0.5])).unwrap();
        let sigma = ActivationSpec::polynomial(vec![0.1, -0.3, 0.4, 0.6]);
        let kappa: f64 = 0.35;
        let s = (1.0 - kappa * kappa).sqrt();
        let rule = gauss_hermite_rule(20).unwrap();
        let mut q = 0.0;
        for (v, wv) in rule.nodes.iter().zip(&rule.weights) {
            for (z, wz) in rule.nodes.iter().zip(&rule.weights) {
                q += wv * wz * link.eval(kappa * v + s * z) * sigma.deriv(*v) * s * z;
            }
        }
        assert!((csq_mean(&link, &sigma, kappa) - q).abs() < 1e-12);
    }

    #[test]
    fn step_coefficients_match_quadrature_limit() {
        // E[1{z>0} z] = phi(0).
        assert!((step_coeff(1) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(step_coeff(2), 0.0);
    }

    #[test]
    fn leading_term_is_linear_for_quadratic_links() {
        let link = LinkSpec::hermite(2);
        let sigma = ActivationSpec::polynomial(vec![0.0, 0.0, 1.0]);
        let a = leading_drift(&link, &sigma, 0.2, 0.01, 64).unwrap() / (1.0 - 0.04);
        let b = leading_drift(&link, &sigma, 0.1, 0.01, 64).unwrap() / (1.0 - 0.01);
        assert!((a / b - 2.0).abs() < 1e-12);
        let zero = ActivationSpec::polynomial(vec![0.0, 1.0]);
        assert_eq!(leading_drift(&link, &zero, 0.2, 0.01, 64).unwrap(), 0.0);
        assert_eq!(signal_constant(&link, &zero).unwrap(), 0.0);
    }

    #[test]
    fn tail_fraction_basics() {
        let f = init_tail_fraction(64, 20_000, 0.0, 3).unwrap();
        assert!((f - 0.5).abs() < 4.0 * (0.25f64 / 20_000.0).sqrt());
    }

    #[test]
    fn bihari_lasalle_examples() {
        let (a0, c) = (0.01, 1e-4);
        let b = bihari_lasalle_lower(a0, c, 3, 1000).unwrap();
        assert_eq!(b[0], a0);
        // Implicit recurrence a' = a + c a'^2 dominates the closed form.
        let mut a = a0;
        for t in 0..=1000 {
            assert!(a >= b[t] * (1.0 - 1e-15));
            a = 2.0 * a / (1.0 + (1.0 - 4.0 * c * a).sqrt());
        }
        // The explicit one stays within a relative 1e-8 below it.
        let mut a = a0;
        for t in 0..=1000 {
            assert!(a <= b[t] && a >= b[t] * (1.0 - 1e-8));
            a += c * a * a;
        }
        assert!(bihari_lasalle_lower(0.01, 0.0, 3, 10).unwrap().iter().all(|v| *v == 0.01));
        assert!(matches!(bihari_lasalle_lower(0.5, 1.0, 3, 10), Err(DiagnosticsError::Blowup { .. })));
    }
}
