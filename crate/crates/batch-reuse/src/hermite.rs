//! Algebra over the normalized probabilists' Hermite basis `he_j = He_j / sqrt(j!)`,
//! which is orthonormal under the standard Gaussian measure.
//!
//! Products use the closed-form linearization coefficients, so no detour through
//! the power basis is needed. Gaussian expectations of arbitrary callables go
//! through cached Gauss–Hermite rules.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative threshold below which a coefficient is treated as zero.
pub const ZERO_RTOL: f64 = 1e-10;
/// Largest degree a product or power may reach unless a caller asks for more.
pub const DEFAULT_DEGREE_CAP: usize = 64;
/// Largest Gauss–Hermite rule we are willing to build.
pub const MAX_NODES: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HermiteError {
    #[error("product degree {degree} exceeds the cap of {cap}")]
    DegreeCap { degree: usize, cap: usize },
    #[error("quadrature needs {nodes} nodes but the cap is {cap}")]
    NodeCap { nodes: usize, cap: usize },
    #[error("a polynomial degree hint is required to integrate a callable exactly")]
    MissingDegreeHint,
}

/// Finite expansion `sum_i coeffs[i] * he_i(z)`.
///
/// Trailing exact zeros are dropped on construction, so `degree` is the index of
/// the last stored entry and the zero series has no coefficients at all.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct HermiteSeries {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for HermiteSeries {
    fn from(coeffs: Vec<f64>) -> Self {
        Self::new(coeffs)
    }
}

impl From<HermiteSeries> for Vec<f64> {
    fn from(s: HermiteSeries) -> Self {
        s.coeffs
    }
}

impl HermiteSeries {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    /// The single basis element `he_j`.
    pub fn basis(j: usize) -> Self {
        let mut c = vec![0.0; j + 1];
        c[j] = 1.0;
        Self { coeffs: c }
    }

    /// Series whose coefficients are given in the unnormalized `He_j` basis.
    pub fn from_unnormalized(unnorm: &[f64]) -> Self {
        let c = unnorm
            .iter()
            .enumerate()
            .map(|(j, &v)| v * (0.5 * ln_factorial(j)).exp())
            .collect();
        Self::new(c)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient on `he_j`; zero past the end.
    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// L2(gamma) norm, which by orthonormality is the Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// True when `|c| <= ZERO_RTOL * max(1, ||self||)`.
    pub fn is_negligible(&self, c: f64) -> bool {
        c.abs() <= ZERO_RTOL * self.norm().max(1.0)
    }

    pub fn scale(&self, f: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * f).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new((0..n).map(|j| self.coeff(j) + other.coeff(j)).collect())
    }

    /// Rescaled copy with unit L2 norm; the zero series is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            self.scale(1.0 / n)
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let mut acc = 0.0;
        let (mut prev, mut cur) = (0.0, 1.0);
        for (k, &c) in self.coeffs.iter().enumerate() {
            acc += c * cur;
            let next = (z * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
            prev = cur;
            cur = next;
        }
        acc
    }

    /// `c * he_j` becomes `c * sqrt(j) * he_{j-1}`.
    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| c * (j as f64).sqrt())
                .collect(),
        )
    }

    /// `k`-th derivative.
    pub fn nth_derivative(&self, k: usize) -> Self {
        (0..k).fold(self.clone(), |s, _| s.derivative())
    }

    pub fn multiply(&self, other: &Self) -> Result<Self, HermiteError> {
        self.multiply_capped(other, DEFAULT_DEGREE_CAP)
    }

    pub fn multiply_capped(&self, other: &Self, cap: usize) -> Result<Self, HermiteError> {
        let (Some(da), Some(db)) = (self.degree(), other.degree()) else {
            return Ok(Self::zero());
        };
        if da + db > cap {
            return Err(HermiteError::DegreeCap { degree: da + db, cap });
        }
        let mut out = vec![0.0; da + db + 1];
        for (m, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (n, &b) in other.coeffs.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                for k in 0..=m.min(n) {
                    out[m + n - 2 * k] += a * b * linearization(m, n, k);
                }
            }
        }
        Ok(Self::new(out))
    }

    pub fn power(&self, i: usize) -> Result<Self, HermiteError> {
        self.power_capped(i, DEFAULT_DEGREE_CAP)
    }

    pub fn power_capped(&self, i: usize, cap: usize) -> Result<Self, HermiteError> {
        if let Some(d) = self.degree() {
            if d * i > cap {
                return Err(HermiteError::DegreeCap { degree: d * i, cap });
            }
        }
        let mut acc = Self::basis(0);
        for _ in 0..i {
            acc = acc.multiply_capped(self, cap)?;
        }
        Ok(acc)
    }

    /// Change of basis from power coefficients `sum_m p[m] z^m`.
    pub fn from_monomial(power_coeffs: &[f64]) -> Self {
        let n = power_coeffs.len();
        let mut acc = vec![Neumaier::default(); n];
        for (m, &p) in power_coeffs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            // z^m = sum_k m! / (2^k k! (m-2k)!) He_{m-2k}, and He_j = sqrt(j!) he_j.
            for k in 0..=m / 2 {
                let j = m - 2 * k;
                let ln = ln_factorial(m)
                    - k as f64 * std::f64::consts::LN_2
                    - ln_factorial(k)
                    - 0.5 * ln_factorial(j);
                acc[j].add(p * ln.exp());
            }
        }
        Self::new(acc.into_iter().map(|s| s.total()).collect())
    }

    /// Power-basis coefficients of this series.
    pub fn to_monomial(&self) -> Vec<f64> {
        let n = self.coeffs.len();
        let mut acc = vec![Neumaier::default(); n];
        for (j, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for k in 0..=j / 2 {
                let ln = 0.5 * ln_factorial(j)
                    - k as f64 * std::f64::consts::LN_2
                    - ln_factorial(k)
                    - ln_factorial(j - 2 * k);
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                acc[j - 2 * k].add(sign * c * ln.exp());
            }
        }
        let mut out: Vec<f64> = acc.into_iter().map(|s| s.total()).collect();
        while out.last() == Some(&0.0) {
            out.pop();
        }
        out
    }

    /// Coefficient on `he_j`, i.e. `E[g * he_j]`.
    pub fn hermite_coeff(&self, j: usize) -> f64 {
        self.coeff(j)
    }
}

/// Coefficient of `he_{m+n-2k}` in `he_m * he_n`:
/// `sqrt(m! n! (m+n-2k)!) / (k! (m-k)! (n-k)!)`.
fn linearization(m: usize, n: usize, k: usize) -> f64 {
    let ln = 0.5 * (ln_factorial(m) + ln_factorial(n) + ln_factorial(m + n - 2 * k))
        - ln_factorial(k)
        - ln_factorial(m - k)
        - ln_factorial(n - k);
    ln.exp()
}

const LN_FACT_LEN: usize = 4 * DEFAULT_DEGREE_CAP + 2 * MAX_NODES + 8;

/// `ln(n!)`, tabulated by direct summation (exact enough well past the degree cap).
pub fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut t = vec![0.0; LN_FACT_LEN];
        for i in 1..LN_FACT_LEN {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    });
    match t.get(n) {
        Some(&v) => v,
        None => (t.len()..=n).fold(t[t.len() - 1], |acc, i| acc + (i as f64).ln()),
    }
}

/// Values `he_0(z), ..., he_n(z)`.
pub fn he_values(z: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(z);
    }
    for k in 1..n {
        let next = (z * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

#[derive(Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }
    fn total(self) -> f64 {
        self.sum + self.comp
    }
}

/// Gauss–Hermite rule for the standard normal measure (weights sum to one).
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = Neumaier::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(*x));
        }
        acc.total()
    }
}

/// Cached `n`-node rule. Each table is built once and only read afterwards.
pub fn gauss_hermite_rule(n: usize) -> Result<Arc<GaussRule>, HermiteError> {
    static CACHE: OnceLock<Vec<OnceLock<Arc<GaussRule>>>> = OnceLock::new();
    if n > MAX_NODES {
        return Err(HermiteError::NodeCap { nodes: n, cap: MAX_NODES });
    }
    let n = n.max(1);
    let cache = CACHE.get_or_init(|| (0..=MAX_NODES).map(|_| OnceLock::new()).collect());
    Ok(cache[n].get_or_init(|| Arc::new(build_rule(n))).clone())
}

// Golub–Welsch on the Jacobi matrix of the normalized recurrence, then a Newton
// polish of each node and Christoffel weights 1 / sum_k he_k(x)^2.
fn build_rule(n: usize) -> GaussRule {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));
    for x in nodes.iter_mut() {
        for _ in 0..4 {
            let h = he_values(*x, n);
            let dp = (n as f64).sqrt() * h[n - 1];
            if dp == 0.0 {
                break;
            }
            *x -= h[n] / dp;
        }
    }
    for i in 0..n / 2 {
        let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -m;
        nodes[n - 1 - i] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| 1.0 / he_values(x, n - 1).iter().map(|v| v * v).sum::<f64>())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    GaussRule { nodes, weights }
}

/// Number of nodes that integrates polynomials of the given degree exactly.
pub fn nodes_for_degree(degree: usize) -> usize {
    (degree + 2) / 2
}

/// `E_{z~N(0,1)}[f(z)]`, exact for polynomial `f` up to `degree_hint`.
pub fn gauss_hermite_expect(f: impl Fn(f64) -> f64, degree_hint: usize) -> Result<f64, HermiteError> {
    Ok(gauss_hermite_rule(nodes_for_degree(degree_hint))?.expect(f))
}

/// `H(f; j) = E[f(z) he_j(z)]` for a callable, exact when `f` is a polynomial of
/// degree at most the hint.
pub fn hermite_coeff_fn(
    f: impl Fn(f64) -> f64,
    j: usize,
    degree_hint: Option<usize>,
) -> Result<f64, HermiteError> {
    let hint = degree_hint.ok_or(HermiteError::MissingDegreeHint)?;
    let basis = HermiteSeries::basis(j);
    gauss_hermite_expect(|z| f(z) * basis.eval(z), hint + j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn eval_basics() {
        assert_eq!(HermiteSeries::basis(1).eval(1.3), 1.3);
        assert_eq!(HermiteSeries::zero().eval(7.0), 0.0);
        assert!(close(HermiteSeries::basis(2).eval(0.0), -1.0 / 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn monomial_conversions() {
        assert_eq!(HermiteSeries::from_monomial(&[0.0, 1.0]), HermiteSeries::basis(1));
        assert_eq!(HermiteSeries::from_monomial(&[1.0]), HermiteSeries::basis(0));
        let z2 = HermiteSeries::from_monomial(&[0.0, 0.0, 1.0]);
        assert!(close(z2.coeff(0), 1.0, 1e-15));
        assert!(close(z2.coeff(2), 2f64.sqrt(), 1e-15));
        // (z^3 - 3z) / sqrt(6)
        let m = HermiteSeries::basis(3).to_monomial();
        let s6 = 6f64.sqrt();
        assert!(close(m[1], -3.0 / s6, 1e-15) && close(m[3], 1.0 / s6, 1e-15));
    }

    #[test]
    fn products_match_moments() {
        let he1 = HermiteSeries::basis(1);
        let sq = he1.multiply(&he1).unwrap();
        assert!(close(sq.coeff(0), 1.0, 1e-14) && close(sq.coeff(2), 2f64.sqrt(), 1e-14));
        let he3 = HermiteSeries::basis(3);
        let p2 = he3.power(2).unwrap();
        assert!(close(p2.coeff(2), 3.0 * 2f64.sqrt(), 1e-12));
        assert_eq!(p2.coeff(1), 0.0);
        let p3 = he3.power(3).unwrap();
        assert!(close(p3.coeff(1), 324.0 / 6f64.powf(1.5), 1e-12));
        let b = HermiteSeries::new(vec![0.3, -1.2, 0.5]);
        assert_eq!(HermiteSeries::basis(0).multiply(&b).unwrap(), b);
        assert_eq!(b.power(1).unwrap(), b);
        assert_eq!(b.power(0).unwrap(), HermiteSeries::basis(0));
    }

    #[test]
    fn degree_cap_is_enforced() {
        let a = HermiteSeries::basis(40);
        assert_eq!(
            a.multiply(&a),
            Err(HermiteError::DegreeCap { degree: 80, cap: 64 })
        );
        assert!(HermiteSeries::basis(13).power(5).is_err());
    }

    #[test]
    fn derivatives() {
        assert_eq!(HermiteSeries::basis(1).derivative(), HermiteSeries::basis(0));
        assert!(HermiteSeries::basis(0).derivative().is_zero());
        let d2 = HermiteSeries::basis(2).derivative();
        assert!(close(d2.coeff(1), 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn quadrature_moments() {
        assert!(close(gauss_hermite_expect(|z| z * z, 2).unwrap(), 1.0, 1e-14));
        assert!(close(gauss_hermite_expect(|z| z.powi(8), 8).unwrap(), 105.0, 1e-13));
        let he3 = HermiteSeries::basis(3);
        assert!(close(gauss_hermite_expect(|z| he3.eval(z).powi(2), 6).unwrap(), 1.0, 1e-13));
        assert!(matches!(
            gauss_hermite_expect(|z| z, 500),
            Err(HermiteError::NodeCap { .. })
        ));
        let r = gauss_hermite_rule(MAX_NODES).unwrap();
        assert!(close(r.weights.iter().sum::<f64>(), 1.0, 1e-14));
        assert!(close(r.expect(|z| z.powi(10)), 945.0, 1e-12));
    }

    #[test]
    fn coefficient_extraction() {
        let he3 = HermiteSeries::basis(3);
        assert_eq!(he3.hermite_coeff(3), 1.0);
        assert_eq!(he3.hermite_coeff(1), 0.0);
        let c = hermite_coeff_fn(|z| he3.eval(z).powi(3), 1, Some(9)).unwrap();
        assert!(close(c, 324.0 / 6f64.powf(1.5), 1e-12));
        assert_eq!(
            hermite_coeff_fn(|z| z, 1, None),
            Err(HermiteError::MissingDegreeHint)
        );
    }

    #[test]
    fn unnormalized_input() {
        // He_2 + He_3 in the unnormalized basis.
        let s = HermiteSeries::from_unnormalized(&[0.0, 0.0, 1.0, 1.0]);
        assert!(close(s.coeff(2), 2f64.sqrt(), 1e-15));
        assert!(close(s.coeff(3), 6f64.sqrt(), 1e-15));
        assert!(close(s.eval(1.5), 1.5f64.powi(2) - 1.0 + 1.5f64.powi(3) - 4.5, 1e-14));
    }
}
