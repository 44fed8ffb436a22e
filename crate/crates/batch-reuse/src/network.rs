//! Two-layer student `f(x) = (1/N) sum_j a_j act_j(<x, w_j> + b_j)` with per-neuron
//! randomized polynomial activations.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hermite::HermiteSeries;
use crate::linalg::dot;
use crate::rng::{self, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("{0}")]
    Family(String),
    #[error("network needs at least one neuron and dimension >= 2 (got N={n}, d={d})")]
    Shape { n: usize, d: usize },
    #[error("expected {expected} activations, got {got}")]
    ActivationCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ActivationRepr {
    series: HermiteSeries,
    #[serde(default)]
    relu_mix: f64,
}

/// `act(z) = sum_i coeffs[i] he_i(z) + relu_mix * max(z, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ActivationRepr", into = "ActivationRepr")]
pub struct ActivationSpec {
    pub series: HermiteSeries,
    pub relu_mix: f64,
    deriv: HermiteSeries,
}

impl From<ActivationRepr> for ActivationSpec {
    fn from(r: ActivationRepr) -> Self {
        Self::new(r.series, r.relu_mix)
    }
}

impl From<ActivationSpec> for ActivationRepr {
    fn from(s: ActivationSpec) -> Self {
        Self { series: s.series, relu_mix: s.relu_mix }
    }
}

impl ActivationSpec {
    pub fn new(series: HermiteSeries, relu_mix: f64) -> Self {
        let deriv = series.derivative();
        Self { series, relu_mix, deriv }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::new(HermiteSeries::new(coeffs), 0.0)
    }

    pub fn degree(&self) -> usize {
        self.series.degree().unwrap_or(0)
    }

    pub fn eval(&self, z: f64) -> f64 {
        let relu = if self.relu_mix > 0.0 { self.relu_mix * z.max(0.0) } else { 0.0 };
        self.series.eval(z) + relu
    }

    /// Derivative, with the ReLU subgradient at zero fixed to 0.
    pub fn deriv(&self, z: f64) -> f64 {
        let step = if self.relu_mix > 0.0 && z > 0.0 { self.relu_mix } else { 0.0 };
        self.deriv.eval(z) + step
    }

    /// Derivative of the polynomial part as a series.
    pub fn deriv_series(&self) -> &HermiteSeries {
        &self.deriv
    }
}

/// `activation_deriv` in free-function form.
pub fn activation_deriv(spec: &ActivationSpec, z: f64) -> f64 {
    spec.deriv(z)
}

/// Randomized activation constructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationFamily {
    /// Independent random signs on fixed magnitudes for degrees `0..=degree`.
    HermiteRademacher {
        degree: usize,
        /// Per-degree magnitudes; defaults to `1/sqrt(degree+1)` each.
        #[serde(default)]
        magnitudes: Option<Vec<f64>>,
    },
    /// Two equiprobable branches: a dominant linear term with small higher terms,
    /// or small low terms with the top two degrees dominant and sharing a sign.
    DiscreteMixture {
        /// Size of the "small" coefficients.
        small: f64,
        /// Label power bound used to size the degree.
        power_bound: usize,
    },
    /// Construction indexed by the link's exponent, reduced exponent and power,
    /// with a ReLU component added half of the time.
    GeneralLink {
        info_exponent: usize,
        reduced_exponent: usize,
        power: usize,
        small: f64,
        relu_mix: f64,
    },
    /// The same activation for every neuron.
    Fixed {
        coeffs: Vec<f64>,
        #[serde(default)]
        relu_mix: f64,
    },
}

fn sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Smallest odd integer at least `max(power_bound + 1, q + 2, 3)`.
pub fn mixture_degree(q: usize, power_bound: usize) -> usize {
    let m = (power_bound + 1).max(q + 2).max(3);
    if m % 2 == 1 {
        m
    } else {
        m + 1
    }
}

pub fn sample_activation<R: Rng + ?Sized>(
    q: usize,
    family: &ActivationFamily,
    rng: &mut R,
) -> Result<ActivationSpec, NetworkError> {
    if q == 0 {
        return Err(NetworkError::Family("link degree must be at least 1".into()));
    }
    Ok(match family {
        ActivationFamily::HermiteRademacher { degree, magnitudes } => {
            let r = match magnitudes {
                Some(m) if m.len() != degree + 1 => {
                    return Err(NetworkError::Family(format!(
                        "need {} magnitudes, got {}",
                        degree + 1,
                        m.len()
                    )))
                }
                Some(m) => m.clone(),
                None => vec![1.0 / ((degree + 1) as f64).sqrt(); degree + 1],
            };
            ActivationSpec::polynomial(r.iter().map(|&m| sign(rng) * m).collect())
        }
        ActivationFamily::DiscreteMixture { small, power_bound } => {
            let top = mixture_degree(q, *power_bound);
            let mut c = vec![0.0; top + 1];
            if rng.random::<bool>() {
                c[1] = sign(rng);
                for v in c.iter_mut().take(top + 1).skip(2) {
                    *v = sign(rng) * small;
                }
            } else {
                for v in c.iter_mut().take(top - 1).skip(1) {
                    *v = sign(rng) * small;
                }
                let s = sign(rng);
                c[top - 1] = s;
                c[top] = s;
            }
            ActivationSpec::polynomial(c)
        }
        ActivationFamily::GeneralLink { info_exponent, reduced_exponent, power, small, relu_mix } => {
            let mut c;
            if rng.random::<bool>() {
                let top = (reduced_exponent + power - 1).max(1);
                c = vec![0.0; top + 1];
                for v in c.iter_mut().skip(2) {
                    *v = sign(rng) * small;
                }
                c[1] = sign(rng);
            } else {
                let top = (reduced_exponent + power).max(*info_exponent).max(2);
                c = vec![0.0; top + 1];
                c[1] = sign(rng);
                c[2] = sign(rng) * small;
                for v in c.iter_mut().skip(3) {
                    *v = sign(rng) * small * small;
                }
            }
            let mix = if rng.random::<bool>() { *relu_mix } else { 0.0 };
            ActivationSpec::new(HermiteSeries::new(c), mix)
        }
        ActivationFamily::Fixed { coeffs, relu_mix } => {
            ActivationSpec::new(HermiteSeries::new(coeffs.clone()), *relu_mix)
        }
    })
}

/// Student parameters. Weight rows are stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub prev_even: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub activations: Vec<ActivationSpec>,
}

/// Rows uniform on the sphere, `a_j = +-c_a`, zero biases, linear placeholder activations.
pub fn init_network(n: usize, d: usize, c_a: f64, seed: u64) -> Result<NetworkState, NetworkError> {
    if n == 0 || d < 2 {
        return Err(NetworkError::Shape { n, d });
    }
    let mut weights = Vec::with_capacity(n * d);
    let mut a = Vec::with_capacity(n);
    for j in 0..n {
        let mut r = rng::stream_at(seed, 0, Purpose::Init, j as u64);
        weights.extend(rng::unit_vector(&mut r, d));
        a.push(sign(&mut r) * c_a);
    }
    Ok(NetworkState {
        dim: d,
        prev_even: weights.clone(),
        weights,
        a,
        b: vec![0.0; n],
        activations: vec![ActivationSpec::polynomial(vec![0.0, 1.0]); n],
    })
}

impl NetworkState {
    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.dim..(j + 1) * self.dim]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.weights[j * self.dim..(j + 1) * self.dim]
    }

    pub fn set_activations(&mut self, acts: Vec<ActivationSpec>) -> Result<(), NetworkError> {
        if acts.len() != self.width() {
            return Err(NetworkError::ActivationCount { expected: self.width(), got: acts.len() });
        }
        self.activations = acts;
        Ok(())
    }

    /// Draws one activation per neuron from the family, neuron `j` using counter `j`.
    pub fn sample_activations(
        &mut self,
        q: usize,
        family: &ActivationFamily,
        seed: u64,
    ) -> Result<(), NetworkError> {
        let acts = (0..self.width())
            .map(|j| sample_activation(q, family, &mut rng::stream_at(seed, 0, Purpose::Activation, j as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        self.set_activations(acts)
    }

    /// `b_j ~ Unif[-c_b, c_b]`.
    pub fn sample_biases(&mut self, c_b: f64, seed: u64) {
        let mut r = rng::stream(seed, 0, Purpose::Bias);
        for b in self.b.iter_mut() {
            *b = if c_b > 0.0 { r.random_range(-c_b..=c_b) } else { 0.0 };
        }
    }

    /// `<w_j, theta>` for every neuron.
    pub fn overlaps(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.width()).map(|j| dot(self.row(j), theta)).collect()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let n = self.width();
        let s: f64 = (0..n)
            .map(|j| self.a[j] * self.activations[j].eval(dot(self.row(j), x) + self.b[j]))
            .sum();
        s / n as f64
    }

    /// Gradient of `(f(x) - y)^2` with respect to every weight row, row-major.
    pub fn squared_loss_grad(&self, x: &[f64], y: f64) -> Vec<f64> {
        let n = self.width();
        let resid = self.forward(x) - y;
        let mut g = vec![0.0; n * self.dim];
        for j in 0..n {
            let z = dot(self.row(j), x) + self.b[j];
            let c = 2.0 * resid * self.a[j] / n as f64 * self.activations[j].deriv(z);
            for (gi, xi) in g[j * self.dim..(j + 1) * self.dim].iter_mut().zip(x) {
                *gi = c * xi;
            }
        }
        g
    }
}

/// `forward` in free-function form.
pub fn forward(state: &NetworkState, x: &[f64]) -> f64 {
    state.forward(x)
}
