//! Count distributions behind the hurdle model.
//!
//! The positive part of the model is a finite mixture of degenerate spikes at
//! a set of inflated values plus a zero-truncated NB2 distribution. NB2 here
//! is parameterized by its mean `lambda` and size `theta`, so that
//! `Var(Y) = lambda * (1 + lambda / theta)` and
//! `Pr(Y = 0) = (1 + lambda / theta)^(-theta)`.
//!
//! Everything is evaluated in log space; the `*_pmf` functions exponentiate
//! only on return.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Lower bound applied to `theta` inside likelihood evaluation.
pub const THETA_FLOOR: f64 = 1e-8;

/// Below this count the gamma-function ratios are summed term by term.
const SMALL_COUNT: u64 = 64;

/// Location and size of an NB2 distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nb2Params {
    lambda: f64,
    theta: f64,
}

impl Nb2Params {
    pub fn new(lambda: f64, theta: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Domain(format!("lambda must be finite and positive, got {lambda}")));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::Domain(format!("theta must be finite and positive, got {theta}")));
        }
        Ok(Self { lambda, theta })
    }

    /// Builds parameters from linear predictors, clamping `theta` at
    /// [`THETA_FLOOR`]. The flag reports whether the clamp was applied.
    pub(crate) fn from_log_links(log_lambda: f64, log_theta: f64) -> (Self, bool) {
        let lambda = log_lambda.clamp(-700.0, 700.0).exp();
        let theta = log_theta.min(700.0).exp();
        if theta < THETA_FLOOR || theta.is_nan() {
            (Self { lambda, theta: THETA_FLOOR }, true)
        } else {
            (Self { lambda, theta }, false)
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Variance of the untruncated distribution.
    pub fn variance(&self) -> f64 {
        self.lambda * (1.0 + self.lambda / self.theta)
    }

    /// `ln Pr(Y = 0) = -theta * ln(1 + lambda / theta)`.
    pub fn log_prob_zero(&self) -> f64 {
        -self.theta * (self.lambda / self.theta).ln_1p()
    }
}

/// Sorted set of inflated count values, each at least 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct InflatedValueSet {
    values: Vec<u64>,
}

impl InflatedValueSet {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|&&v| v == 0) {
            return Err(Error::Domain(format!("inflated values must be >= 1, got {bad}")));
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!(
                "inflated values must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { values })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of mixture components, spikes plus the TNB regime.
    pub fn components(&self) -> usize {
        self.values.len() + 1
    }

    /// Position of `y` within the set, if it is an inflated value.
    pub fn index_of(&self, y: u64) -> Option<usize> {
        self.values.binary_search(&y).ok()
    }
}

impl TryFrom<Vec<u64>> for InflatedValueSet {
    type Error = Error;

    fn try_from(values: Vec<u64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<InflatedValueSet> for Vec<u64> {
    fn from(set: InflatedValueSet) -> Self {
        set.values
    }
}

/// Regime probabilities of the mixture. The last entry is the TNB weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Domain("mixture weights must be strictly positive".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("mixture weights sum to {total}, not 1")));
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { probs, log_probs })
    }

    /// Multinomial logit with the TNB regime as reference category:
    /// `p_j = exp(eta_j) / (1 + sum_m exp(eta_m))`, `p_M = 1 / (1 + sum_m exp(eta_m))`.
    pub fn from_linear_predictors(eta: &[f64]) -> Self {
        let log_probs = log_softmax_with_reference(eta);
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self { probs, log_probs }
    }

    /// The single-component mixture (pure TNB).
    pub fn tnb_only() -> Self {
        Self {
            probs: vec![1.0],
            log_probs: vec![0.0],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn components(&self) -> usize {
        self.probs.len()
    }

    /// Weight of the TNB regime.
    pub fn tnb_weight(&self) -> f64 {
        *self.probs.last().expect("non-empty mixture")
    }

    pub fn log_tnb_weight(&self) -> f64 {
        *self.log_probs.last().expect("non-empty mixture")
    }
}

/// Log-probabilities for `M - 1` linear predictors plus a reference category
/// with predictor 0, appended last.
pub(crate) fn log_softmax_with_reference(eta: &[f64]) -> Vec<f64> {
    let max = eta.iter().copied().fold(0.0_f64, f64::max);
    let denom = (-max).exp() + eta.iter().map(|e| (e - max).exp()).sum::<f64>();
    let log_denom = max + denom.ln();
    eta.iter()
        .map(|e| e - log_denom)
        .chain(std::iter::once(-log_denom))
        .collect()
}

pub(crate) fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln(1 - exp(a))` for `a <= 0`.
pub(crate) fn log1m_exp(a: f64) -> f64 {
    if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

/// `ln Gamma(j + theta) - ln Gamma(theta) - ln Gamma(j + 1)`.
pub(crate) fn log_gamma_ratio(j: u64, theta: f64) -> f64 {
    if j < SMALL_COUNT {
        (0..j)
            .map(|k| {
                let k = k as f64;
                ((theta + k) / (k + 1.0)).ln()
            })
            .sum()
    } else {
        let jf = j as f64;
        ln_gamma(jf + theta) - ln_gamma(theta) - ln_gamma(jf + 1.0)
    }
}

/// `psi(j + theta) - psi(theta)`.
pub(crate) fn digamma_diff(j: u64, theta: f64) -> f64 {
    if j < SMALL_COUNT {
        (0..j).map(|k| 1.0 / (theta + k as f64)).sum()
    } else {
        digamma(j as f64 + theta) - digamma(theta)
    }
}

/// `ln Pr(Y = j)` under NB2 with mean `lambda` and size `theta`.
pub fn nb2_logpmf(j: u64, params: Nb2Params) -> f64 {
    let Nb2Params { lambda, theta } = params;
    let mut out = log_gamma_ratio(j, theta) + params.log_prob_zero();
    if j > 0 {
        out -= j as f64 * (theta / lambda).ln_1p();
    }
    out
}

pub fn nb2_pmf(j: u64, params: Nb2Params) -> f64 {
    nb2_logpmf(j, params).exp()
}

/// `ln(1 - Pr(Y = 0))`, erroring when the zero mass is numerically one.
fn log_positive_mass(params: Nb2Params) -> Result<f64> {
    let log_p0 = params.log_prob_zero();
    if log_p0.exp() >= 1.0 - 1e-15 {
        return Err(Error::Degenerate(format!(
            "NB2 zero probability is numerically 1 (lambda = {})",
            params.lambda
        )));
    }
    Ok(log1m_exp(log_p0))
}

/// Zero-truncated NB2 log-pmf for `j >= 1`.
pub fn tnb_logpmf(j: u64, params: Nb2Params) -> Result<f64> {
    if j == 0 {
        return Err(Error::Domain("truncated pmf is defined for j >= 1".into()));
    }
    Ok(nb2_logpmf(j, params) - log_positive_mass(params)?)
}

pub fn tnb_pmf(j: u64, params: Nb2Params) -> Result<f64> {
    tnb_logpmf(j, params).map(f64::exp)
}

/// Mean of the zero-truncated NB2, `lambda / (1 - (1 + lambda/theta)^(-theta))`.
pub fn tnb_mean(params: Nb2Params) -> Result<f64> {
    Ok(params.lambda / log_positive_mass(params)?.exp())
}

fn check_alignment(weights: &MixtureWeights, inflated: &InflatedValueSet) -> Result<()> {
    if weights.components() != inflated.components() {
        return Err(Error::DimensionMismatch(format!(
            "{} mixture weights for {} inflated values (expected {})",
            weights.components(),
            inflated.len(),
            inflated.components()
        )));
    }
    Ok(())
}

/// Log-pmf of the MITNB mixture at `j >= 1`.
pub fn mitnb_logpmf(
    j: u64,
    weights: &MixtureWeights,
    params: Nb2Params,
    inflated: &InflatedValueSet,
) -> Result<f64> {
    check_alignment(weights, inflated)?;
    let log_tnb = weights.log_tnb_weight() + tnb_logpmf(j, params)?;
    Ok(match inflated.index_of(j) {
        Some(k) => log_sum_exp2(weights.log_probs()[k], log_tnb),
        None => log_tnb,
    })
}

pub fn mitnb_pmf(
    j: u64,
    weights: &MixtureWeights,
    params: Nb2Params,
    inflated: &InflatedValueSet,
) -> Result<f64> {
    mitnb_logpmf(j, weights, params, inflated).map(f64::exp)
}

/// Mean of the MITNB mixture: `sum_j p_j v_j + p_M * tnb_mean`.
pub fn mitnb_mean(
    weights: &MixtureWeights,
    params: Nb2Params,
    inflated: &InflatedValueSet,
) -> Result<f64> {
    check_alignment(weights, inflated)?;
    let spikes: f64 = inflated
        .values()
        .iter()
        .zip(weights.probs())
        .map(|(&v, &p)| p * v as f64)
        .sum();
    Ok(spikes + weights.tnb_weight() * tnb_mean(params)?)
}

/// Hurdle composition: `p_zero` at zero, `(1 - p_zero) * positive_pmf(j)` above.
pub fn hurdle_pmf<F>(j: u64, p_zero: f64, positive_pmf: F) -> Result<f64>
where
    F: FnOnce(u64) -> Result<f64>,
{
    if !(0.0..=1.0).contains(&p_zero) {
        return Err(Error::Domain(format!("p_zero must lie in [0, 1], got {p_zero}")));
    }
    if j == 0 {
        Ok(p_zero)
    } else if p_zero == 1.0 {
        Ok(0.0)
    } else {
        Ok((1.0 - p_zero) * positive_pmf(j)?)
    }
}
