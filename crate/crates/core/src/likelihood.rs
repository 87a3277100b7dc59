//! The two separable log-likelihood components and their gradients.
//!
//! The hurdle component is a Bernoulli likelihood of `1{y > 0}` under a logit
//! link. The positive component is the MITNB log-likelihood of the positive
//! responses with log links for location and dispersion and a multinomial
//! logit (TNB regime as reference) for the mixing weights.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::design::DesignMatrices;
use crate::distributions::{
    digamma_diff, log1m_exp, log_gamma_ratio, log_softmax_with_reference, log_sum_exp2,
    InflatedValueSet, Nb2Params,
};
use crate::error::{Error, Result};
use crate::params::Layout;

/// A log-likelihood to be maximized over a flat parameter vector.
pub trait LogLikelihood {
    fn dim(&self) -> usize;

    fn value(&self, params: &[f64]) -> f64;

    fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>);

    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.value_and_gradient(params).1
    }
}

/// `ln(1 + exp(x))` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli log-likelihood of crossing the hurdle.
#[derive(Debug, Clone)]
pub struct BinaryComponent {
    x: DMatrix<f64>,
    positive: DVector<f64>,
}

impl BinaryComponent {
    pub fn new(x: DMatrix<f64>, positive: &[bool]) -> Result<Self> {
        if x.nrows() != positive.len() {
            return Err(Error::DimensionMismatch(format!(
                "hurdle matrix has {} rows, response has {}",
                x.nrows(),
                positive.len()
            )));
        }
        let positive = DVector::from_iterator(positive.len(), positive.iter().map(|&p| f64::from(p)));
        Ok(Self { x, positive })
    }

    pub fn from_design(design: &DesignMatrices) -> Result<Self> {
        Self::new(design.x.clone(), &design.positive_mask)
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_positive(&self) -> usize {
        self.positive.iter().filter(|&&d| d > 0.0).count()
    }

    fn eta(&self, beta: &[f64]) -> DVector<f64> {
        &self.x * DVector::from_column_slice(beta)
    }
}

impl LogLikelihood for BinaryComponent {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let eta = self.eta(beta);
        eta.iter()
            .zip(self.positive.iter())
            .map(|(&e, &d)| d * e - softplus(e))
            .sum()
    }

    fn value_and_gradient(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let eta = self.eta(beta);
        let mut value = 0.0;
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.positive.iter()).map(|(&e, &d)| {
                value += d * e - softplus(e);
                d - logistic(e)
            }),
        );
        let grad = self.x.tr_mul(&resid);
        (value, grad.iter().copied().collect())
    }
}

/// Hurdle log-likelihood at `beta` for design `x` and indicators `positive`.
pub fn loglik_binary(beta: &[f64], x: &DMatrix<f64>, positive: &[bool]) -> Result<f64> {
    let c = BinaryComponent::new(x.clone(), positive)?;
    if beta.len() != c.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} hurdle coefficients for {} columns",
            beta.len(),
            c.dim()
        )));
    }
    Ok(c.value(beta))
}

/// Per-row quantities of the positive component.
pub(crate) struct RowTerms {
    pub log_f: f64,
    /// d log f / d log lambda
    pub d_eta1: f64,
    /// d log f / d log theta
    pub d_eta2: f64,
    pub clamped: bool,
}

/// Log-density of one positive observation and its derivatives with respect
/// to the log-location and log-dispersion predictors. `spike_log_weight` is
/// `ln p_k` when `y` is the k-th inflated value.
pub(crate) fn positive_row(
    y: u64,
    eta1: f64,
    eta2: f64,
    log_tnb_weight: f64,
    spike_log_weight: Option<f64>,
    want_grad: bool,
) -> (RowTerms, f64) {
    let (params, clamped) = Nb2Params::from_log_links(eta1, eta2);
    let (lambda, theta) = (params.lambda(), params.theta());
    let yf = y as f64;
    // L = ln(1 + lambda / theta); ln P0 = -theta L.
    let l = (lambda / theta).ln_1p();
    let log_p0 = -theta * l;
    let log_nb = log_gamma_ratio(y, theta) + log_p0 - yf * (theta / lambda).ln_1p();
    let log_tnb = log_nb - log1m_exp(log_p0);
    let log_b = log_tnb_weight + log_tnb;
    let log_f = match spike_log_weight {
        Some(log_a) => log_sum_exp2(log_a, log_b),
        None => log_b,
    };
    // Share of the density coming from the TNB regime.
    let r_tnb = if spike_log_weight.is_some() {
        (log_b - log_f).exp()
    } else {
        1.0
    };
    if !want_grad {
        return (
            RowTerms {
                log_f,
                d_eta1: 0.0,
                d_eta2: 0.0,
                clamped,
            },
            r_tnb,
        );
    }
    // P0 / (1 - P0)
    let odds0 = 1.0 / (theta * l).exp_m1();
    let tl = theta + lambda;
    let d_eta1 = r_tnb * (theta * (yf - lambda) / tl - odds0 * theta * lambda / tl);
    let d_eta2 = if clamped {
        0.0
    } else {
        let dlog_nb = digamma_diff(y, theta) - l + (lambda - yf) / tl;
        let dlog_p0 = -l + lambda / tl;
        r_tnb * theta * (dlog_nb + odds0 * dlog_p0)
    };
    (
        RowTerms {
            log_f,
            d_eta1,
            d_eta2,
            clamped,
        },
        r_tnb,
    )
}

/// MITNB log-likelihood of the positive responses.
#[derive(Debug)]
pub struct PositiveComponent {
    z1: DMatrix<f64>,
    z2: DMatrix<f64>,
    z3: DMatrix<f64>,
    y: Vec<u64>,
    spike: Vec<Option<usize>>,
    inflated: InflatedValueSet,
    clamp_count: AtomicUsize,
}

impl PositiveComponent {
    /// `z1`, `z2`, `z3` and `y` must already be restricted to positive rows.
    pub fn new(
        z1: DMatrix<f64>,
        z2: DMatrix<f64>,
        z3: DMatrix<f64>,
        y: Vec<u64>,
        inflated: InflatedValueSet,
    ) -> Result<Self> {
        let n = y.len();
        if z1.nrows() != n || z2.nrows() != n || z3.nrows() != n {
            return Err(Error::DimensionMismatch("positive design rows do not match response".into()));
        }
        if let Some(pos) = y.iter().position(|&v| v == 0) {
            return Err(Error::Domain(format!("positive component received y = 0 at row {pos}")));
        }
        let spike = y.iter().map(|&v| inflated.index_of(v)).collect();
        Ok(Self {
            z1,
            z2,
            z3,
            y,
            spike,
            inflated,
            clamp_count: AtomicUsize::new(0),
        })
    }

    /// Restricts a full design to its positive rows.
    pub fn from_design(design: &DesignMatrices) -> Result<Self> {
        let y = design
            .y
            .as_ref()
            .ok_or_else(|| Error::Config("design has no response".into()))?;
        let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0).collect();
        Self::new(
            design.z1.select_rows(rows.iter()),
            design.z2.select_rows(rows.iter()),
            design.z3.select_rows(rows.iter()),
            rows.iter().map(|&i| y[i]).collect(),
            design.inflated.clone(),
        )
    }

    pub fn layout(&self) -> Layout {
        Layout {
            k0: 0,
            k1: self.z1.ncols(),
            k2: self.z2.ncols(),
            k3: self.z3.ncols(),
            spikes: self.inflated.len(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn inflated(&self) -> &InflatedValueSet {
        &self.inflated
    }

    pub fn matrices(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        (&self.z1, &self.z2, &self.z3)
    }

    /// Number of row evaluations that hit the dispersion floor so far.
    pub fn clamp_count(&self) -> usize {
        self.clamp_count.load(Ordering::Relaxed)
    }

    fn predictors(&self, flat: &[f64]) -> (DVector<f64>, DVector<f64>, Vec<DVector<f64>>) {
        let l = self.layout();
        let (b1, rest) = flat.split_at(l.k1);
        let (b2, gam) = rest.split_at(l.k2);
        let eta1 = &self.z1 * DVector::from_column_slice(b1);
        let eta2 = &self.z2 * DVector::from_column_slice(b2);
        let eta3 = (0..l.spikes)
            .map(|j| &self.z3 * DVector::from_column_slice(&gam[j * l.k3..(j + 1) * l.k3]))
            .collect();
        (eta1, eta2, eta3)
    }

    fn evaluate(&self, flat: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let l = self.layout();
        assert_eq!(flat.len(), l.positive_len(), "positive parameter length");
        let n = self.y.len();
        let (eta1, eta2, eta3) = self.predictors(flat);
        let mut value = 0.0;
        let mut g1 = DVector::zeros(if want_grad { n } else { 0 });
        let mut g2 = DVector::zeros(if want_grad { n } else { 0 });
        let mut g3: Vec<DVector<f64>> = (0..if want_grad { l.spikes } else { 0 })
            .map(|_| DVector::zeros(n))
            .collect();
        let mut clamps = 0;
        let mut row_eta = vec![0.0; l.spikes];
        for i in 0..n {
            for (j, e) in eta3.iter().enumerate() {
                row_eta[j] = e[i];
            }
            let log_w = log_softmax_with_reference(&row_eta);
            let spike_lw = self.spike[i].map(|k| log_w[k]);
            let (terms, r_tnb) = positive_row(self.y[i], eta1[i], eta2[i], log_w[l.spikes], spike_lw, want_grad);
            value += terms.log_f;
            clamps += usize::from(terms.clamped);
            if want_grad {
                g1[i] = terms.d_eta1;
                g2[i] = terms.d_eta2;
                for j in 0..l.spikes {
                    let hit = if self.spike[i] == Some(j) { 1.0 - r_tnb } else { 0.0 };
                    g3[j][i] = hit - log_w[j].exp();
                }
            }
        }
        self.clamp_count.fetch_add(clamps, Ordering::Relaxed);
        if !want_grad {
            return (value, Vec::new());
        }
        let mut grad = Vec::with_capacity(l.positive_len());
        grad.extend(self.z1.tr_mul(&g1).iter());
        grad.extend(self.z2.tr_mul(&g2).iter());
        for g in &g3 {
            grad.extend(self.z3.tr_mul(g).iter());
        }
        (value, grad)
    }
}

impl LogLikelihood for PositiveComponent {
    fn dim(&self) -> usize {
        self.layout().positive_len()
    }

    fn value(&self, flat: &[f64]) -> f64 {
        self.evaluate(flat, false).0
    }

    fn value_and_gradient(&self, flat: &[f64]) -> (f64, Vec<f64>) {
        self.evaluate(flat, true)
    }
}

/// Positive-component log-likelihood at `(beta1, beta2, gamma)`.
pub fn loglik_positive(
    beta1: &[f64],
    beta2: &[f64],
    gamma: &[Vec<f64>],
    z1: &DMatrix<f64>,
    z2: &DMatrix<f64>,
    z3: &DMatrix<f64>,
    y_pos: &[u64],
    inflated: &InflatedValueSet,
) -> Result<f64> {
    let c = PositiveComponent::new(z1.clone(), z2.clone(), z3.clone(), y_pos.to_vec(), inflated.clone())?;
    let mut flat = beta1.to_vec();
    flat.extend_from_slice(beta2);
    for g in gamma {
        flat.extend_from_slice(g);
    }
    if flat.len() != c.dim() || gamma.len() != inflated.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} positive coefficients for layout {:?}",
            flat.len(),
            c.layout()
        )));
    }
    Ok(c.value(&flat))
}

/// Central-difference gradient with step `rel_step * (1 + |p_i|)`.
pub fn finite_difference_gradient<F: Fn(&[f64]) -> f64>(f: F, at: &[f64], rel_step: f64) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..at.len())
        .map(|i| {
            let h = rel_step * (1.0 + at[i].abs());
            x[i] = at[i] + h;
            let up = f(&x);
            let hi = x[i];
            x[i] = at[i] - h;
            let down = f(&x);
            let lo = x[i];
            x[i] = at[i];
            (up - down) / (hi - lo)
        })
        .collect()
}
