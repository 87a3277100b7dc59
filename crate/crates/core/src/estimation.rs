//! Maximum-likelihood fitting of the hurdle MITNB model.
//!
//! The likelihood separates into the hurdle and positive components, so each
//! is maximized on its own with BFGS. Standard errors come from the inverse
//! observed information, obtained by central differences of the analytic
//! gradient at the optimum. The resulting covariance is block diagonal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design::{build_design, check_rank, Block, DesignMatrices, Encoding};
use crate::distributions::InflatedValueSet;
use crate::error::{Error, Result};
use crate::likelihood::{BinaryComponent, LogLikelihood, PositiveComponent};
use crate::optim::{difference_hessian, max_norm, maximize, BfgsOptions, BfgsReport};
use crate::params::{Layout, ParameterVector};
use crate::selection::information_criteria;
use crate::spec::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: usize,
    pub tol_grad: f64,
    pub tol_loglik: f64,
    /// Relative step `h * (1 + |p|)` of the numerical Hessian.
    pub hessian_step: f64,
    /// Bound on mixing intercepts; estimates beyond it are frozen there.
    pub gamma_bound: f64,
    /// Starting point; [`starting_values`] when absent.
    #[serde(skip)]
    pub start: Option<ParameterVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol_grad: 1e-6,
            tol_loglik: 1e-9,
            hessian_step: 1e-5,
            gamma_bound: 20.0,
            start: None,
        }
    }
}

impl FitOptions {
    fn bfgs(&self) -> BfgsOptions {
        BfgsOptions {
            max_iters: self.max_iters,
            tol_grad: self.tol_grad,
            tol_rel_change: self.tol_loglik,
            ..BfgsOptions::default()
        }
    }
}

/// Optimizer outcome for one likelihood component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentConvergence {
    pub converged: bool,
    pub iterations: usize,
    pub grad_max_norm: f64,
    pub messages: Vec<String>,
    pub loglik_trace: Vec<f64>,
}

impl From<&BfgsReport> for ComponentConvergence {
    fn from(r: &BfgsReport) -> Self {
        Self {
            converged: r.converged,
            iterations: r.iterations,
            grad_max_norm: r.grad_max_norm,
            messages: r.messages.clone(),
            loglik_trace: r.trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub binary: ComponentConvergence,
    pub positive: ComponentConvergence,
}

/// Everything known about a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    /// Frozen design recipe, including standardization constants.
    pub encoding: Encoding,
    pub layout: Layout,
    pub estimates: ParameterVector,
    /// Covariance over the flat parameter vector; `None` when the observed
    /// information could not be inverted.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub loglik_binary: f64,
    pub loglik_positive: f64,
    pub loglik_total: f64,
    pub n_total: usize,
    pub n_positive: usize,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    pub convergence: Convergence,
    /// Flat indices of parameters frozen at the mixing bound.
    pub frozen: Vec<usize>,
    /// Row evaluations that hit the dispersion floor.
    pub theta_clamps: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn flat_estimates(&self) -> Vec<f64> {
        self.estimates.pack()
    }

    pub fn converged(&self) -> bool {
        self.convergence.converged
    }

    /// Standard errors over the flat vector, if the covariance is available.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance.as_ref().map(|c| {
            (0..c.len()).map(|i| c[i][i].max(0.0).sqrt()).collect()
        })
    }

    /// `(block, label, column)` for each flat parameter, e.g.
    /// `(Mixing, "gamma[7]", "(Intercept)")`.
    pub fn parameter_names(&self) -> Vec<(Block, String, String)> {
        let mut out = Vec::with_capacity(self.layout.len());
        for n in self.encoding.names(Block::Hurdle) {
            out.push((Block::Hurdle, "beta_logit".to_string(), n));
        }
        for n in self.encoding.names(Block::Location) {
            out.push((Block::Location, "beta_location".to_string(), n));
        }
        for n in self.encoding.names(Block::Dispersion) {
            out.push((Block::Dispersion, "beta_dispersion".to_string(), n));
        }
        for v in self.spec.inflated.values() {
            for n in self.encoding.names(Block::Mixing) {
                out.push((Block::Mixing, format!("gamma[{v}]"), n));
            }
        }
        out
    }

    pub fn inflated(&self) -> &InflatedValueSet {
        &self.spec.inflated
    }
}

/// Starting point: logit of the positive share, log of the positive mean, unit
/// dispersion, and mixing intercepts from the observed spike frequencies.
pub fn starting_values(design: &DesignMatrices, has_intercepts: [bool; 4]) -> Result<ParameterVector> {
    let y = design.y.as_ref().ok_or_else(|| Error::Config("design has no response".into()))?;
    let layout = design_layout(design);
    let mut p = ParameterVector::zeros(layout);
    let n = y.len();
    let positives: Vec<u64> = y.iter().copied().filter(|&v| v > 0).collect();
    let n_pos = positives.len();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    if has_intercepts[0] && layout.k0 > 0 {
        let floor = 1.0 / (2.0 * n as f64);
        let share = (n_pos as f64 / n as f64).clamp(floor, 1.0 - floor);
        p.beta_logit[0] = (share / (1.0 - share)).ln();
    }
    if has_intercepts[1] && layout.k1 > 0 {
        let mean = positives.iter().sum::<u64>() as f64 / n_pos as f64;
        p.beta_location[0] = mean.ln();
    }
    if has_intercepts[3] && layout.k3 > 0 {
        let floor = 1.0 / (2.0 * n_pos as f64);
        let spike_counts: Vec<usize> = design
            .inflated
            .values()
            .iter()
            .map(|&v| positives.iter().filter(|&&y| y == v).count())
            .collect();
        let rest = n_pos - spike_counts.iter().sum::<usize>();
        let rf_rest = (rest as f64 / n_pos as f64).max(floor);
        for (j, &c) in spike_counts.iter().enumerate() {
            let rf = (c as f64 / n_pos as f64).max(floor);
            p.gamma[j][0] = (rf / rf_rest).ln();
        }
    }
    Ok(p)
}

pub(crate) fn design_layout(design: &DesignMatrices) -> Layout {
    Layout {
        k0: design.x.ncols(),
        k1: design.z1.ncols(),
        k2: design.z2.ncols(),
        k3: design.z3.ncols(),
        spikes: design.inflated.len(),
    }
}

/// Observed information inverse for one component, by central differences
/// of the analytic gradient. Indices in `fixed` get zero rows and columns.
pub fn observed_covariance<L: LogLikelihood + ?Sized>(
    objective: &L,
    at: &[f64],
    fixed: &[bool],
    rel_step: f64,
) -> Option<DMatrix<f64>> {
    let n = at.len();
    let free: Vec<usize> = (0..n).filter(|&i| !fixed.get(i).copied().unwrap_or(false)).collect();
    let info = -difference_hessian(objective, at, &free, rel_step);
    if info.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = info.cholesky()?;
    let inv = chol.inverse();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            cov[(i, j)] = inv[(r, c)];
        }
    }
    Some(cov)
}

/// Fit of the hurdle component alone.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub covariance: Option<DMatrix<f64>>,
    pub report: BfgsReport,
}

pub fn fit_binary(design: &DesignMatrices, start: &[f64], options: &FitOptions) -> Result<BinaryFit> {
    let component = BinaryComponent::from_design(design)?;
    let report = maximize(&component, start, &[], &options.bfgs());
    let covariance = observed_covariance(&component, &report.x, &[], options.hessian_step);
    Ok(BinaryFit {
        beta: report.x.clone(),
        loglik: report.value,
        covariance,
        report,
    })
}

/// Fit of the positive component alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveFit {
    pub params: Vec<f64>,
    pub loglik: f64,
    pub covariance: Option<DMatrix<f64>>,
    pub report: BfgsReport,
    /// Indices within the positive block frozen at the mixing bound.
    pub frozen: Vec<usize>,
    pub theta_clamps: usize,
    pub warnings: Vec<String>,
}

pub fn fit_positive(
    component: &PositiveComponent,
    start: &[f64],
    mixing_intercept: bool,
    options: &FitOptions,
) -> Result<PositiveFit> {
    let layout = component.layout();
    let mut fixed = vec![false; layout.positive_len()];
    let mut frozen = Vec::new();
    let mut warnings = Vec::new();
    let mut x = start.to_vec();
    let mut iterations = 0;
    let mut messages = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    let report = loop {
        let mut r = maximize(component, &x, &fixed, &options.bfgs());
        iterations += r.iterations;
        messages.append(&mut r.messages);
        trace.extend(r.trace.iter().skip(usize::from(!trace.is_empty())));
        x = r.x.clone();
        let mut newly = false;
        if mixing_intercept {
            for j in 0..layout.spikes {
                let idx = layout.k1 + layout.k2 + j * layout.k3;
                if !fixed[idx] && x[idx].abs() > options.gamma_bound {
                    let bound = options.gamma_bound.copysign(x[idx]);
                    warnings.push(format!(
                        "mixing intercept for inflated value {} diverged ({:.2}); frozen at {bound}",
                        component.inflated().values()[j],
                        x[idx]
                    ));
                    x[idx] = bound;
                    fixed[idx] = true;
                    frozen.push(idx);
                    newly = true;
                }
            }
        }
        if !newly {
            r.iterations = iterations;
            r.messages = messages;
            r.trace = trace;
            break r;
        }
    };
    let covariance = observed_covariance(component, &report.x, &fixed, options.hessian_step);
    frozen.sort_unstable();
    Ok(PositiveFit {
        params: report.x.clone(),
        loglik: report.value,
        covariance,
        frozen,
        theta_clamps: component.clamp_count(),
        warnings,
        report,
    })
}

/// Builds the design from `spec` and `data`, then fits.
pub fn fit(spec: &ModelSpec, data: &Dataset, options: &FitOptions) -> Result<FitResult> {
    let (encoding, design) = build_design(spec, data)?;
    fit_design(spec, &encoding, &design, options)
}

/// Fits a model whose design has already been built.
pub fn fit_design(
    spec: &ModelSpec,
    encoding: &Encoding,
    design: &DesignMatrices,
    options: &FitOptions,
) -> Result<FitResult> {
    let binary = {
        let start = start_for(spec, design, options)?;
        fit_binary(design, &start.beta_logit, options)?
    };
    fit_design_with_binary(spec, encoding, design, options, &binary)
}

fn start_for(spec: &ModelSpec, design: &DesignMatrices, options: &FitOptions) -> Result<ParameterVector> {
    match &options.start {
        Some(p) => {
            p.check_layout(design_layout(design))?;
            Ok(p.clone())
        }
        None => starting_values(
            design,
            [
                spec.hurdle.intercept,
                spec.location.intercept,
                spec.dispersion.intercept,
                spec.mixing.intercept,
            ],
        ),
    }
}

/// Fits the positive component and assembles the result around an existing
/// hurdle fit.
pub fn fit_design_with_binary(
    spec: &ModelSpec,
    encoding: &Encoding,
    design: &DesignMatrices,
    options: &FitOptions,
    binary: &BinaryFit,
) -> Result<FitResult> {
    let layout = design_layout(design);
    let start = start_for(spec, design, options)?;
    let component = PositiveComponent::from_design(design)?;
    if component.n_rows() == 0 {
        return Err(Error::NoPositives);
    }
    {
        let (z1, z2, z3) = component.matrices();
        check_rank("location (positive rows)", z1, design.names(Block::Location))?;
        check_rank("dispersion (positive rows)", z2, design.names(Block::Dispersion))?;
        if layout.spikes > 0 {
            check_rank("mixing (positive rows)", z3, design.names(Block::Mixing))?;
        }
    }
    let positive = fit_positive(&component, &start.pack_positive(), spec.mixing.intercept, options)?;

    let mut flat = binary.beta.clone();
    flat.extend_from_slice(&positive.params);
    let estimates = ParameterVector::unpack(layout, &flat)?;

    let covariance = match (&binary.covariance, &positive.covariance) {
        (Some(b), Some(p)) => {
            let n = layout.len();
            let mut cov = vec![vec![0.0; n]; n];
            for i in 0..layout.k0 {
                for j in 0..layout.k0 {
                    cov[i][j] = b[(i, j)];
                }
            }
            let off = layout.positive_offset();
            for i in 0..layout.positive_len() {
                for j in 0..layout.positive_len() {
                    cov[off + i][off + j] = p[(i, j)];
                }
            }
            Some(cov)
        }
        _ => None,
    };

    let mut warnings = positive.warnings.clone();
    if covariance.is_none() {
        warnings.push("observed information is singular; covariance unavailable".into());
    }
    if positive.theta_clamps > 0 {
        warnings.push(format!(
            "dispersion floor applied in {} row evaluations",
            positive.theta_clamps
        ));
    }

    let n_total = design.n_rows();
    let n_params = layout.len();
    let loglik_total = binary.loglik + positive.loglik;
    let (aic, bic) = information_criteria(loglik_total, n_params, n_total);
    let convergence = Convergence {
        converged: binary.report.converged && positive.report.converged,
        binary: (&binary.report).into(),
        positive: (&positive.report).into(),
    };
    Ok(FitResult {
        spec: spec.clone(),
        encoding: encoding.clone(),
        layout,
        estimates,
        covariance,
        loglik_binary: binary.loglik,
        loglik_positive: positive.loglik,
        loglik_total,
        n_total,
        n_positive: component.n_rows(),
        n_params,
        aic,
        bic,
        convergence,
        frozen: positive.frozen.iter().map(|i| i + layout.positive_offset()).collect(),
        theta_clamps: positive.theta_clamps,
        warnings,
    })
}

/// Max-norm of the full analytic gradient at the estimates.
pub fn gradient_max_norm(fit: &FitResult, design: &DesignMatrices) -> Result<f64> {
    let binary = BinaryComponent::from_design(design)?;
    let positive = PositiveComponent::from_design(design)?;
    let mut g = binary.gradient(&fit.estimates.beta_logit);
    let mut gp = positive.gradient(&fit.estimates.pack_positive());
    for &i in &fit.frozen {
        gp[i - fit.layout.positive_offset()] = 0.0;
    }
    g.extend(gp);
    Ok(max_norm(&g))
}
