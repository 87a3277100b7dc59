//! Information criteria and comparison of candidate inflated-value sets.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design::build_design;
use crate::error::Result;
use crate::estimation::{fit_binary, fit_design_with_binary, starting_values, BinaryFit, FitOptions, FitResult};
use crate::spec::{ModelSpec, TermSet};

/// `(AIC, BIC) = (-2L + 2k, -2L + k ln n)`.
pub fn information_criteria(loglik: f64, n_params: usize, n_total: usize) -> (f64, f64) {
    let k = n_params as f64;
    let aic = -2.0 * loglik + 2.0 * k;
    let bic = -2.0 * loglik + k * (n_total.max(1) as f64).ln();
    (aic, bic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub inflated: Vec<u64>,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    /// Set when the candidate could not be fitted at all.
    pub error: Option<String>,
}

/// Candidate models sorted by AIC, failed fits last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn best(&self) -> Option<&ComparisonRow> {
        self.rows.first().filter(|r| r.error.is_none())
    }

    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "inflated", "n_params", "loglik", "aic", "bic", "converged", "error"])?;
        for r in &self.rows {
            let inflated = r.inflated.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
            w.write_record([
                r.label.clone(),
                inflated,
                r.n_params.to_string(),
                r.loglik.to_string(),
                r.aic.to_string(),
                r.bic.to_string(),
                r.converged.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A row from a finished fit.
pub fn comparison_row(label: &str, fit: &FitResult) -> ComparisonRow {
    ComparisonRow {
        label: label.to_string(),
        inflated: fit.inflated().values().to_vec(),
        n_params: fit.n_params,
        loglik: fit.loglik_total,
        aic: fit.aic,
        bic: fit.bic,
        converged: fit.converged(),
        error: None,
    }
}

/// Hurdle fits only depend on the hurdle terms and the standardized columns.
#[derive(PartialEq, Eq, Hash)]
struct BinaryKey {
    hurdle: TermSet,
    standardize: Vec<String>,
    response: String,
}

impl BinaryKey {
    fn of(spec: &ModelSpec) -> Self {
        Self {
            hurdle: spec.hurdle.clone(),
            standardize: spec.standardize.clone(),
            response: spec.response.clone(),
        }
    }
}

/// Fits every candidate on `data` and tabulates the criteria. The hurdle
/// component is fitted once per distinct hurdle specification and shared.
pub fn compare(specs: &[(String, ModelSpec)], data: &Dataset, options: &FitOptions) -> ComparisonTable {
    let mut binaries: HashMap<BinaryKey, std::result::Result<BinaryFit, String>> = HashMap::new();
    for (_, spec) in specs {
        let key = BinaryKey::of(spec);
        if binaries.contains_key(&key) {
            continue;
        }
        let fitted = build_design(spec, data)
            .and_then(|(_, design)| {
                let start = match &options.start {
                    Some(p) => p.clone(),
                    None => starting_values(&design, [spec.hurdle.intercept, false, false, false])?,
                };
                fit_binary(&design, &start.beta_logit, options)
            })
            .map_err(|e| e.to_string());
        binaries.insert(key, fitted);
    }

    let mut rows: Vec<ComparisonRow> = specs
        .par_iter()
        .map(|(label, spec)| {
            let outcome = match &binaries[&BinaryKey::of(spec)] {
                Err(e) => Err(e.clone()),
                Ok(binary) => build_design(spec, data)
                    .and_then(|(enc, design)| fit_design_with_binary(spec, &enc, &design, options, binary))
                    .map_err(|e| e.to_string()),
            };
            match outcome {
                Ok(fit) => comparison_row(label, &fit),
                Err(e) => ComparisonRow {
                    label: label.clone(),
                    inflated: spec.inflated.values().to_vec(),
                    n_params: 0,
                    loglik: f64::NAN,
                    aic: f64::NAN,
                    bic: f64::NAN,
                    converged: false,
                    error: Some(e),
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.error.is_some(), b.error.is_some()) {
        (false, false) => a.aic.total_cmp(&b.aic),
        (x, y) => x.cmp(&y),
    });
    ComparisonTable { rows }
}
