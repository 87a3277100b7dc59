//! Predictions, delta-method standard errors and predictive margins.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Categorical, Column, Dataset};
use crate::design::DesignMatrices;
use crate::distributions::{tnb_mean, InflatedValueSet, MixtureWeights, Nb2Params};
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::likelihood::{finite_difference_gradient, logistic};
use crate::params::{Layout, ParameterVector};

/// Relative step of the delta-method gradients.
pub const DELTA_STEP: f64 = 1e-6;

/// Model predictions for one covariate row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub p_positive: f64,
    pub mixing: MixtureWeights,
    pub lambda: f64,
    pub theta: f64,
    /// `E(y | y > 0)`.
    pub mean_positive: f64,
    pub se_mean_positive: f64,
}

impl PredictionRow {
    /// `sum_j p_j v_j + p_M * tnb_mean(lambda, theta)` from the stored parts.
    pub fn compose_mean(&self, inflated: &InflatedValueSet) -> Result<f64> {
        let params = Nb2Params::new(self.lambda, self.theta)?;
        compose_mean(&self.mixing, params, inflated)
    }
}

fn compose_mean(weights: &MixtureWeights, params: Nb2Params, inflated: &InflatedValueSet) -> Result<f64> {
    let mut mean = weights.tnb_weight() * tnb_mean(params)?;
    for (&v, &p) in inflated.values().iter().zip(weights.probs()) {
        mean += p * v as f64;
    }
    Ok(mean)
}

fn dot(row: &[f64], beta: &[f64]) -> f64 {
    row.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Mixing weights of a covariate row under coefficients `gamma`.
pub fn mixing_weights(gamma: &[Vec<f64>], z3_row: &[f64]) -> MixtureWeights {
    let eta: Vec<f64> = gamma.iter().map(|g| dot(z3_row, g)).collect();
    MixtureWeights::from_linear_predictors(&eta)
}

/// Covariate rows of the four design matrices.
#[derive(Debug, Clone, Copy)]
pub struct DesignRow<'a> {
    pub x: &'a [f64],
    pub z1: &'a [f64],
    pub z2: &'a [f64],
    pub z3: &'a [f64],
}

/// Predictions from raw coefficients (standard error left at zero).
pub fn predict_row(params: &ParameterVector, inflated: &InflatedValueSet, row: DesignRow<'_>) -> Result<PredictionRow> {
    let p_positive = logistic(dot(row.x, &params.beta_logit));
    let (nb, _) = Nb2Params::from_log_links(dot(row.z1, &params.beta_location), dot(row.z2, &params.beta_dispersion));
    let mixing = mixing_weights(&params.gamma, row.z3);
    let mean_positive = compose_mean(&mixing, nb, inflated)?;
    Ok(PredictionRow {
        p_positive,
        mixing,
        lambda: nb.lambda(),
        theta: nb.theta(),
        mean_positive,
        se_mean_positive: 0.0,
    })
}

/// Row-major copies of a design, for cheap per-row slicing.
struct Rows {
    x: Vec<Vec<f64>>,
    z1: Vec<Vec<f64>>,
    z2: Vec<Vec<f64>>,
    z3: Vec<Vec<f64>>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl Rows {
    fn new(design: &DesignMatrices) -> Self {
        Self {
            x: row_major(&design.x),
            z1: row_major(&design.z1),
            z2: row_major(&design.z2),
            z3: row_major(&design.z3),
        }
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    fn get(&self, i: usize) -> DesignRow<'_> {
        DesignRow {
            x: &self.x[i],
            z1: &self.z1[i],
            z2: &self.z2[i],
            z3: &self.z3[i],
        }
    }
}

/// `sqrt(g' Sigma g)` with `g` the central-difference gradient of `target`
/// over the flat parameter vector.
pub fn delta_se<F: Fn(&[f64]) -> f64>(fit: &FitResult, target: F) -> Result<f64> {
    let cov = fit.covariance.as_ref().ok_or(Error::CovarianceUnavailable)?;
    let g = finite_difference_gradient(&target, &fit.flat_estimates(), DELTA_STEP);
    Ok(quadratic_form(cov, &g).max(0.0).sqrt())
}

fn quadratic_form(cov: &[Vec<f64>], g: &[f64]) -> f64 {
    let mut out = 0.0;
    for (i, gi) in g.iter().enumerate() {
        if *gi == 0.0 {
            continue;
        }
        for (j, gj) in g.iter().enumerate() {
            out += gi * cov[i][j] * gj;
        }
    }
    out
}

fn unpack(layout: Layout, flat: &[f64]) -> ParameterVector {
    ParameterVector::unpack(layout, flat).expect("flat vector matches the fit layout")
}

/// `E(y | y > 0)` at a design row as a function of the flat parameters.
pub fn mean_positive_target<'a>(fit: &'a FitResult, row: DesignRow<'a>) -> impl Fn(&[f64]) -> f64 + 'a {
    move |flat| {
        predict_row(&unpack(fit.layout, flat), fit.inflated(), row)
            .map(|p| p.mean_positive)
            .unwrap_or(f64::NAN)
    }
}

/// `Pr(y > 0)` at a design row as a function of the flat parameters.
pub fn p_positive_target<'a>(fit: &'a FitResult, row: DesignRow<'a>) -> impl Fn(&[f64]) -> f64 + 'a {
    move |flat| logistic(dot(row.x, &flat[..fit.layout.k0]))
}

/// Predictions for every row of `newdata`, using the fit's frozen encoding.
pub fn predict(fit: &FitResult, newdata: &Dataset) -> Result<Vec<PredictionRow>> {
    let design = DesignMatrices::build(&fit.encoding, newdata)?;
    predict_design(fit, &design)
}

pub fn predict_design(fit: &FitResult, design: &DesignMatrices) -> Result<Vec<PredictionRow>> {
    let rows = Rows::new(design);
    (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let row = rows.get(i);
            let mut pred = predict_row(&fit.estimates, fit.inflated(), row)?;
            pred.se_mean_positive = match &fit.covariance {
                Some(_) => delta_se(fit, mean_positive_target(fit, row))?,
                None => f64::NAN,
            };
            Ok(pred)
        })
        .collect()
}

pub fn write_predictions_csv<W: Write>(
    rows: &[PredictionRow],
    inflated: &InflatedValueSet,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "row".to_string(),
        "p_positive".into(),
        "lambda".into(),
        "theta".into(),
        "mean_positive".into(),
        "se_mean_positive".into(),
    ];
    header.extend(inflated.values().iter().map(|v| format!("p_{v}")));
    header.push("p_tnb".into());
    w.write_record(&header)?;
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![
            i.to_string(),
            r.p_positive.to_string(),
            r.lambda.to_string(),
            r.theta.to_string(),
            r.mean_positive.to_string(),
            r.se_mean_positive.to_string(),
        ];
        rec.extend(r.mixing.probs().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// How a margin cell averages over the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginMode {
    /// Set the grid columns to the cell value for every row, then average.
    #[default]
    Counterfactual,
    /// Average only over rows already at the cell value.
    Subgroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginCell {
    /// Grid values, one rendered value per `over` column.
    pub values: Vec<String>,
    pub n_rows: usize,
    pub p_positive: f64,
    pub se_p_positive: f64,
    pub mean_positive: f64,
    pub se_mean_positive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginTable {
    pub over: Vec<String>,
    pub cells: Vec<MarginCell>,
}

impl MarginTable {
    pub fn cell(&self, values: &[&str]) -> Option<&MarginCell> {
        self.cells.iter().find(|c| c.values.iter().map(String::as_str).eq(values.iter().copied()))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.over.clone();
        header.extend(
            ["n_rows", "p_positive", "se_p_positive", "mean_positive", "se_mean_positive"].map(String::from),
        );
        w.write_record(&header)?;
        for c in &self.cells {
            let mut rec = c.values.clone();
            rec.extend([
                c.n_rows.to_string(),
                c.p_positive.to_string(),
                c.se_p_positive.to_string(),
                c.mean_positive.to_string(),
                c.se_mean_positive.to_string(),
            ]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Values a grid column can take: categorical levels in level order, or the
/// sorted distinct values of a numeric column.
fn grid_values(column: &Column) -> Vec<Column> {
    let n = column.len();
    match column {
        Column::Categorical(c) => (0..c.levels.len())
            .map(|k| {
                Column::Categorical(Categorical {
                    levels: c.levels.clone(),
                    reference: c.reference,
                    codes: vec![k; n],
                })
            })
            .collect(),
        Column::Integer(v) => v
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|x| Column::Integer(vec![x; n]))
            .collect(),
        Column::Real(v) => {
            let mut xs = v.clone();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs.into_iter().map(|x| Column::Real(vec![x; n])).collect()
        }
    }
}

fn render_first(column: &Column) -> String {
    match column {
        Column::Integer(v) => v[0].to_string(),
        Column::Real(v) => v[0].to_string(),
        Column::Categorical(c) => c.level_of(0).to_string(),
    }
}

fn rows_matching(data: &Dataset, over: &[String], cell: &[Column]) -> Vec<usize> {
    (0..data.n_rows())
        .filter(|&r| {
            over.iter().zip(cell).all(|(name, value)| {
                let col = data.column(name).expect("grid column exists");
                match (col, value) {
                    (Column::Categorical(a), Column::Categorical(b)) => a.codes[r] == b.codes[0],
                    (a, b) => a.numeric(r) == b.numeric(0),
                }
            })
        })
        .collect()
}

/// Average predictions over the sample at each grid cell of `over`.
pub fn predictive_margins(
    fit: &FitResult,
    data: &Dataset,
    over: &[String],
    mode: MarginMode,
) -> Result<MarginTable> {
    let mut grid: Vec<Vec<Column>> = vec![Vec::new()];
    for name in over {
        let col = data.column(name).ok_or_else(|| Error::MissingColumn(name.clone()))?;
        let values = grid_values(col);
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut cell = prefix.clone();
                    cell.push(v.clone());
                    cell
                })
            })
            .collect();
    }

    let cells = grid
        .into_par_iter()
        .map(|cell| -> Result<Option<MarginCell>> {
            let cell_data = match mode {
                MarginMode::Counterfactual => {
                    let mut d = data.clone();
                    for (name, value) in over.iter().zip(&cell) {
                        d = d.with_column(name, value.clone())?;
                    }
                    d
                }
                MarginMode::Subgroup => {
                    let rows = rows_matching(data, over, &cell);
                    if rows.is_empty() {
                        return Ok(None);
                    }
                    data.select_rows(&rows)
                }
            };
            let design = DesignMatrices::build(&fit.encoding, &cell_data)?;
            let rows = Rows::new(&design);
            let n = rows.len() as f64;
            let layout = fit.layout;
            let avg_p = |flat: &[f64]| -> f64 {
                let beta = &flat[..layout.k0];
                (0..rows.len()).map(|i| logistic(dot(rows.get(i).x, beta))).sum::<f64>() / n
            };
            let avg_mean = |flat: &[f64]| -> f64 {
                let p = unpack(layout, flat);
                (0..rows.len())
                    .map(|i| {
                        predict_row(&p, fit.inflated(), rows.get(i))
                            .map(|r| r.mean_positive)
                            .unwrap_or(f64::NAN)
                    })
                    .sum::<f64>()
                    / n
            };
            let at = fit.flat_estimates();
            let (se_p, se_m) = match &fit.covariance {
                Some(_) => (delta_se(fit, avg_p)?, delta_se(fit, avg_mean)?),
                None => (f64::NAN, f64::NAN),
            };
            Ok(Some(MarginCell {
                values: cell.iter().map(render_first).collect(),
                n_rows: rows.len(),
                p_positive: avg_p(&at),
                se_p_positive: se_p,
                mean_positive: avg_mean(&at),
                se_mean_positive: se_m,
            }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(MarginTable {
        over: over.to_vec(),
        cells,
    })
}
