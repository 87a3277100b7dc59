//! Design matrices for the four linear predictors.
//!
//! Building happens in two steps. [`Encoding::from_spec`] resolves every term
//! against a dataset (dummy levels, standardization constants) and freezes the
//! result; [`DesignMatrices::build`] evaluates a frozen encoding on any dataset
//! carrying the same columns. Predictions reuse the encoding stored in the fit.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset};
use crate::distributions::InflatedValueSet;
use crate::error::{Error, Result};
use crate::spec::{ModelSpec, TermSet};

/// Standardization constants frozen at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

/// One column of a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Feature {
    Intercept,
    Numeric { column: String, power: u32 },
    Dummy { column: String, level: String },
}

impl Feature {
    pub fn name(&self) -> String {
        match self {
            Feature::Intercept => "(Intercept)".to_string(),
            Feature::Numeric { column, power: 1 } => column.clone(),
            Feature::Numeric { column, power } => format!("{column}^{power}"),
            Feature::Dummy { column, level } => format!("{column}.{level}"),
        }
    }
}

/// Which of the four predictors a matrix feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Hurdle,
    Location,
    Dispersion,
    Mixing,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Hurdle, Block::Location, Block::Dispersion, Block::Mixing];

    pub fn name(self) -> &'static str {
        match self {
            Block::Hurdle => "hurdle",
            Block::Location => "location",
            Block::Dispersion => "dispersion",
            Block::Mixing => "mixing",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Frozen recipe for turning dataset rows into design rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub hurdle: Vec<Feature>,
    pub location: Vec<Feature>,
    pub dispersion: Vec<Feature>,
    pub mixing: Vec<Feature>,
    /// Known levels of every categorical column in use.
    pub levels: BTreeMap<String, Vec<String>>,
    /// Standardized numeric columns.
    pub transforms: BTreeMap<String, Standardization>,
    pub response: String,
    pub inflated: InflatedValueSet,
}

impl Encoding {
    pub fn features(&self, block: Block) -> &[Feature] {
        match block {
            Block::Hurdle => &self.hurdle,
            Block::Location => &self.location,
            Block::Dispersion => &self.dispersion,
            Block::Mixing => &self.mixing,
        }
    }

    pub fn names(&self, block: Block) -> Vec<String> {
        self.features(block).iter().map(Feature::name).collect()
    }

    pub fn from_spec(spec: &ModelSpec, data: &Dataset) -> Result<Self> {
        let mut transforms = BTreeMap::new();
        for name in &spec.standardize {
            let col = data.column(name).ok_or_else(|| Error::MissingColumn(name.clone()))?;
            let values: Vec<f64> = (0..data.n_rows())
                .map(|r| {
                    col.numeric(r)
                        .ok_or_else(|| Error::Config(format!("cannot standardize categorical column `{name}`")))
                })
                .collect::<Result<_>>()?;
            let n = values.len() as f64;
            if values.len() < 2 {
                return Err(Error::Config(format!("cannot standardize `{name}` with fewer than 2 rows")));
            }
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if !(sd > 0.0) {
                return Err(Error::Config(format!("cannot standardize constant column `{name}`")));
            }
            transforms.insert(name.clone(), Standardization { mean, sd });
        }

        let mut levels = BTreeMap::new();
        let mut resolve = |set: &TermSet| -> Result<Vec<Feature>> {
            let mut out = Vec::new();
            if set.intercept {
                out.push(Feature::Intercept);
            }
            for term in &set.covariates {
                let col = data
                    .column(&term.column)
                    .ok_or_else(|| Error::MissingColumn(term.column.clone()))?;
                match col {
                    Column::Categorical(c) => {
                        if term.power != 1 {
                            return Err(Error::Config(format!(
                                "polynomial term `{term}` on categorical column"
                            )));
                        }
                        let reference = match &term.reference {
                            Some(r) => c.levels.iter().position(|l| l == r).ok_or_else(|| {
                                Error::Config(format!(
                                    "reference level `{r}` not present in column `{}`",
                                    term.column
                                ))
                            })?,
                            None => c.reference,
                        };
                        levels.insert(term.column.clone(), c.levels.clone());
                        out.extend(c.levels.iter().enumerate().filter(|(i, _)| *i != reference).map(
                            |(_, l)| Feature::Dummy {
                                column: term.column.clone(),
                                level: l.clone(),
                            },
                        ));
                    }
                    _ => {
                        if term.reference.is_some() {
                            return Err(Error::Config(format!(
                                "reference override `{term}` on numeric column"
                            )));
                        }
                        out.push(Feature::Numeric {
                            column: term.column.clone(),
                            power: term.power,
                        });
                    }
                }
            }
            Ok(out)
        };
        let hurdle = resolve(&spec.hurdle)?;
        let location = resolve(&spec.location)?;
        let dispersion = resolve(&spec.dispersion)?;
        let mixing = resolve(&spec.mixing)?;
        Ok(Self {
            hurdle,
            location,
            dispersion,
            mixing,
            levels,
            transforms,
            response: spec.response.clone(),
            inflated: spec.inflated.clone(),
        })
    }

    fn matrix(&self, block: Block, data: &Dataset) -> Result<DMatrix<f64>> {
        let features = self.features(block);
        let n = data.n_rows();
        let mut m = DMatrix::<f64>::zeros(n, features.len());
        for (j, feature) in features.iter().enumerate() {
            match feature {
                Feature::Intercept => m.column_mut(j).fill(1.0),
                Feature::Numeric { column, power } => {
                    let col = data.column(column).ok_or_else(|| Error::MissingColumn(column.clone()))?;
                    let t = self.transforms.get(column);
                    for r in 0..n {
                        let mut v = col.numeric(r).ok_or_else(|| {
                            Error::Config(format!("column `{column}` must be numeric"))
                        })?;
                        if let Some(t) = t {
                            v = (v - t.mean) / t.sd;
                        }
                        m[(r, j)] = v.powi(*power as i32);
                    }
                }
                Feature::Dummy { column, level } => {
                    let c = categorical(data, column)?;
                    for r in 0..n {
                        m[(r, j)] = f64::from(c.level_of(r) == level);
                    }
                }
            }
        }
        Ok(m)
    }

    fn check_levels(&self, data: &Dataset) -> Result<()> {
        for (column, known) in &self.levels {
            let c = categorical(data, column)?;
            for r in 0..data.n_rows() {
                let level = c.level_of(r);
                if !known.iter().any(|k| k == level) {
                    return Err(Error::UnknownLevel {
                        row: r + 1,
                        column: column.clone(),
                        level: level.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn categorical<'a>(data: &'a Dataset, column: &str) -> Result<&'a crate::dataset::Categorical> {
    match data.column(column) {
        Some(Column::Categorical(c)) => Ok(c),
        Some(_) => Err(Error::Config(format!("column `{column}` must be categorical"))),
        None => Err(Error::MissingColumn(column.to_string())),
    }
}

/// The four design matrices plus the response, when present.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub x: DMatrix<f64>,
    pub z1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
    pub z3: DMatrix<f64>,
    pub names: BTreeMap<Block, Vec<String>>,
    pub y: Option<Vec<u64>>,
    pub positive_mask: Vec<bool>,
    pub inflated: InflatedValueSet,
}

impl DesignMatrices {
    /// Evaluates a frozen encoding. The response is read when the dataset
    /// carries the encoding's response column.
    pub fn build(encoding: &Encoding, data: &Dataset) -> Result<Self> {
        encoding.check_levels(data)?;
        let y = match data.column(&encoding.response) {
            Some(Column::Integer(v)) => {
                if let Some((row, bad)) = v.iter().enumerate().find(|(_, &y)| y < 0) {
                    return Err(Error::InvalidResponse {
                        row,
                        value: bad.to_string(),
                    });
                }
                Some(v.iter().map(|&y| y as u64).collect::<Vec<_>>())
            }
            _ => None,
        };
        let positive_mask = y
            .as_ref()
            .map(|y| y.iter().map(|&v| v > 0).collect())
            .unwrap_or_default();
        let names = Block::ALL.iter().map(|&b| (b, encoding.names(b))).collect();
        Ok(Self {
            x: encoding.matrix(Block::Hurdle, data)?,
            z1: encoding.matrix(Block::Location, data)?,
            z2: encoding.matrix(Block::Dispersion, data)?,
            z3: encoding.matrix(Block::Mixing, data)?,
            names,
            y,
            positive_mask,
            inflated: encoding.inflated.clone(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn matrix(&self, block: Block) -> &DMatrix<f64> {
        match block {
            Block::Hurdle => &self.x,
            Block::Location => &self.z1,
            Block::Dispersion => &self.z2,
            Block::Mixing => &self.z3,
        }
    }

    pub fn names(&self, block: Block) -> &[String] {
        &self.names[&block]
    }

    pub fn n_positive(&self) -> usize {
        self.positive_mask.iter().filter(|&&p| p).count()
    }

    /// Copy with a new response vector.
    pub fn with_response(&self, y: Vec<u64>) -> Self {
        let positive_mask = y.iter().map(|&v| v > 0).collect();
        Self {
            y: Some(y),
            positive_mask,
            ..self.clone()
        }
    }

    /// Rank status per matrix. The mixing matrix is only checked when the
    /// model has inflated values.
    pub fn rank_report(&self) -> Vec<(Block, Result<()>)> {
        Block::ALL
            .iter()
            .filter(|&&b| b != Block::Mixing || !self.inflated.is_empty())
            .map(|&b| (b, check_rank(b.name(), self.matrix(b), self.names(b))))
            .collect()
    }
}

/// Resolves `spec` against `data` and builds full-rank design matrices.
pub fn build_design(spec: &ModelSpec, data: &Dataset) -> Result<(Encoding, DesignMatrices)> {
    if data.column(&spec.response).is_none() {
        return Err(Error::MissingColumn(spec.response.clone()));
    }
    let encoding = Encoding::from_spec(spec, data)?;
    let design = DesignMatrices::build(&encoding, data)?;
    for (_, status) in design.rank_report() {
        status?;
    }
    Ok((encoding, design))
}

const RANK_TOL: f64 = 1e-9;

/// Full-column-rank check on the unit-normalized Gram matrix. On failure the
/// error names the first dependent column and the earlier columns spanning it.
pub fn check_rank(matrix: &str, m: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let k = m.ncols();
    let norms: Vec<f64> = (0..k).map(|j| m.column(j).norm()).collect();
    if let Some(j) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::RankDeficient {
            matrix: matrix.to_string(),
            column: names[j].clone(),
            collinear_with: vec!["constant zero".to_string()],
        });
    }
    let mut unit = m.clone();
    for j in 0..k {
        unit.column_mut(j).unscale_mut(norms[j]);
    }
    let gram = unit.tr_mul(&unit);

    // Incremental Cholesky over the accepted columns.
    let mut accepted: Vec<usize> = Vec::new();
    let mut chol: Vec<Vec<f64>> = Vec::new();
    for c in 0..k {
        let mut v = Vec::with_capacity(accepted.len());
        for (i, row) in chol.iter().enumerate() {
            let s: f64 = (0..i).map(|t| row[t] * v[t]).sum();
            v.push((gram[(accepted[i], c)] - s) / row[i]);
        }
        let resid = gram[(c, c)] - v.iter().map(|x| x * x).sum::<f64>();
        if resid < RANK_TOL {
            // Back-substitute L^T a = v for the spanning coefficients.
            let p = accepted.len();
            let mut a = vec![0.0; p];
            for i in (0..p).rev() {
                let s: f64 = (i + 1..p).map(|t| chol[t][i] * a[t]).sum();
                a[i] = (v[i] - s) / chol[i][i];
            }
            let collinear_with = accepted
                .iter()
                .zip(&a)
                .filter(|(_, c)| c.abs() > 1e-6)
                .map(|(&j, _)| names[j].clone())
                .collect();
            return Err(Error::RankDeficient {
                matrix: matrix.to_string(),
                column: names[c].clone(),
                collinear_with,
            });
        }
        v.push(resid.sqrt());
        chol.push(v);
        accepted.push(c);
    }
    Ok(())
}

/// Observed frequency of each inflated value among the positive responses.
#[derive(Debug, Clone, PartialEq)]
pub struct InflatedReport {
    pub counts: Vec<(u64, usize)>,
    pub warnings: Vec<String>,
}

pub const DEFAULT_MIN_SPIKE_COUNT: usize = 10;

/// Errors if some inflated value never occurs; warns below `min_count`.
pub fn validate_inflated(
    inflated: &InflatedValueSet,
    data: &Dataset,
    min_count: usize,
) -> Result<InflatedReport> {
    let y = data.response()?;
    let mut counts = Vec::with_capacity(inflated.len());
    let mut warnings = Vec::new();
    for &v in inflated.values() {
        let count = y.iter().filter(|&&yi| yi == v).count();
        if count == 0 {
            return Err(Error::InflatedValueAbsent(v));
        }
        if count < min_count {
            warnings.push(format!(
                "inflated value {v} occurs only {count} times; its spike weight is weakly identified"
            ));
        }
        counts.push((v, count));
    }
    Ok(InflatedReport { counts, warnings })
}
