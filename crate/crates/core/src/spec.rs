//! Declarative model description and its config-file form.
//!
//! ```toml
//! response = "nights"
//! standardize = ["age"]
//!
//! [columns]
//! quarter = "categorical"
//!
//! [hurdle]
//! covariates = ["age", "age^2", "quarter(ref=\"1\")"]
//!
//! [location]
//! covariates = ["age", "age^2", "quarter"]
//!
//! [dispersion]
//! covariates = ["q3"]
//!
//! [mixing]
//! covariates = ["q3"]
//!
//! [inflated]
//! values = [2, 7, 14]
//! ```
//!
//! Each section accepts `intercept = false` to drop its intercept column.
//! `inflated = [...]` is also accepted as a top-level key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnType, Schema};
use crate::distributions::InflatedValueSet;
use crate::error::{Error, Result};

/// One covariate entry: `name`, `name^k` or `name(ref="level")`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    pub column: String,
    pub power: u32,
    pub reference: Option<String>,
}

impl Term {
    pub fn new(column: &str) -> Self {
        Self {
            column: column.to_string(),
            power: 1,
            reference: None,
        }
    }

    pub fn power(column: &str, power: u32) -> Self {
        Self {
            power,
            ..Self::new(column)
        }
    }

    pub fn with_reference(column: &str, reference: &str) -> Self {
        Self {
            reference: Some(reference.to_string()),
            ..Self::new(column)
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |why: &str| Error::Config(format!("invalid covariate entry `{s}`: {why}"));
        if let Some(open) = s.find('(') {
            let name = s[..open].trim();
            let inner = s[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| bad("missing closing parenthesis"))?;
            let (key, value) = inner.split_once('=').ok_or_else(|| bad("expected ref=\"level\""))?;
            if key.trim() != "ref" {
                return Err(bad("only `ref` is supported inside parentheses"));
            }
            let value = value.trim();
            let level = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value);
            if name.is_empty() || level.is_empty() {
                return Err(bad("empty name or level"));
            }
            return Ok(Self::with_reference(name, level));
        }
        if let Some((name, k)) = s.split_once('^') {
            let k: u32 = k.trim().parse().map_err(|_| bad("power must be an integer"))?;
            if k == 0 {
                return Err(bad("power must be >= 1"));
            }
            let name = name.trim();
            if name.is_empty() {
                return Err(bad("empty name"));
            }
            return Ok(Self::power(name, k));
        }
        if s.is_empty() || s.contains(char::is_whitespace) {
            return Err(bad("invalid column name"));
        }
        Ok(Self::new(s))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.reference, self.power) {
            (Some(r), _) => write!(f, "{}(ref=\"{}\")", self.column, r),
            (None, 1) => write!(f, "{}", self.column),
            (None, k) => write!(f, "{}^{}", self.column, k),
        }
    }
}

impl Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Covariates of one design matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermSet {
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub covariates: Vec<Term>,
}

fn yes() -> bool {
    true
}

impl Default for TermSet {
    fn default() -> Self {
        Self::intercept_only()
    }
}

impl TermSet {
    pub fn intercept_only() -> Self {
        Self {
            intercept: true,
            covariates: Vec::new(),
        }
    }

    pub fn new(covariates: Vec<Term>) -> Self {
        Self {
            intercept: true,
            covariates,
        }
    }

    pub fn parse(entries: &[&str]) -> Result<Self> {
        Ok(Self::new(entries.iter().map(|e| e.parse()).collect::<Result<_>>()?))
    }
}

/// Declared kind of a column in the `[columns]` table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Integer,
    Real,
    Categorical,
}

/// Full description of a hurdle MITNB model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    /// Numeric columns standardized as `(x - mean) / sd` before powers are taken.
    #[serde(default)]
    pub standardize: Vec<String>,
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnKind>,
    #[serde(default)]
    pub hurdle: TermSet,
    #[serde(default)]
    pub location: TermSet,
    #[serde(default)]
    pub dispersion: TermSet,
    #[serde(default)]
    pub mixing: TermSet,
    #[serde(default)]
    pub inflated: InflatedValueSet,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InflatedField {
    List(Vec<u64>),
    Table { values: Vec<u64> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    response: Option<String>,
    #[serde(default)]
    standardize: Vec<String>,
    #[serde(default)]
    columns: BTreeMap<String, ColumnKind>,
    hurdle: Option<TermSet>,
    location: Option<TermSet>,
    dispersion: Option<TermSet>,
    mixing: Option<TermSet>,
    inflated: Option<InflatedField>,
}

#[derive(Serialize)]
struct InflatedOut<'a> {
    values: &'a [u64],
}

#[derive(Serialize)]
struct ConfigOut<'a> {
    response: &'a str,
    standardize: &'a [String],
    columns: &'a BTreeMap<String, ColumnKind>,
    hurdle: &'a TermSet,
    location: &'a TermSet,
    dispersion: &'a TermSet,
    mixing: &'a TermSet,
    inflated: InflatedOut<'a>,
}

impl ModelSpec {
    /// Intercept-only model on every component.
    pub fn intercept_only(response: &str, inflated: InflatedValueSet) -> Self {
        Self {
            response: response.to_string(),
            standardize: Vec::new(),
            columns: BTreeMap::new(),
            hurdle: TermSet::intercept_only(),
            location: TermSet::intercept_only(),
            dispersion: TermSet::intercept_only(),
            mixing: TermSet::intercept_only(),
            inflated,
        }
    }

    pub fn with_inflated(&self, inflated: InflatedValueSet) -> Self {
        Self {
            inflated,
            ..self.clone()
        }
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let inflated = match raw.inflated {
            None => InflatedValueSet::empty(),
            Some(InflatedField::List(v)) | Some(InflatedField::Table { values: v }) => {
                InflatedValueSet::new(v)?
            }
        };
        Ok(Self {
            response: raw.response.unwrap_or_else(|| "y".to_string()),
            standardize: raw.standardize,
            columns: raw.columns,
            hurdle: raw.hurdle.unwrap_or_default(),
            location: raw.location.unwrap_or_default(),
            dispersion: raw.dispersion.unwrap_or_default(),
            mixing: raw.mixing.unwrap_or_default(),
            inflated,
        })
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_config_str(&text)
    }

    pub fn to_config_string(&self) -> String {
        let out = ConfigOut {
            response: &self.response,
            standardize: &self.standardize,
            columns: &self.columns,
            hurdle: &self.hurdle,
            location: &self.location,
            dispersion: &self.dispersion,
            mixing: &self.mixing,
            inflated: InflatedOut {
                values: self.inflated.values(),
            },
        };
        toml::to_string(&out).expect("model spec serializes to TOML")
    }

    /// All term sets with their matrix names, in parameter-block order.
    pub fn term_sets(&self) -> [(&'static str, &TermSet); 4] {
        [
            ("hurdle", &self.hurdle),
            ("location", &self.location),
            ("dispersion", &self.dispersion),
            ("mixing", &self.mixing),
        ]
    }

    /// Every column the model reads, response first, in declaration order.
    pub fn referenced_columns(&self) -> Vec<String> {
        let mut out = vec![self.response.clone()];
        for (_, set) in self.term_sets() {
            for t in &set.covariates {
                if !out.contains(&t.column) {
                    out.push(t.column.clone());
                }
            }
        }
        out
    }

    /// CSV schema for the referenced columns. Columns with a `ref=` override
    /// or declared categorical are read as open categoricals; the rest are
    /// read as reals unless declared otherwise.
    pub fn schema(&self) -> Schema {
        let mut schema = Schema::new(Some(&self.response));
        for name in self.referenced_columns().into_iter().skip(1) {
            let reference = self
                .term_sets()
                .iter()
                .flat_map(|(_, s)| s.covariates.iter())
                .find(|t| t.column == name && t.reference.is_some())
                .and_then(|t| t.reference.clone());
            let ty = match (self.columns.get(&name), &reference) {
                (Some(ColumnKind::Integer), None) => ColumnType::Integer,
                (Some(ColumnKind::Real), None) => ColumnType::Real,
                (None, None) => ColumnType::Real,
                _ => ColumnType::Categorical {
                    levels: None,
                    reference,
                },
            };
            schema = schema.with(&name, ty);
        }
        schema
    }
}
