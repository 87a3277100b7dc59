//! Column-oriented observations and their CSV representation.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical column: level list, reference level and per-row codes
/// (indices into `levels`).
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub levels: Vec<String>,
    pub reference: usize,
    pub codes: Vec<usize>,
}

impl Categorical {
    pub fn reference_level(&self) -> &str {
        &self.levels[self.reference]
    }

    pub fn level_of(&self, row: usize) -> &str {
        &self.levels[self.codes[row]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Integer(Vec<i64>),
    Real(Vec<f64>),
    Categorical(Categorical),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Integer(v) => v.len(),
            Column::Real(v) => v.len(),
            Column::Categorical(c) => c.codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Numeric value at `row`; `None` for categorical columns.
    pub fn numeric(&self, row: usize) -> Option<f64> {
        match self {
            Column::Integer(v) => Some(v[row] as f64),
            Column::Real(v) => Some(v[row]),
            Column::Categorical(_) => None,
        }
    }

    fn render(&self, row: usize) -> String {
        match self {
            Column::Integer(v) => v[row].to_string(),
            Column::Real(v) => v[row].to_string(),
            Column::Categorical(c) => c.level_of(row).to_string(),
        }
    }

    fn column_type(&self) -> ColumnType {
        match self {
            Column::Integer(_) => ColumnType::Integer,
            Column::Real(_) => ColumnType::Real,
            Column::Categorical(c) => ColumnType::Categorical {
                levels: Some(c.levels.clone()),
                reference: Some(c.reference_level().to_string()),
            },
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Integer(v) => Column::Integer(rows.iter().map(|&r| v[r]).collect()),
            Column::Real(v) => Column::Real(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(c) => Column::Categorical(Categorical {
                levels: c.levels.clone(),
                reference: c.reference,
                codes: rows.iter().map(|&r| c.codes[r]).collect(),
            }),
        }
    }
}

/// Declared type of a CSV column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ColumnType {
    Integer,
    Real,
    /// `levels: None` collects levels from the data (sorted, numerically when
    /// every level parses as a number). `reference: None` picks the first level.
    Categorical {
        levels: Option<Vec<String>>,
        reference: Option<String>,
    },
}

/// Column declarations for [`load_csv`]. Undeclared CSV columns are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub response: Option<String>,
    pub columns: Vec<(String, ColumnType)>,
}

impl Schema {
    pub fn new(response: Option<&str>) -> Self {
        let mut schema = Self {
            response: response.map(str::to_string),
            columns: Vec::new(),
        };
        if let Some(r) = response {
            schema.columns.push((r.to_string(), ColumnType::Integer));
        }
        schema
    }

    pub fn with(mut self, name: &str, ty: ColumnType) -> Self {
        match self.columns.iter_mut().find(|(n, _)| n == name) {
            Some(entry) => entry.1 = ty,
            None => self.columns.push((name.to_string(), ty)),
        }
        self
    }

    pub fn get(&self, name: &str) -> Option<&ColumnType> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Immutable table of named columns with an optional count response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<(String, Column)>,
    response: Option<String>,
    n: usize,
}

impl Dataset {
    pub fn new(columns: Vec<(String, Column)>, response: Option<&str>) -> Result<Self> {
        let n = columns.first().map_or(0, |(_, c)| c.len());
        let mut seen = BTreeSet::new();
        for (name, col) in &columns {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate column `{name}`")));
            }
            if col.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "column `{name}` has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Column::Categorical(c) = col {
                if c.reference >= c.levels.len() {
                    return Err(Error::Config(format!("column `{name}` has no valid reference level")));
                }
                if c.codes.iter().any(|&k| k >= c.levels.len()) {
                    return Err(Error::Config(format!("column `{name}` has out-of-range codes")));
                }
            }
        }
        let data = Self {
            columns,
            response: response.map(str::to_string),
            n,
        };
        if let Some(r) = &data.response {
            match data.column(r) {
                Some(Column::Integer(v)) => {
                    if let Some((row, bad)) = v.iter().enumerate().find(|(_, &y)| y < 0) {
                        return Err(Error::InvalidResponse {
                            row,
                            value: bad.to_string(),
                        });
                    }
                }
                Some(_) => {
                    return Err(Error::Config(format!("response `{r}` must be an integer column")))
                }
                None => return Err(Error::MissingColumn(r.clone())),
            }
        }
        Ok(data)
    }

    /// `n` rows and no columns.
    pub fn with_rows(n: usize) -> Self {
        Self {
            columns: Vec::new(),
            response: None,
            n,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn response_name(&self) -> Option<&str> {
        self.response.as_deref()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn columns(&self) -> &[(String, Column)] {
        &self.columns
    }

    /// Response counts. Errors when the dataset has no response column.
    pub fn response(&self) -> Result<Vec<u64>> {
        let name = self
            .response
            .as_ref()
            .ok_or_else(|| Error::Config("dataset has no response column".into()))?;
        match self.column(name) {
            Some(Column::Integer(v)) => Ok(v.iter().map(|&y| y as u64).collect()),
            _ => Err(Error::MissingColumn(name.clone())),
        }
    }

    /// Schema that reproduces this dataset exactly when used with [`load_csv`].
    pub fn schema(&self) -> Schema {
        Schema {
            response: self.response.clone(),
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), c.column_type()))
                .collect(),
        }
    }

    /// Copy with `name` replaced (or appended when absent).
    pub fn with_column(&self, name: &str, column: Column) -> Result<Self> {
        let mut columns = self.columns.clone();
        match columns.iter_mut().find(|(n, _)| n == name) {
            Some(entry) => entry.1 = column,
            None => columns.push((name.to_string(), column)),
        }
        Self::new(columns, self.response.as_deref())
    }

    /// Copy keeping only `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), c.select(rows)))
                .collect(),
            response: self.response.clone(),
            n: rows.len(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|(n, _)| n.as_str()))?;
        for row in 0..self.n {
            w.write_record(self.columns.iter().map(|(_, c)| c.render(row)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What [`load_csv`] did besides parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_rows: usize,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows_read={}", self.rows_read)?;
        write!(f, "dropped_rows={}", self.dropped_rows)
    }
}

fn is_missing(field: &str) -> bool {
    matches!(field.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

fn sort_levels(levels: &mut [String]) {
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.trim().parse::<f64>().ok()).collect();
    if numeric.is_some() {
        levels.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.total_cmp(&y)
        });
    } else {
        levels.sort();
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<(Dataset, LoadReport)> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Parses RFC-4180 CSV with a header row. Rows with a missing value in any
/// declared column are dropped and counted.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut positions = Vec::with_capacity(schema.columns.len());
    for (name, _) in &schema.columns {
        let idx = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?;
        positions.push(idx);
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); schema.columns.len()];
    let mut report = LoadReport::default();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // Data rows are numbered from 1 after the header.
        let row = i + 1;
        report.rows_read += 1;
        let fields: Vec<&str> = positions
            .iter()
            .map(|&p| record.get(p).unwrap_or(""))
            .collect();
        if fields.iter().any(|f| is_missing(f)) {
            report.dropped_rows += 1;
            continue;
        }
        for ((k, f), (name, ty)) in fields.iter().enumerate().zip(&schema.columns) {
            let f = f.trim();
            let is_response = schema.response.as_deref() == Some(name.as_str());
            match ty {
                ColumnType::Integer => {
                    let ok = f.parse::<i64>().ok().filter(|v| !is_response || *v >= 0);
                    if ok.is_none() {
                        if is_response {
                            return Err(Error::InvalidResponse {
                                row,
                                value: f.to_string(),
                            });
                        }
                        return Err(Error::Parse {
                            row,
                            column: name.clone(),
                            message: format!("expected an integer, got `{f}`"),
                        });
                    }
                }
                ColumnType::Real => {
                    if f.parse::<f64>().is_err() {
                        return Err(Error::Parse {
                            row,
                            column: name.clone(),
                            message: format!("expected a number, got `{f}`"),
                        });
                    }
                }
                ColumnType::Categorical { levels: Some(levels), .. } => {
                    if !levels.iter().any(|l| l == f) {
                        return Err(Error::UnknownLevel {
                            row,
                            column: name.clone(),
                            level: f.to_string(),
                        });
                    }
                }
                ColumnType::Categorical { levels: None, .. } => {}
            }
            raw[k].push(f.to_string());
        }
    }

    let mut columns = Vec::with_capacity(schema.columns.len());
    for (values, (name, ty)) in raw.into_iter().zip(&schema.columns) {
        let column = match ty {
            ColumnType::Integer => Column::Integer(values.iter().map(|v| v.parse().unwrap()).collect()),
            ColumnType::Real => Column::Real(values.iter().map(|v| v.parse().unwrap()).collect()),
            ColumnType::Categorical { levels, reference } => {
                let levels = match levels {
                    Some(l) => l.clone(),
                    None => {
                        let mut l: Vec<String> = values
                            .iter()
                            .cloned()
                            .collect::<BTreeSet<_>>()
                            .into_iter()
                            .collect();
                        sort_levels(&mut l);
                        l
                    }
                };
                let reference = match reference {
                    Some(r) => levels.iter().position(|l| l == r).ok_or_else(|| {
                        Error::Config(format!("reference level `{r}` not present in column `{name}`"))
                    })?,
                    None => 0,
                };
                if levels.is_empty() {
                    return Err(Error::Config(format!("categorical column `{name}` has no levels")));
                }
                let codes = values
                    .iter()
                    .map(|v| levels.iter().position(|l| l == v).unwrap())
                    .collect();
                Column::Categorical(Categorical {
                    levels,
                    reference,
                    codes,
                })
            }
        };
        columns.push((name.clone(), column));
    }
    let data = Dataset::new(columns, schema.response.as_deref())?;
    Ok((data, report))
}
