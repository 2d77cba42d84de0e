//! Column-typed datasets and their CSV representation.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical { levels },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Numeric => None,
        }
    }
}

/// Row-major block of feature rows, the unit of work handed to predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    ncols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn new(ncols: usize, data: Vec<f64>) -> Self {
        assert!(
            ncols > 0 && data.len() % ncols == 0,
            "row data length {} is not a multiple of {ncols}",
            data.len()
        );
        Self { ncols, data }
    }

    pub fn with_capacity(ncols: usize, rows: usize) -> Self {
        Self {
            ncols,
            data: Vec::with_capacity(ncols * rows),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.ncols);
        self.data.extend_from_slice(row);
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.ncols
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.ncols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Feature matrix stored by column. Categorical entries hold the level index
/// as an `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    metas: Vec<FeatureMeta>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(metas: Vec<FeatureMeta>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if metas.is_empty() {
            return Err(Error::Invalid("dataset needs at least one feature".into()));
        }
        if metas.len() != columns.len() {
            return Err(Error::Invalid(format!(
                "{} feature descriptions for {} columns",
                metas.len(),
                columns.len()
            )));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::Invalid("dataset needs at least one row".into()));
        }
        let mut names = HashSet::new();
        for (meta, col) in metas.iter().zip(&columns) {
            if !names.insert(meta.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate feature name '{}'", meta.name)));
            }
            if col.len() != n {
                return Err(Error::Invalid(format!(
                    "column '{}' has {} rows, expected {n}",
                    meta.name,
                    col.len()
                )));
            }
            match &meta.kind {
                FeatureKind::Numeric => {
                    if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                        return Err(Error::Csv {
                            row: i + 1,
                            column: meta.name.clone(),
                            message: "non-finite value".into(),
                        });
                    }
                }
                FeatureKind::Categorical { levels } => {
                    if levels.is_empty() {
                        return Err(Error::Invalid(format!("feature '{}' has no levels", meta.name)));
                    }
                    let distinct: HashSet<&String> = levels.iter().collect();
                    if distinct.len() != levels.len() {
                        return Err(Error::Invalid(format!(
                            "feature '{}' has duplicate levels",
                            meta.name
                        )));
                    }
                    let k = levels.len() as f64;
                    if let Some(i) = col
                        .iter()
                        .position(|&v| !(v >= 0.0 && v < k && v.fract() == 0.0))
                    {
                        return Err(Error::Csv {
                            row: i + 1,
                            column: meta.name.clone(),
                            message: format!("level index {} out of range", col[i]),
                        });
                    }
                }
            }
        }
        Ok(Self { metas, columns })
    }

    /// Convenience constructor for all-numeric data.
    pub fn from_numeric_columns(names: &[&str], columns: Vec<Vec<f64>>) -> Result<Self> {
        let metas = names.iter().map(|n| FeatureMeta::numeric(*n)).collect();
        Self::new(metas, columns)
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn p(&self) -> usize {
        self.metas.len()
    }

    pub fn metas(&self) -> &[FeatureMeta] {
        &self.metas
    }

    pub fn meta(&self, j: usize) -> &FeatureMeta {
        &self.metas[j]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.metas.iter().position(|m| m.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.metas.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn row_into(&self, i: usize, out: &mut [f64]) {
        for (o, col) in out.iter_mut().zip(&self.columns) {
            *o = col[i];
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> RowMatrix {
        let mut m = RowMatrix::with_capacity(self.p(), self.n());
        let mut buf = vec![0.0; self.p()];
        for i in 0..self.n() {
            self.row_into(i, &mut buf);
            m.push_row(&buf);
        }
        m
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| idx.iter().map(|&i| c[i]).collect())
            .collect();
        Self::new(self.metas.clone(), columns)
    }

    /// Reorders features; `order[k]` is the old index of new feature `k`.
    pub fn permute_features(&self, order: &[usize]) -> Result<Self> {
        Self::new(
            order.iter().map(|&j| self.metas[j].clone()).collect(),
            order.iter().map(|&j| self.columns[j].clone()).collect(),
        )
    }

    /// Text of one cell as written to CSV.
    pub fn format_value(&self, j: usize, v: f64) -> String {
        match &self.metas[j].kind {
            FeatureKind::Numeric => format_number(v),
            FeatureKind::Categorical { levels } => levels[v as usize].clone(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        write_rows_csv(&self.metas, &self.rows())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

/// Writes feature rows as CSV with a header taken from `metas`.
pub fn write_rows_csv(metas: &[FeatureMeta], rows: &RowMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(metas.iter().map(|m| m.name.as_str()))?;
    let mut record = Vec::with_capacity(metas.len());
    for row in rows.iter_rows() {
        record.clear();
        for (meta, &v) in metas.iter().zip(row) {
            record.push(match &meta.kind {
                FeatureKind::Numeric => format_number(v),
                FeatureKind::Categorical { levels } => levels
                    .get(v as usize)
                    .cloned()
                    .unwrap_or_else(|| format_number(v)),
            });
        }
        w.write_record(&record)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::CsvFormat(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::CsvFormat(e.to_string()))
}

fn is_missing(token: &str) -> bool {
    let t = token.trim();
    t.is_empty() || t == "NA"
}

/// Parses CSV text (header row required). Columns whose every entry parses
/// as a number become numeric; everything else becomes categorical with
/// levels in sorted order.
pub fn load_dataset(csv_text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::CsvFormat("empty file".into()));
    }
    let p = header.len();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); p];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != p {
            return Err(Error::Csv {
                row,
                column: String::new(),
                message: format!("expected {p} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if is_missing(field) {
                return Err(Error::Csv {
                    row,
                    column: header[j].clone(),
                    message: format!("missing value '{field}'"),
                });
            }
            cells[j].push(field.trim().to_string());
        }
    }
    if cells[0].is_empty() {
        return Err(Error::CsvFormat("no data rows".into()));
    }

    let mut metas = Vec::with_capacity(p);
    let mut columns = Vec::with_capacity(p);
    for (j, col) in cells.into_iter().enumerate() {
        let parsed: Vec<Option<f64>> = col.iter().map(|s| s.parse::<f64>().ok()).collect();
        if parsed.iter().all(Option::is_some) {
            let values: Vec<f64> = parsed.into_iter().map(Option::unwrap).collect();
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Csv {
                    row: i + 1,
                    column: header[j].clone(),
                    message: format!("non-finite number '{}'", col[i]),
                });
            }
            metas.push(FeatureMeta::numeric(header[j].clone()));
            columns.push(values);
        } else {
            let levels: Vec<String> = col
                .iter()
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let values = col
                .iter()
                .map(|s| levels.binary_search(s).unwrap() as f64)
                .collect();
            metas.push(FeatureMeta::categorical(header[j].clone(), levels));
            columns.push(values);
        }
    }
    Dataset::new(metas, columns)
}
