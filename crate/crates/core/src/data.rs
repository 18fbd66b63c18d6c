//! Dataset representation, covariate roles, missingness bookkeeping, and
//! CSV/schema ingestion.
//!
//! A [`SurvivalDataset`] holds follow-up times, event indicators, and a
//! covariate matrix with an explicit missingness mask. Masked cells are
//! stored as NaN so that any fit accidentally consuming one poisons its
//! output instead of silently using a stale value.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Binary,
    Continuous,
}

/// Where a covariate enters the cure model. `Auxiliary` columns never enter
/// the model itself, only imputation predictor sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    IncidenceOnly,
    LatencyOnly,
    Both,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
    pub placement: Placement,
    #[serde(default)]
    pub has_missing: bool,
}

impl CovariateSpec {
    pub fn new(name: &str, kind: CovariateKind, placement: Placement) -> Self {
        CovariateSpec {
            name: name.to_string(),
            kind,
            placement,
            has_missing: false,
        }
    }
}

/// Ordered covariate lists for the incidence (X) and latency (Z) designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub incidence: Vec<String>,
    pub latency: Vec<String>,
}

impl ModelSpec {
    /// Derive the model layout from column placements, keeping column order.
    pub fn from_columns(columns: &[CovariateSpec]) -> Self {
        let incidence = columns
            .iter()
            .filter(|c| matches!(c.placement, Placement::IncidenceOnly | Placement::Both))
            .map(|c| c.name.clone())
            .collect();
        let latency = columns
            .iter()
            .filter(|c| matches!(c.placement, Placement::LatencyOnly | Placement::Both))
            .map(|c| c.name.clone())
            .collect();
        ModelSpec { incidence, latency }
    }

    /// Resolve names to column indices against a dataset.
    pub fn resolve(&self, ds: &SurvivalDataset) -> Result<ResolvedModel> {
        let lookup = |names: &[String]| -> Result<Vec<usize>> {
            let mut seen = Vec::new();
            let mut out = Vec::with_capacity(names.len());
            for name in names {
                if seen.contains(name) {
                    return Err(Error::SpecColumnDuplicate { name: name.clone() });
                }
                seen.push(name.clone());
                out.push(
                    ds.column_index(name)
                        .ok_or_else(|| Error::SpecColumnUnknown { name: name.clone() })?,
                );
            }
            Ok(out)
        };
        Ok(ResolvedModel {
            x_cols: lookup(&self.incidence)?,
            z_cols: lookup(&self.latency)?,
        })
    }
}

/// Column indices of the incidence and latency designs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedModel {
    pub x_cols: Vec<usize>,
    pub z_cols: Vec<usize>,
}

impl ResolvedModel {
    /// All distinct model columns (union of both designs).
    pub fn model_cols(&self) -> Vec<usize> {
        let mut cols = self.x_cols.clone();
        for &c in &self.z_cols {
            if !cols.contains(&c) {
                cols.push(c);
            }
        }
        cols
    }
}

#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    pub y: Vec<f64>,
    pub delta: Vec<bool>,
    pub columns: Vec<CovariateSpec>,
    /// n x p covariate matrix; masked cells hold NaN.
    pub data: Array2<f64>,
    /// n x p missingness mask; true = missing.
    pub missing: Array2<bool>,
}

impl SurvivalDataset {
    pub fn new(
        y: Vec<f64>,
        delta: Vec<bool>,
        columns: Vec<CovariateSpec>,
        data: Array2<f64>,
        missing: Array2<bool>,
    ) -> Self {
        let n = y.len();
        assert_eq!(delta.len(), n);
        assert_eq!(data.nrows(), n);
        assert_eq!(data.ncols(), columns.len());
        assert_eq!(missing.dim(), data.dim());
        let mut ds = SurvivalDataset {
            y,
            delta,
            columns,
            data,
            missing,
        };
        ds.refresh_has_missing();
        ds
    }

    /// Complete dataset (no mask anywhere).
    pub fn complete(
        y: Vec<f64>,
        delta: Vec<bool>,
        columns: Vec<CovariateSpec>,
        data: Array2<f64>,
    ) -> Self {
        let missing = Array2::from_elem(data.dim(), false);
        SurvivalDataset::new(y, delta, columns, data, missing)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn refresh_has_missing(&mut self) {
        for (j, col) in self.columns.iter_mut().enumerate() {
            col.has_missing = self.missing.column(j).iter().any(|&m| m);
        }
    }

    /// Fraction of missing cells in column `j`.
    pub fn missing_fraction(&self, j: usize) -> f64 {
        let miss = self.missing.column(j).iter().filter(|&&m| m).count();
        miss as f64 / self.n() as f64
    }

    /// Largest event time, if any event exists.
    pub fn last_event_time(&self) -> Option<f64> {
        self.y
            .iter()
            .zip(&self.delta)
            .filter(|(_, &d)| d)
            .map(|(&t, _)| t)
            .fold(None, |acc, t| Some(acc.map_or(t, |a: f64| a.max(t))))
    }

    /// Row indices with every listed column observed.
    pub fn rows_observed_on(&self, cols: &[usize]) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| cols.iter().all(|&j| !self.missing[(i, j)]))
            .collect()
    }

    /// New dataset restricted to `rows` (order preserved, duplicates allowed:
    /// this is also the bootstrap resampling path).
    pub fn subset(&self, rows: &[usize]) -> SurvivalDataset {
        let m = rows.len();
        let p = self.p();
        let mut data = Array2::<f64>::zeros((m, p));
        let mut missing = Array2::from_elem((m, p), false);
        let mut y = Vec::with_capacity(m);
        let mut delta = Vec::with_capacity(m);
        for (r, &i) in rows.iter().enumerate() {
            y.push(self.y[i]);
            delta.push(self.delta[i]);
            for j in 0..p {
                data[(r, j)] = self.data[(i, j)];
                missing[(r, j)] = self.missing[(i, j)];
            }
        }
        SurvivalDataset::new(y, delta, self.columns.clone(), data, missing)
    }

    /// Design matrix over the given columns. Panics in debug builds if a
    /// masked cell would be consumed.
    pub fn design(&self, cols: &[usize]) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::<f64>::zeros((n, cols.len()));
        for (k, &j) in cols.iter().enumerate() {
            for i in 0..n {
                debug_assert!(
                    !self.missing[(i, j)],
                    "masked cell ({i},{j}) consumed by a fit"
                );
                out[(i, k)] = self.data[(i, j)];
            }
        }
        out
    }

    pub fn column_values(&self, j: usize) -> Array1<f64> {
        self.data.column(j).to_owned()
    }
}

// ---------------------------------------------------------------------------
// Schema files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemaFile {
    column: Vec<CovariateSpec>,
    model: Option<ModelSpec>,
}

/// Parsed schema: the column specs plus an optional explicit model layout
/// (defaults to the layout implied by the placements).
#[derive(Debug, Clone)]
pub struct Schema {
    pub columns: Vec<CovariateSpec>,
    pub model: ModelSpec,
}

impl Schema {
    pub fn new(columns: Vec<CovariateSpec>) -> Self {
        let model = ModelSpec::from_columns(&columns);
        Schema { columns, model }
    }

    pub fn from_toml(text: &str) -> Result<Schema> {
        let file: SchemaFile = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        if file.column.is_empty() {
            return Err(Error::InvalidConfig {
                detail: "schema lists no columns".into(),
            });
        }
        let model = file
            .model
            .unwrap_or_else(|| ModelSpec::from_columns(&file.column));
        Ok(Schema {
            columns: file.column,
            model,
        })
    }

    pub fn load(path: &Path) -> Result<Schema> {
        Schema::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        let file = SchemaFile {
            column: self.columns.clone(),
            model: Some(self.model.clone()),
        };
        toml::to_string(&file).expect("schema serializes")
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion and emission
// ---------------------------------------------------------------------------

fn is_missing_marker(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na")
}

fn parse_finite(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonNumericCell {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        });
    }
    Ok(v)
}

/// Load a survival dataset from CSV. The header must consist of `time`,
/// `status`, and exactly the schema's column names (any order). Missing
/// cells are an empty string or a literal `NA` (case-insensitive).
pub fn load_csv(path: &Path, schema: &[CovariateSpec]) -> Result<SurvivalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let mut positions: HashMap<&str, usize> = HashMap::new();
    for (idx, h) in headers.iter().enumerate() {
        if positions.insert(h.as_str(), idx).is_some() {
            return Err(Error::HeaderMismatch {
                detail: format!("duplicate header `{h}`"),
            });
        }
    }
    let time_idx = *positions.get("time").ok_or_else(|| Error::HeaderMismatch {
        detail: "mandatory column `time` not found".into(),
    })?;
    let status_idx = *positions
        .get("status")
        .ok_or_else(|| Error::HeaderMismatch {
            detail: "mandatory column `status` not found".into(),
        })?;
    let mut col_idx = Vec::with_capacity(schema.len());
    for spec in schema {
        col_idx.push(*positions.get(spec.name.as_str()).ok_or_else(|| {
            Error::HeaderMismatch {
                detail: format!("schema column `{}` not found in header", spec.name),
            }
        })?);
    }
    if headers.len() != schema.len() + 2 {
        return Err(Error::HeaderMismatch {
            detail: format!(
                "header has {} columns, expected {} (time, status, and {} schema columns)",
                headers.len(),
                schema.len() + 2,
                schema.len()
            ),
        });
    }

    let expected_arity = headers.len();
    let mut y = Vec::new();
    let mut delta = Vec::new();
    let mut cells: Vec<Vec<f64>> = Vec::new();
    let mut mask: Vec<Vec<bool>> = Vec::new();

    for (r, record) in reader.records().enumerate() {
        let row = r + 1; // 1-based data row for messages
        let record = match record {
            Ok(rec) => rec,
            Err(e) => {
                if let csv::ErrorKind::UnequalLengths { expected_len, len, .. } = e.kind() {
                    return Err(Error::MalformedRow {
                        row,
                        expected: *expected_len as usize,
                        found: *len as usize,
                    });
                }
                return Err(e.into());
            }
        };
        if record.len() != expected_arity {
            return Err(Error::MalformedRow {
                row,
                expected: expected_arity,
                found: record.len(),
            });
        }

        let t = parse_finite(&record[time_idx], row, "time")?;
        if t < 0.0 {
            return Err(Error::NegativeTime { row, value: t });
        }
        y.push(t);

        let status_cell = record[status_idx].trim();
        let s = parse_finite(status_cell, row, "status")?;
        if s == 0.0 {
            delta.push(false);
        } else if s == 1.0 {
            delta.push(true);
        } else {
            return Err(Error::StatusNotBinary {
                row,
                value: status_cell.to_string(),
            });
        }

        let mut vals = Vec::with_capacity(schema.len());
        let mut miss = Vec::with_capacity(schema.len());
        for (spec, &idx) in schema.iter().zip(&col_idx) {
            let cell = &record[idx];
            if is_missing_marker(cell) {
                vals.push(f64::NAN);
                miss.push(true);
                continue;
            }
            let v = parse_finite(cell, row, &spec.name)?;
            if spec.kind == CovariateKind::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::NonBinaryCell {
                    row,
                    column: spec.name.clone(),
                    value: v,
                });
            }
            vals.push(v);
            miss.push(false);
        }
        cells.push(vals);
        mask.push(miss);
    }

    let n = y.len();
    let p = schema.len();
    let mut data = Array2::<f64>::zeros((n, p));
    let mut missing = Array2::from_elem((n, p), false);
    for i in 0..n {
        for j in 0..p {
            data[(i, j)] = cells[i][j];
            missing[(i, j)] = mask[i][j];
        }
    }
    Ok(SurvivalDataset::new(
        y,
        delta,
        schema.to_vec(),
        data,
        missing,
    ))
}

/// Write a dataset back to CSV. Masked cells become empty strings; numbers
/// use the shortest round-trip representation so re-loading is lossless.
pub fn write_csv(ds: &SurvivalDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("time,status");
    for c in &ds.columns {
        out.push(',');
        out.push_str(&c.name);
    }
    out.push('\n');
    for i in 0..ds.n() {
        out.push_str(&format!("{}", ds.y[i]));
        out.push(',');
        out.push_str(if ds.delta[i] { "1" } else { "0" });
        for j in 0..ds.p() {
            out.push(',');
            if !ds.missing[(i, j)] {
                out.push_str(&format!("{}", ds.data[(i, j)]));
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Validation report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ColumnReport {
    pub name: String,
    pub missing_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub n: usize,
    pub columns: Vec<ColumnReport>,
    pub censoring_rate: f64,
    /// Fraction of censored subjects with follow-up strictly beyond the
    /// last event time (1 when no event exists and censored rows do).
    pub plateau_fraction: f64,
    pub events: usize,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "n = {}, events = {}, censoring rate = {:.4}, plateau fraction = {:.4}",
            self.n, self.events, self.censoring_rate, self.plateau_fraction
        )?;
        for c in &self.columns {
            writeln!(f, "  {}: missing fraction {:.4}", c.name, c.missing_fraction)?;
        }
        Ok(())
    }
}

/// Per-column missingness plus censoring and plateau summaries.
///
/// A subject is in the plateau iff censored with `y` strictly greater than
/// the last event time; ties with the last event time do not count.
pub fn validate(ds: &SurvivalDataset, spec: &ModelSpec) -> Result<ValidationReport> {
    spec.resolve(ds)?;
    let n = ds.n();
    let events = ds.delta.iter().filter(|&&d| d).count();
    let censored = n - events;
    let plateau = match ds.last_event_time() {
        Some(tau) => ds
            .y
            .iter()
            .zip(&ds.delta)
            .filter(|(&t, &d)| !d && t > tau)
            .count(),
        None => censored,
    };
    let columns = ds
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| ColumnReport {
            name: c.name.clone(),
            missing_fraction: ds.missing_fraction(j),
        })
        .collect();
    Ok(ValidationReport {
        n,
        columns,
        censoring_rate: censored as f64 / n as f64,
        plateau_fraction: plateau as f64 / n as f64,
        events,
    })
}
