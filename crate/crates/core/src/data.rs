//! Datasets, column standardization and CSV ingestion.
//!
//! Standardized designs have every column centered with Euclidean norm
//! `sqrt(n)`. The response is always centered when standardizing (there is no
//! intercept anywhere downstream); scaling it is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HotError, Result};
use crate::linalg::{norm2, norm_inf, Matrix};

/// Design matrix and response, plus the affine maps that produced them.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    standardized: bool,
    column_means: Vec<f64>,
    column_scales: Vec<f64>,
    response_mean: f64,
    response_scale: f64,
    response_scaled: bool,
}

/// Ground truth attached to simulated data, expressed in the coordinates of
/// the dataset it accompanies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTruth {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub noise: Vec<f64>,
}

fn check_shape(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(HotError::DimensionMismatch(format!(
            "design has {} rows but response has length {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < 4 || x.ncols() < 2 {
        return Err(HotError::DimensionMismatch(format!(
            "need n >= 4 and p >= 2, got n = {}, p = {}",
            x.nrows(),
            x.ncols()
        )));
    }
    if let Some(index) = x.as_col_major().iter().position(|v| !v.is_finite()) {
        return Err(HotError::NonFiniteInput { what: "design", index });
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(HotError::NonFiniteInput { what: "response", index });
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// True when `v` already has mean zero and norm sqrt(n) to within rounding.
fn is_standard(v: &[f64]) -> bool {
    let root_n = (v.len() as f64).sqrt();
    let m = mean(v);
    m.abs() <= 1e-14 * norm_inf(v).max(1.0) && (norm2(v) - root_n).abs() <= 1e-14 * root_n
}

/// Centers `v` and rescales it to norm sqrt(n). Returns (mean, scale) with
/// `v_new = (v - mean) / scale`, or `None` for a constant vector.
fn standardize_in_place(v: &mut [f64]) -> Option<(f64, f64)> {
    if is_standard(v) {
        return Some((0.0, 1.0));
    }
    let root_n = (v.len() as f64).sqrt();
    let m = mean(v);
    let spread = norm_inf(v).max(1.0);
    v.iter_mut().for_each(|e| *e -= m);
    let nrm = norm2(v);
    if nrm <= 1e-12 * spread * root_n {
        return None;
    }
    let scale = nrm / root_n;
    v.iter_mut().for_each(|e| *e /= scale);
    Some((m, scale))
}

/// Centers every column of `raw_x` and scales it to norm `sqrt(n)`; centers
/// `raw_y` and, when `scale_response` is set, scales it the same way.
pub fn standardize(raw_x: &Matrix, raw_y: &[f64], scale_response: bool) -> Result<Dataset> {
    check_shape(raw_x, raw_y)?;
    let p = raw_x.ncols();
    let mut x = raw_x.clone();
    let mut column_means = Vec::with_capacity(p);
    let mut column_scales = Vec::with_capacity(p);
    for k in 0..p {
        let (m, s) = standardize_in_place(x.col_mut(k)).ok_or(HotError::DegenerateColumn { column: k })?;
        column_means.push(m);
        column_scales.push(s);
    }

    let mut y = raw_y.to_vec();
    let (response_mean, response_scale) = if scale_response {
        standardize_in_place(&mut y).ok_or(HotError::DegenerateResponse)?
    } else {
        let m = mean(&y);
        if m != 0.0 {
            y.iter_mut().for_each(|e| *e -= m);
        }
        (m, 1.0)
    };

    Ok(Dataset {
        x,
        y,
        standardized: true,
        column_means,
        column_scales,
        response_mean,
        response_scale,
        response_scaled: scale_response,
    })
}

impl Dataset {
    /// Wraps raw data without transforming it.
    pub fn raw(x: Matrix, y: Vec<f64>) -> Result<Dataset> {
        check_shape(&x, &y)?;
        let p = x.ncols();
        Ok(Dataset {
            x,
            y,
            standardized: false,
            column_means: vec![0.0; p],
            column_scales: vec![1.0; p],
            response_mean: 0.0,
            response_scale: 1.0,
            response_scaled: false,
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    pub fn column_scales(&self) -> &[f64] {
        &self.column_scales
    }

    pub fn response_mean(&self) -> f64 {
        self.response_mean
    }

    pub fn response_scale(&self) -> f64 {
        self.response_scale
    }

    pub fn is_response_scaled(&self) -> bool {
        self.response_scaled
    }

    /// Maps coefficients on the standardized scale to (intercept, slopes) on
    /// the raw scale.
    pub fn coefficients_to_raw(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(beta.len(), self.p());
        let slopes: Vec<f64> = beta
            .iter()
            .zip(&self.column_scales)
            .map(|(b, s)| b * self.response_scale / s)
            .collect();
        let intercept = self.response_mean
            - slopes.iter().zip(&self.column_means).map(|(b, m)| b * m).sum::<f64>();
        (intercept, slopes)
    }

    /// Factor turning a standardized-scale coefficient (or its standard
    /// error) for column `k` into the raw scale.
    pub fn raw_scale_factor(&self, k: usize) -> f64 {
        self.response_scale / self.column_scales[k]
    }

    /// Maps true raw-scale coefficients into the coordinates of this dataset.
    pub fn coefficients_from_raw(&self, beta_raw: &[f64]) -> Vec<f64> {
        beta_raw.iter().zip(&self.column_scales).map(|(b, s)| b * s / self.response_scale).collect()
    }

    /// Predictions on the response's raw scale from standardized coefficients,
    /// evaluated on the stored (standardized) design.
    pub fn predict_raw(&self, beta: &[f64]) -> Vec<f64> {
        self.x
            .mul_vec(beta)
            .into_iter()
            .map(|v| v * self.response_scale + self.response_mean)
            .collect()
    }

    /// Rows `idx` of this dataset, re-standardized from the raw values when
    /// the dataset was standardized.
    pub fn subset_rows(&self, idx: &[usize]) -> Result<Dataset> {
        let mut raw_x = self.x.select_rows(idx);
        let mut raw_y: Vec<f64> = idx.iter().map(|&i| self.y[i]).collect();
        if !self.standardized {
            return Dataset::raw(raw_x, raw_y);
        }
        for k in 0..self.p() {
            let (m, s) = (self.column_means[k], self.column_scales[k]);
            raw_x.col_mut(k).iter_mut().for_each(|v| *v = *v * s + m);
        }
        raw_y.iter_mut().for_each(|v| *v = *v * self.response_scale + self.response_mean);
        standardize(&raw_x, &raw_y, self.response_scaled)
    }
}

/// Where the response comes from when ingesting CSV files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseSource {
    /// A separate single-column CSV file.
    File(std::path::PathBuf),
    /// A column of the design file, by header name.
    ColumnName(String),
    /// A column of the design file, by zero-based position.
    ColumnIndex(usize),
}

/// A parsed numeric CSV table.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub header: Option<Vec<String>>,
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl NumericTable {
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.values[i * self.cols + k]).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_row_major(self.rows, self.cols, &self.values)
    }

    fn without_column(&self, drop: usize) -> Matrix {
        let keep: Vec<usize> = (0..self.cols).filter(|&k| k != drop).collect();
        self.to_matrix().select_columns(&keep)
    }
}

/// Reads a comma-separated numeric table. Empty fields are rejected.
pub fn read_numeric_csv(path: &Path, has_header: bool) -> Result<NumericTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = if has_header {
        Some(reader.headers()?.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };
    let mut values = Vec::new();
    let mut cols = header.as_ref().map(Vec::len);
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        match cols {
            Some(c) if c != record.len() => {
                return Err(HotError::MalformedInput(format!(
                    "{}: row {} has {} fields, expected {}",
                    path.display(),
                    line + 1,
                    record.len(),
                    c
                )))
            }
            None => cols = Some(record.len()),
            _ => {}
        }
        for (k, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(HotError::MalformedInput(format!(
                    "{}: missing value at row {}, column {}",
                    path.display(),
                    line + 1,
                    k + 1
                )));
            }
            let v: f64 = field.parse().map_err(|_| {
                HotError::MalformedInput(format!(
                    "{}: non-numeric value {:?} at row {}, column {}",
                    path.display(),
                    field,
                    line + 1,
                    k + 1
                ))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(HotError::MalformedInput(format!("{}: no data rows", path.display())));
    }
    Ok(NumericTable { header, rows, cols, values })
}

/// Loads raw (untransformed) design and response from CSV.
pub fn load_csv(x_path: &Path, response: &ResponseSource, has_header: bool) -> Result<(Matrix, Vec<f64>)> {
    let table = read_numeric_csv(x_path, has_header)?;
    match response {
        ResponseSource::File(path) => {
            let yt = read_numeric_csv(path, has_header)?;
            if yt.cols != 1 {
                return Err(HotError::MalformedInput(format!(
                    "{}: response file must have exactly one column, found {}",
                    path.display(),
                    yt.cols
                )));
            }
            if yt.rows != table.rows {
                return Err(HotError::DimensionMismatch(format!(
                    "design has {} rows but response has {}",
                    table.rows, yt.rows
                )));
            }
            Ok((table.to_matrix(), yt.values))
        }
        ResponseSource::ColumnName(name) => {
            let header = table.header.as_ref().ok_or_else(|| {
                HotError::InvalidConfig("response column by name requires a header row".into())
            })?;
            let k = header.iter().position(|h| h == name).ok_or_else(|| {
                HotError::InvalidConfig(format!("no column named {name:?} in {}", x_path.display()))
            })?;
            Ok((table.without_column(k), table.column(k)))
        }
        ResponseSource::ColumnIndex(k) => {
            if *k >= table.cols {
                return Err(HotError::IndexOutOfRange { index: *k, len: table.cols });
            }
            Ok((table.without_column(*k), table.column(*k)))
        }
    }
}
