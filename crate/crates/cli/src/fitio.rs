//! CSV ingestion and the single-dataset fit workflow: parse a numeric matrix
//! (optional header auto-detected), run a chosen solver, optionally enforce
//! the constraints, and emit a JSON report.

use std::path::Path;

use eigenmean::likelihood::Dataset;
use eigenmean::solvers::{Alpha2, SolverConfig};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::experiment::{Method, Modifier};

/// Errors carry enough position information to point at the offending cell.
#[derive(Debug)]
pub enum FitError {
    Parse { line: usize, column: usize, detail: String },
    Domain(String),
    Solver(eigenmean::Error),
}

impl std::fmt::Display for FitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitError::Parse {
                line,
                column,
                detail,
            } => write!(f, "parse error at line {line}, column {column}: {detail}"),
            FitError::Domain(d) => write!(f, "domain error: {d}"),
            FitError::Solver(e) => write!(f, "solver error: {e}"),
        }
    }
}

impl std::error::Error for FitError {}

/// Parse a plain numeric CSV. A single leading header row is skipped when its
/// fields do not parse as numbers.
pub fn read_matrix_csv(text: &str) -> Result<DMatrix<f64>, FitError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut first_data_line = true;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(|f| f.trim()).collect();
        let mut parsed = Vec::with_capacity(fields.len());
        let mut failed_at = None;
        for (col, field) in fields.iter().enumerate() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                Ok(_) => {
                    failed_at = Some((col, "non-finite value".to_string()));
                    break;
                }
                Err(e) => {
                    failed_at = Some((col, format!("'{field}' is not a number ({e})")));
                    break;
                }
            }
        }
        if let Some((col, detail)) = failed_at {
            if first_data_line {
                // Header row: skip it once.
                first_data_line = false;
                continue;
            }
            return Err(FitError::Parse {
                line: idx + 1,
                column: col + 1,
                detail,
            });
        }
        if let Some(w) = width {
            if parsed.len() != w {
                return Err(FitError::Parse {
                    line: idx + 1,
                    column: parsed.len(),
                    detail: format!("expected {w} fields, found {}", parsed.len()),
                });
            }
        } else {
            width = Some(parsed.len());
        }
        first_data_line = false;
        rows.push(parsed);
    }
    let width = width.ok_or(FitError::Domain("file contains no data rows".into()))?;
    let n = rows.len();
    let mut m = DMatrix::zeros(n, width);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub alpha1: f64,
    pub alpha2: serde_json::Value,
    pub iterations: usize,
    pub converged: bool,
    pub pd: bool,
    pub symmetry_gap: f64,
    pub residual_h_norm: f64,
    pub det_gap: f64,
}

#[derive(Debug, Serialize)]
pub struct ModifiedReport {
    pub modifier: String,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub selected: Vec<usize>,
    pub lambda_pr: f64,
    pub residual_h_norm: f64,
    pub det_gap: f64,
    pub pd: bool,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub input: String,
    pub n: usize,
    pub p: usize,
    pub method: String,
    pub max_iter: usize,
    pub tol: f64,
    pub raw: EstimateReport,
    pub modified: Option<ModifiedReport>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Fit an external dataset with the chosen method, optionally modify it, and
/// assemble the report document.
pub fn fit_file(
    path: &Path,
    method: Method,
    modifier: Modifier,
    config: &SolverConfig,
) -> Result<FitReport, FitError> {
    let text = std::fs::read_to_string(path).map_err(|e| FitError::Domain(format!("{e}")))?;
    fit_matrix(&path.display().to_string(), &text, method, modifier, config)
}

pub fn fit_matrix(
    label: &str,
    text: &str,
    method: Method,
    modifier: Modifier,
    config: &SolverConfig,
) -> Result<FitReport, FitError> {
    let matrix = read_matrix_csv(text)?;
    let (n, p) = (matrix.nrows(), matrix.ncols());
    if n <= p {
        return Err(FitError::Domain(format!(
            "need more observations than dimensions, got n = {n}, p = {p}"
        )));
    }
    let data = Dataset::new(matrix).map_err(FitError::Solver)?;
    let report = match method {
        Method::Smle => eigenmean::solvers::smle(&data, config),
        Method::Sc => eigenmean::solvers::sc_mle(&data, config),
        Method::As => eigenmean::solvers::as_mle(&data, config),
    }
    .map_err(FitError::Solver)?;
    let alpha2 = match &report.multipliers.alpha2 {
        Alpha2::Vector(v) => serde_json::json!(v.as_slice()),
        Alpha2::Scalar(s) => serde_json::json!(s),
    };
    let raw = EstimateReport {
        mean: report.estimate.mean.as_slice().to_vec(),
        cov: matrix_rows(&report.estimate.cov),
        alpha1: report.multipliers.alpha1,
        alpha2,
        iterations: report.iterations_used,
        converged: report.converged,
        pd: report.pd,
        symmetry_gap: report.symmetry_gap,
        residual_h_norm: report.residuals.h_norm(),
        det_gap: report.residuals.det_gap,
    };
    let modified = match modifier.apply(&report.estimate) {
        None => None,
        Some(result) => {
            let m = result.map_err(FitError::Solver)?;
            Some(ModifiedReport {
                modifier: modifier.label().into(),
                mean: m.estimate.mean.as_slice().to_vec(),
                cov: matrix_rows(&m.estimate.cov),
                selected: m.selected.clone(),
                lambda_pr: m.lambda_pr,
                residual_h_norm: m.residuals.h_norm(),
                det_gap: m.residuals.det_gap,
                pd: m.estimate.is_positive_definite(),
            })
        }
    };
    Ok(FitReport {
        input: label.to_string(),
        n,
        p,
        method: method.label().into(),
        max_iter: config.max_iter,
        tol: config.tol,
        raw,
        modified,
    })
}
