//! User-facing problem definition and its JSON file format.

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use crate::error::{Error, Result};

/// A linear MPC problem: plant, weights, horizon, box constraints and the
/// cost-decrease factor used by the stability region.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    /// State dynamics, n×n.
    pub a: DMatrix<f64>,
    /// Input map, n×m.
    pub b: DMatrix<f64>,
    /// State weight, n×n, symmetric positive definite.
    pub q: DMatrix<f64>,
    /// Input weight, m×m, symmetric positive definite.
    pub r: DMatrix<f64>,
    /// Prediction horizon in steps.
    pub horizon: usize,
    /// Per-state (lower, upper) bounds; lower < 0 < upper.
    pub x_bounds: Vec<(f64, f64)>,
    /// Per-input (lower, upper) bounds; lower < 0 < upper.
    pub u_bounds: Vec<(f64, f64)>,
    /// Cost-decrease factor in (0, 1].
    pub lambda: f64,
}

impl ProblemSpec {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Checks dimensional consistency, weight definiteness and bound signs.
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        if self.a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if self.b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows but A has {}",
                self.b.nrows(),
                n
            )));
        }
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Q must be {n}x{n}, got {}x{}",
                self.q.nrows(),
                self.q.ncols()
            )));
        }
        if self.r.nrows() != m || self.r.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "R must be {m}x{m}, got {}x{}",
                self.r.nrows(),
                self.r.ncols()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::DimensionMismatch("horizon N must be positive".into()));
        }
        if self.x_bounds.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "x_bounds has {} entries for {} states",
                self.x_bounds.len(),
                n
            )));
        }
        if self.u_bounds.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "u_bounds has {} entries for {} inputs",
                self.u_bounds.len(),
                m
            )));
        }
        check_spd(&self.q, "Q")?;
        check_spd(&self.r, "R")?;
        for (i, &(lo, hi)) in self.x_bounds.iter().enumerate() {
            if !(lo < 0.0 && 0.0 < hi) {
                return Err(Error::BadProblemFile(format!(
                    "x_bounds[{i}] = ({lo}, {hi}) must satisfy lower < 0 < upper"
                )));
            }
        }
        for (i, &(lo, hi)) in self.u_bounds.iter().enumerate() {
            if !(lo < 0.0 && 0.0 < hi) {
                return Err(Error::BadProblemFile(format!(
                    "u_bounds[{i}] = ({lo}, {hi}) must satisfy lower < 0 < upper"
                )));
            }
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::BadProblemFile(format!(
                "lambda = {} must lie in (0, 1]",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Parses and validates a problem from its JSON text representation.
    pub fn from_json(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| Error::BadProblemFile(format!("invalid JSON: {e}")))?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::BadProblemFile("top level must be an object".into()))?;

        let a = parse_matrix(obj, "A")?;
        let b = parse_matrix(obj, "B")?;
        let q = parse_matrix(obj, "Q")?;
        let r = parse_matrix(obj, "R")?;
        let horizon = obj
            .get("N")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::BadProblemFile("N: expected a positive integer".into()))?
            as usize;
        let lambda = obj
            .get("lambda")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::BadProblemFile("lambda: expected a number".into()))?;
        let x_bounds = parse_bounds(obj, "x_bounds")?;
        let u_bounds = parse_bounds(obj, "u_bounds")?;

        let spec = ProblemSpec {
            a,
            b,
            q,
            r,
            horizon,
            x_bounds,
            u_bounds,
            lambda,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a problem from a JSON file.
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::BadProblemFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Serializes the problem back to its JSON file format.
    pub fn to_json(&self) -> String {
        let mat = |m: &DMatrix<f64>| -> Value {
            Value::Array(
                (0..m.nrows())
                    .map(|i| {
                        Value::Array(
                            (0..m.ncols())
                                .map(|j| serde_json::json!(m[(i, j)]))
                                .collect(),
                        )
                    })
                    .collect(),
            )
        };
        let bounds = |b: &[(f64, f64)]| -> Value {
            Value::Array(
                b.iter()
                    .map(|&(lo, hi)| Value::Array(vec![serde_json::json!(lo), serde_json::json!(hi)]))
                    .collect(),
            )
        };
        let mut obj = serde_json::Map::new();
        obj.insert("A".into(), mat(&self.a));
        obj.insert("B".into(), mat(&self.b));
        obj.insert("Q".into(), mat(&self.q));
        obj.insert("R".into(), mat(&self.r));
        obj.insert("N".into(), serde_json::json!(self.horizon));
        obj.insert("lambda".into(), serde_json::json!(self.lambda));
        obj.insert("x_bounds".into(), bounds(&self.x_bounds));
        obj.insert("u_bounds".into(), bounds(&self.u_bounds));
        serde_json::to_string_pretty(&Value::Object(obj)).expect("JSON serialization")
    }
}

fn check_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let sym_err = (m - m.transpose()).abs().max();
    if sym_err > 1e-12 * (1.0 + m.abs().max()) {
        return Err(Error::BadProblemFile(format!("{name} is not symmetric")));
    }
    if nalgebra::Cholesky::new(m.clone()).is_none() {
        return Err(Error::BadProblemFile(format!(
            "{name} is not positive definite"
        )));
    }
    Ok(())
}

/// Reads a row-major matrix field, reporting the offending row/column on
/// malformed entries.
fn parse_matrix(obj: &serde_json::Map<String, Value>, name: &str) -> Result<DMatrix<f64>> {
    let rows = obj
        .get(name)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::BadProblemFile(format!("{name}: expected an array of rows")))?;
    if rows.is_empty() {
        return Err(Error::BadProblemFile(format!("{name}: matrix has no rows")));
    }
    let mut data: Vec<f64> = Vec::new();
    let mut ncols = 0usize;
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| {
            Error::BadProblemFile(format!("{name} row {i}: expected an array of numbers"))
        })?;
        if i == 0 {
            ncols = row.len();
            if ncols == 0 {
                return Err(Error::BadProblemFile(format!("{name} row 0: empty row")));
            }
        } else if row.len() != ncols {
            return Err(Error::BadProblemFile(format!(
                "{name} row {i}: expected {ncols} columns, found {}",
                row.len()
            )));
        }
        for (j, v) in row.iter().enumerate() {
            let x = v.as_f64().ok_or_else(|| {
                Error::BadProblemFile(format!("{name} row {i} column {j}: not a number"))
            })?;
            if !x.is_finite() {
                return Err(Error::BadProblemFile(format!(
                    "{name} row {i} column {j}: not finite"
                )));
            }
            data.push(x);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

fn parse_bounds(obj: &serde_json::Map<String, Value>, name: &str) -> Result<Vec<(f64, f64)>> {
    let rows = obj
        .get(name)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::BadProblemFile(format!("{name}: expected an array of pairs")))?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let pair = row.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
            Error::BadProblemFile(format!("{name} row {i}: expected a [lower, upper] pair"))
        })?;
        let lo = pair[0].as_f64().ok_or_else(|| {
            Error::BadProblemFile(format!("{name} row {i} column 0: not a number"))
        })?;
        let hi = pair[1].as_f64().ok_or_else(|| {
            Error::BadProblemFile(format!("{name} row {i} column 1: not a number"))
        })?;
        out.push((lo, hi));
    }
    Ok(out)
}

/// Stacks per-coordinate bounds into vectors (lower, upper).
pub fn bounds_to_vectors(bounds: &[(f64, f64)]) -> (DVector<f64>, DVector<f64>) {
    let lo = DVector::from_iterator(bounds.len(), bounds.iter().map(|b| b.0));
    let hi = DVector::from_iterator(bounds.len(), bounds.iter().map(|b| b.1));
    (lo, hi)
}
