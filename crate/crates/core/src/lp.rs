//! Dense two-phase simplex for the small LPs used by redundancy checks,
//! containment certificates and projection pruning.
//!
//! Maximizes c'x over { x | T x <= d } with free x. Variables are split
//! into positive and negative parts, slacks complete the rows, and rows
//! with negative right-hand sides get artificial variables for phase 1.
//! Bland's rule (lowest eligible index enters; ratio ties resolved by
//! lowest basis index) makes every solve deterministic and cycle-free.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Outcome of an LP solve on a polytope.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: DVector<f64> },
    Unbounded,
    Empty,
}

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-9;

struct Tableau {
    /// Constraint rows in canonical form, one extra column for the rhs.
    rows: Vec<Vec<f64>>,
    /// Phase-2 objective row (z_j - c_j convention) with rhs = objective.
    obj: Vec<f64>,
    /// Phase-1 objective row, present until phase 1 finishes.
    art_obj: Option<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
    nart: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        let inv = 1.0 / p;
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        // Re-borrow dance: take the pivot row out to update the rest.
        let prow = std::mem::take(&mut self.rows[row]);
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(prow.iter()) {
                *v -= f * pv;
            }
        }
        if let Some(ao) = self.art_obj.as_mut() {
            let f = ao[col];
            if f != 0.0 {
                for (v, pv) in ao.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
            }
        }
        self.rows[row] = prow;
        self.basis[row] = col;
    }

    /// One simplex phase under Bland's rule. `allow_art` admits artificial
    /// columns as entering candidates (phase 1 only). Returns Ok(true) on
    /// optimality, Ok(false) if the objective is unbounded.
    fn run(&mut self, phase1: bool, cutoff: Option<f64>, iter_cap: usize) -> Result<bool> {
        let enter_limit = if phase1 { self.ncols } else { self.ncols - self.nart };
        for _ in 0..iter_cap {
            if let Some(cut) = cutoff {
                if self.obj[self.ncols] > cut {
                    return Ok(true);
                }
            }
            let objrow: &[f64] = if phase1 {
                self.art_obj.as_ref().expect("phase-1 objective")
            } else {
                &self.obj
            };
            let mut enter = None;
            for (j, &v) in objrow.iter().take(enter_limit).enumerate() {
                if v < -COST_EPS {
                    enter = Some(j);
                    break;
                }
            }
            let Some(col) = enter else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, r) in self.rows.iter().enumerate() {
                let a = r[col];
                if a > PIVOT_EPS {
                    let ratio = r[self.ncols] / a;
                    let better = match leave {
                        None => true,
                        Some((bi, br)) => {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Ok(false);
            };
            self.pivot(row, col);
        }
        Err(Error::MaxIterations)
    }

    fn extract(&self, nvars: usize) -> DVector<f64> {
        let mut vals = vec![0.0; self.ncols];
        for (i, &b) in self.basis.iter().enumerate() {
            vals[b] = self.rows[i][self.ncols];
        }
        DVector::from_iterator(nvars, (0..nvars).map(|k| vals[k] - vals[nvars + k]))
    }
}

fn build(t: &DMatrix<f64>, d: &DVector<f64>, c: &DVector<f64>) -> Tableau {
    let q = t.nrows();
    let nv = t.ncols();
    let nart = (0..q).filter(|&i| d[i] < 0.0).count();
    let ncols = 2 * nv + q + nart;
    let mut rows = vec![vec![0.0; ncols + 1]; q];
    let mut basis = vec![0usize; q];
    let mut art = 0usize;
    for i in 0..q {
        let sign = if d[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            rows[i][j] = sign * t[(i, j)];
            rows[i][nv + j] = -sign * t[(i, j)];
        }
        rows[i][2 * nv + i] = sign;
        rows[i][ncols] = sign * d[i];
        if sign < 0.0 {
            let acol = 2 * nv + q + art;
            rows[i][acol] = 1.0;
            basis[i] = acol;
            art += 1;
        } else {
            basis[i] = 2 * nv + i;
        }
    }
    // Phase-2 objective (maximize c'x): reduced costs start at -c since all
    // initial basic variables carry zero cost.
    let mut obj = vec![0.0; ncols + 1];
    for j in 0..nv {
        obj[j] = -c[j];
        obj[nv + j] = c[j];
    }
    // Phase-1 objective (maximize minus the artificial sum), canonicalized
    // against the artificial basic rows.
    let art_obj = if nart > 0 {
        let mut ao = vec![0.0; ncols + 1];
        for a in 0..nart {
            ao[2 * nv + q + a] = 1.0;
        }
        for i in 0..q {
            if basis[i] >= 2 * nv + q {
                for j in 0..=ncols {
                    ao[j] -= rows[i][j];
                }
            }
        }
        Some(ao)
    } else {
        None
    };
    Tableau {
        rows,
        obj,
        art_obj,
        basis,
        ncols,
        nart,
    }
}

fn solve(
    t: &DMatrix<f64>,
    d: &DVector<f64>,
    c: &DVector<f64>,
    cutoff: Option<f64>,
) -> Result<LpOutcome> {
    assert_eq!(t.ncols(), c.len(), "objective dimension");
    assert_eq!(t.nrows(), d.len(), "rhs dimension");
    let nv = t.ncols();
    let q = t.nrows();
    if q == 0 {
        // No constraints: anything with a nonzero objective is unbounded.
        return Ok(if c.amax() > 0.0 {
            LpOutcome::Unbounded
        } else {
            LpOutcome::Optimal {
                value: 0.0,
                point: DVector::zeros(nv),
            }
        });
    }
    let iter_cap = 2000 + 200 * (2 * nv + 2 * q);
    let mut tab = build(t, d, c);
    if tab.art_obj.is_some() {
        tab.run(true, None, iter_cap)?;
        let infeas = -tab.art_obj.as_ref().expect("phase-1 objective")[tab.ncols];
        let feas_tol = 1e-9 * (1.0 + d.amax());
        if infeas > feas_tol {
            return Ok(LpOutcome::Empty);
        }
        // Pivot leftover artificial basics out; rows that cannot be pivoted
        // are redundant combinations of the others and are dropped.
        let art_start = tab.ncols - tab.nart;
        let mut drop_rows = Vec::new();
        for i in 0..tab.rows.len() {
            if tab.basis[i] >= art_start {
                let col = (0..art_start).find(|&j| tab.rows[i][j].abs() > 1e-9);
                match col {
                    Some(j) => tab.pivot(i, j),
                    None => drop_rows.push(i),
                }
            }
        }
        for &i in drop_rows.iter().rev() {
            tab.rows.remove(i);
            tab.basis.remove(i);
        }
        tab.art_obj = None;
    }
    if !tab.run(false, cutoff, iter_cap)? {
        return Ok(LpOutcome::Unbounded);
    }
    let point = tab.extract(nv);
    Ok(LpOutcome::Optimal {
        value: c.dot(&point),
        point,
    })
}

/// Maximizes c'x over { x | T x <= d }.
pub fn lp_max(t: &DMatrix<f64>, d: &DVector<f64>, c: &DVector<f64>) -> Result<LpOutcome> {
    solve(t, d, c, None)
}

/// Reports whether max c'x exceeds `threshold`, stopping early once any
/// vertex surpasses it. The verdict matches a full solve because the
/// simplex objective increases monotonically.
pub fn lp_exceeds(
    t: &DMatrix<f64>,
    d: &DVector<f64>,
    c: &DVector<f64>,
    threshold: f64,
) -> Result<bool> {
    match solve(t, d, c, Some(threshold))? {
        LpOutcome::Optimal { value, .. } => Ok(value > threshold),
        LpOutcome::Unbounded => Ok(true),
        LpOutcome::Empty => Err(Error::Empty),
    }
}
