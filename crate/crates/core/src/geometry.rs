//! Polytopes in halfspace form and the operations the region machinery
//! needs: membership, variable elimination, redundancy removal and
//! LP-certified containment.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::lp::{lp_exceeds, lp_max, LpOutcome};

/// Default slack accepted when classifying a row as redundant or a point
/// as a member.
pub const ROW_TOL: f64 = 1e-9;

/// A polytope { x | T x <= d }. Rows may be non-strict or strict depending
/// on the membership test applied, not on the representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    t: DMatrix<f64>,
    d: DVector<f64>,
}

impl Polytope {
    /// Builds a polytope, rejecting non-finite entries and rows that are
    /// certifiably empty (zero normal with negative offset).
    pub fn new(t: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        if t.nrows() != d.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint rows but {} offsets",
                t.nrows(),
                d.len()
            )));
        }
        if t.iter().any(|v| !v.is_finite()) || d.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite polytope entry".into()));
        }
        for i in 0..t.nrows() {
            if t.row(i).amax() == 0.0 && d[i] < -ROW_TOL {
                return Err(Error::Empty);
            }
        }
        Ok(Polytope { t, d })
    }

    /// An axis-aligned box from per-coordinate (lower, upper) bounds,
    /// encoded as the rows [I; -I] x <= [upper; -lower].
    pub fn from_box(bounds: &[(f64, f64)]) -> Self {
        let n = bounds.len();
        let mut t = DMatrix::zeros(2 * n, n);
        let mut d = DVector::zeros(2 * n);
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            t[(i, i)] = 1.0;
            d[i] = hi;
            t[(n + i, i)] = -1.0;
            d[n + i] = -lo;
        }
        Polytope { t, d }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn rows(&self) -> usize {
        self.t.nrows()
    }

    pub fn dim(&self) -> usize {
        self.t.ncols()
    }

    pub fn row(&self, i: usize) -> (RowDVector<f64>, f64) {
        (RowDVector::from(self.t.row(i)), self.d[i])
    }

    /// Non-strict membership with slack `tol` on every row.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let lhs = &self.t * x;
        (0..self.rows()).all(|i| lhs[i] <= self.d[i] + tol)
    }

    /// Concatenates the rows of two polytopes over the same space.
    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot intersect dimension {} with {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut t = DMatrix::zeros(self.rows() + other.rows(), self.dim());
        t.view_mut((0, 0), (self.rows(), self.dim())).copy_from(&self.t);
        t.view_mut((self.rows(), 0), (other.rows(), self.dim()))
            .copy_from(&other.t);
        let mut d = DVector::zeros(self.rows() + other.rows());
        d.rows_mut(0, self.rows()).copy_from(&self.d);
        d.rows_mut(self.rows(), other.rows()).copy_from(&other.d);
        Ok(Polytope { t, d })
    }

    /// The preimage { x | T (M x + v) <= d } under an affine map.
    pub fn affine_preimage(&self, m: &DMatrix<f64>, v: &DVector<f64>) -> Polytope {
        Polytope {
            t: &self.t * m,
            d: &self.d - &self.t * v,
        }
    }

    /// Maximizes c'x over the polytope.
    pub fn maximize(&self, c: &DVector<f64>) -> Result<LpOutcome> {
        lp_max(&self.t, &self.d, c)
    }

    /// Chebyshev center and radius: the deepest point with respect to the
    /// row normals. Returns Empty for empty polytopes and Unbounded when
    /// the depth grows without limit.
    pub fn chebyshev_center(&self) -> Result<(DVector<f64>, f64)> {
        let n = self.dim();
        let mut t = DMatrix::zeros(self.rows(), n + 1);
        t.view_mut((0, 0), (self.rows(), n)).copy_from(&self.t);
        for i in 0..self.rows() {
            t[(i, n)] = self.t.row(i).norm();
        }
        let mut c = DVector::zeros(n + 1);
        c[n] = 1.0;
        match lp_max(&t, &self.d, &c)? {
            LpOutcome::Optimal { point, .. } => {
                let center = DVector::from(point.rows(0, n).clone_owned());
                Ok((center, point[n]))
            }
            LpOutcome::Unbounded => Err(Error::Unbounded),
            LpOutcome::Empty => Err(Error::Empty),
        }
    }
}

/// Removes rows implied by the remaining ones (drop-one LP test, slack
/// `ROW_TOL`). Scans ascending so the result is deterministic.
pub fn remove_redundant(p: &Polytope) -> Result<Polytope> {
    let mut keep: Vec<usize> = (0..p.rows()).collect();
    let mut i = 0;
    while i < keep.len() {
        if keep.len() == 1 {
            break;
        }
        let row = keep[i];
        let others: Vec<usize> = keep.iter().copied().filter(|&r| r != row).collect();
        let t = p.t.select_rows(others.iter());
        let d = p.d.select_rows(others.iter());
        let c = DVector::from(p.t.row(row).transpose());
        if lp_exceeds(&t, &d, &c, p.d[row] + ROW_TOL)? {
            i += 1;
        } else {
            keep.remove(i);
        }
    }
    Ok(Polytope {
        t: p.t.select_rows(keep.iter()),
        d: p.d.select_rows(keep.iter()),
    })
}

/// One Fourier-Motzkin stage: eliminates the given column. Combined rows
/// are normalized; tautologies (zero normal, nonnegative offset) are
/// dropped, and a zero normal with negative offset certifies emptiness.
pub fn eliminate_column(p: &Polytope, col: usize, row_cap: usize) -> Result<Polytope> {
    const COEF_EPS: f64 = 1e-12;
    let n = p.dim();
    assert!(col < n, "column out of range");
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offs: Vec<f64> = Vec::new();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());

    let push = |coeffs: Vec<f64>, off: f64, rows: &mut Vec<Vec<f64>>, offs: &mut Vec<f64>| -> Result<()> {
        let norm = coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < COEF_EPS {
            if off < -ROW_TOL {
                return Err(Error::Empty);
            }
            return Ok(());
        }
        rows.push(coeffs.iter().map(|v| v / norm).collect());
        offs.push(off / norm);
        Ok(())
    };

    for i in 0..p.rows() {
        let a = p.t[(i, col)];
        if a > COEF_EPS {
            pos.push(i);
        } else if a < -COEF_EPS {
            neg.push(i);
        } else {
            let coeffs: Vec<f64> = (0..n).filter(|&j| j != col).map(|j| p.t[(i, j)]).collect();
            push(coeffs, p.d[i], &mut rows, &mut offs)?;
        }
    }
    for &i in &pos {
        for &j in &neg {
            let (ai, aj) = (p.t[(i, col)], -p.t[(j, col)]);
            let coeffs: Vec<f64> = (0..n)
                .filter(|&k| k != col)
                .map(|k| aj * p.t[(i, k)] + ai * p.t[(j, k)])
                .collect();
            push(coeffs, aj * p.d[i] + ai * p.d[j], &mut rows, &mut offs)?;
            if rows.len() > row_cap {
                return Err(Error::ProjectionTooLarge { rows: rows.len() });
            }
        }
    }
    if rows.is_empty() {
        // The projection imposes no constraints in the remaining space.
        return Polytope::new(DMatrix::zeros(0, n - 1), DVector::zeros(0));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Polytope::new(
        DMatrix::from_row_slice(rows.len(), n - 1, &flat),
        DVector::from_vec(offs),
    )
}

/// Projects onto the first `keep` coordinates by eliminating trailing
/// columns one at a time, pruning redundant rows after every stage.
pub fn project_prefix(p: &Polytope, keep: usize, row_cap: usize) -> Result<Polytope> {
    assert!(keep <= p.dim());
    let mut cur = p.clone();
    while cur.dim() > keep {
        cur = eliminate_column(&cur, cur.dim() - 1, row_cap)?;
        if cur.rows() > row_cap {
            return Err(Error::ProjectionTooLarge { rows: cur.rows() });
        }
        cur = remove_redundant(&cur)?;
    }
    Ok(cur)
}

/// LP certificate that `inner` is contained in `outer`: every `outer` row
/// stays below its offset (plus `tol`) over `inner`.
pub fn contains_polytope(outer: &Polytope, inner: &Polytope, tol: f64) -> Result<bool> {
    for i in 0..outer.rows() {
        let c = DVector::from(outer.t.row(i).transpose());
        match lp_max(&inner.t, &inner.d, &c)? {
            LpOutcome::Optimal { value, .. } => {
                if value > outer.d[i] + tol {
                    return Ok(false);
                }
            }
            LpOutcome::Unbounded => return Ok(false),
            LpOutcome::Empty => return Ok(true),
        }
    }
    Ok(true)
}

/// Mutual containment with the same tolerance on both directions.
pub fn same_set(a: &Polytope, b: &Polytope, tol: f64) -> Result<bool> {
    Ok(contains_polytope(a, b, tol)? && contains_polytope(b, a, tol)?)
}
