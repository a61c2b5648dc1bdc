//! Turns a problem definition into a condensed QP over the stacked input
//! sequence, including the Riccati terminal weight, the LQR gain and the
//! maximal admissible terminal set.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::geometry::{Polytope, ROW_TOL};
use crate::lp::lp_exceeds;
use crate::problem::ProblemSpec;

/// What a constraint row restricts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Input,
    State,
    Terminal,
}

/// Provenance of one constraint row: `stage` is the time index of the
/// restricted quantity (u(k) for inputs, x(k) for states, N for terminal
/// rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowTag {
    pub stage: usize,
    pub kind: RowKind,
}

/// The QP min 1/2 U'HU + x'FU + 1/2 x'Yx s.t. GU <= w + Ex together with
/// its terminal ingredients. The scaling absorbs the 1/2 convention so the
/// objective equals the rolled-out trajectory cost.
#[derive(Debug, Clone)]
pub struct CondensedQP {
    pub h: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub w: DVector<f64>,
    pub e: DMatrix<f64>,
    /// S = E + G H^-1 F'.
    pub s: DMatrix<f64>,
    /// Riccati terminal weight.
    pub p: DMatrix<f64>,
    pub k_lqr: DMatrix<f64>,
    pub terminal_set: Polytope,
    pub row_tags: Vec<RowTag>,
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
    h_chol: Cholesky<f64, Dyn>,
}

impl CondensedQP {
    /// Number of constraint rows q.
    pub fn rows(&self) -> usize {
        self.g.nrows()
    }

    /// Number of optimization variables mN.
    pub fn vars(&self) -> usize {
        self.g.ncols()
    }

    /// Solves H z = rhs using the cached factorization.
    pub fn h_solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.h_chol.solve(rhs)
    }

    /// The QP objective evaluated at a parameter/sequence pair.
    pub fn objective(&self, x: &DVector<f64>, u_bar: &DVector<f64>) -> f64 {
        0.5 * (u_bar.dot(&(&self.h * u_bar))) + (x.transpose() * &self.f * u_bar)[0]
            + 0.5 * (x.dot(&(&self.y * x)))
    }

    /// Residuals G U - w - E x of every constraint row.
    pub fn residuals(&self, x: &DVector<f64>, u_bar: &DVector<f64>) -> DVector<f64> {
        &self.g * u_bar - &self.w - &self.e * x
    }
}

fn mat_pow(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = &out * a;
    }
    out
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Solves the discrete-time algebraic Riccati equation by fixed-point
/// iteration from P0 = Q. Converges for stabilizable (A, B) with the
/// assumed definite weights; the residual is verified before returning.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    const CAP: usize = 100_000;
    let step = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let bpa = b.transpose() * p * a;
        let rbpb = r + b.transpose() * p * b;
        let chol = Cholesky::new(rbpb).ok_or(Error::NoConvergence { iterations: CAP })?;
        Ok(q + a.transpose() * p * a - bpa.transpose() * chol.solve(&bpa))
    };
    let mut p = q.clone();
    let mut converged = false;
    for _ in 0..CAP {
        let next = step(&p)?;
        let diff = (&next - &p).abs().max();
        p = next;
        if diff <= 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: CAP });
    }
    let residual = (&p - step(&p)?).norm();
    if residual > 1e-9 * p.norm() {
        return Err(Error::NoConvergence { iterations: CAP });
    }
    Ok(p)
}

/// K = -(R + B'PB)^-1 B'PA, the infinite-horizon LQR feedback gain.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let rbpb = r + b.transpose() * p * b;
    let chol = Cholesky::new(rbpb).ok_or(Error::SingularGainSystem)?;
    Ok(-chol.solve(&(b.transpose() * p * a)))
}

/// Maximal admissible set of the closed loop x+ = A_cl x under the state
/// set X and the input set U applied to u = K x.
///
/// Starts from all rows of X and the K-image of U, then walks the
/// constraint images forward through the dynamics. Within an iteration the
/// input images are examined before the state images; each candidate row
/// is kept only if it cuts the set built so far (LP test with slack
/// `ROW_TOL`). Since every discarded row is certified against a superset
/// of the final set, the result is positively invariant, and the loop
/// terminates once a whole iteration adds nothing.
pub fn terminal_set(
    a_cl: &DMatrix<f64>,
    x_set: &Polytope,
    u_set: &Polytope,
    k_lqr: &DMatrix<f64>,
) -> Result<Polytope> {
    const CAP: usize = 500;
    let n = a_cl.nrows();
    let ku = u_set.matrix() * k_lqr;
    let mut t = x_set.matrix().clone_owned();
    t = DMatrix::from_rows(
        &t.row_iter()
            .chain(ku.row_iter())
            .map(|r| r.clone_owned())
            .collect::<Vec<_>>(),
    );
    let mut d = DVector::zeros(x_set.rows() + u_set.rows());
    d.rows_mut(0, x_set.rows()).copy_from(x_set.offsets());
    d.rows_mut(x_set.rows(), u_set.rows()).copy_from(u_set.offsets());

    let mut power = a_cl.clone();
    for _ in 1..=CAP {
        let mut added = 0usize;
        let cand_t = DMatrix::from_rows(
            &(&ku * &power)
                .row_iter()
                .chain((x_set.matrix() * &power).row_iter())
                .map(|r| r.clone_owned())
                .collect::<Vec<_>>(),
        );
        let mut cand_d = DVector::zeros(u_set.rows() + x_set.rows());
        cand_d.rows_mut(0, u_set.rows()).copy_from(u_set.offsets());
        cand_d
            .rows_mut(u_set.rows(), x_set.rows())
            .copy_from(x_set.offsets());
        for i in 0..cand_t.nrows() {
            let c = DVector::from(cand_t.row(i).transpose());
            if lp_exceeds(&t, &d, &c, cand_d[i] + ROW_TOL)? {
                let last = t.nrows();
                t = t.insert_row(last, 0.0);
                for j in 0..n {
                    t[(last, j)] = cand_t[(i, j)];
                }
                let dn = d.len();
                d = d.insert_row(dn, cand_d[i]);
                added += 1;
            }
        }
        if added == 0 {
            return Polytope::new(t, d);
        }
        power = &power * a_cl;
    }
    Err(Error::NotFinitelyDetermined { cap: CAP })
}

/// Builds the condensed QP for a validated problem: terminal ingredients,
/// cost matrices and the stacked constraint rows in the fixed order
/// u(k), then x(k+1) for k <= N-2, stage by stage, then terminal rows on
/// x(N). Bounds on x(0) are not encoded: the initial state is a parameter
/// and such rows would have a zero G-part.
pub fn condense(spec: &ProblemSpec) -> Result<CondensedQP> {
    spec.validate()?;
    let (n, m, nh) = (spec.state_dim(), spec.input_dim(), spec.horizon);
    let p = solve_dare(&spec.a, &spec.b, &spec.q, &spec.r)?;
    let k_lqr = lqr_gain(&spec.a, &spec.b, &spec.r, &p)?;
    let a_cl = &spec.a + &spec.b * &k_lqr;
    if spectral_radius(&a_cl) >= 1.0 {
        return Err(Error::NoConvergence { iterations: 0 });
    }
    let x_set = Polytope::from_box(&spec.x_bounds);
    let u_set = Polytope::from_box(&spec.u_bounds);
    let terminal = terminal_set(&a_cl, &x_set, &u_set, &k_lqr)?;

    // Prediction matrices: stacked states (x(1) ... x(N)) = phi x0 + gamma U.
    let mut phi = DMatrix::zeros(nh * n, n);
    let mut gamma = DMatrix::zeros(nh * n, nh * m);
    let mut apow = vec![DMatrix::identity(n, n)];
    for k in 1..=nh {
        apow.push(&apow[k - 1] * &spec.a);
    }
    for k in 0..nh {
        phi.view_mut((k * n, 0), (n, n)).copy_from(&apow[k + 1]);
        for j in 0..=k {
            let blk = &apow[k - j] * &spec.b;
            gamma.view_mut((k * n, j * m), (n, m)).copy_from(&blk);
        }
    }
    let mut qbar = DMatrix::zeros(nh * n, nh * n);
    for k in 0..nh {
        let wgt = if k + 1 == nh { &p } else { &spec.q };
        qbar.view_mut((k * n, k * n), (n, n)).copy_from(wgt);
    }
    let mut rbar = DMatrix::zeros(nh * m, nh * m);
    for k in 0..nh {
        rbar.view_mut((k * m, k * m), (m, m)).copy_from(&spec.r);
    }
    let h_raw = 2.0 * (gamma.transpose() * &qbar * &gamma + rbar);
    let h = 0.5 * (&h_raw + h_raw.transpose());
    let f = 2.0 * phi.transpose() * &qbar * &gamma;
    let y_raw = 2.0 * (&spec.q + phi.transpose() * &qbar * &phi);
    let y = 0.5 * (&y_raw + y_raw.transpose());
    let h_chol = Cholesky::new(h.clone()).ok_or_else(|| {
        Error::DimensionMismatch("condensed Hessian is not positive definite".into())
    })?;

    let q_rows = 2 * m * nh + 2 * n * (nh - 1) + terminal.rows();
    let mut g = DMatrix::zeros(q_rows, nh * m);
    let mut e = DMatrix::zeros(q_rows, n);
    let mut w = DVector::zeros(q_rows);
    let mut tags = Vec::with_capacity(q_rows);
    let mut at = 0usize;
    for k in 0..nh {
        g.view_mut((at, k * m), (2 * m, m)).copy_from(u_set.matrix());
        w.rows_mut(at, 2 * m).copy_from(u_set.offsets());
        for _ in 0..2 * m {
            tags.push(RowTag {
                stage: k,
                kind: RowKind::Input,
            });
        }
        at += 2 * m;
        if k + 1 < nh {
            let gam = gamma.view((k * n, 0), (n, nh * m));
            g.view_mut((at, 0), (2 * n, nh * m))
                .copy_from(&(x_set.matrix() * gam));
            e.view_mut((at, 0), (2 * n, n))
                .copy_from(&(-(x_set.matrix() * &apow[k + 1])));
            w.rows_mut(at, 2 * n).copy_from(x_set.offsets());
            for _ in 0..2 * n {
                tags.push(RowTag {
                    stage: k + 1,
                    kind: RowKind::State,
                });
            }
            at += 2 * n;
        }
    }
    let gam_n = gamma.view(((nh - 1) * n, 0), (n, nh * m));
    let tr = terminal.rows();
    g.view_mut((at, 0), (tr, nh * m))
        .copy_from(&(terminal.matrix() * gam_n));
    e.view_mut((at, 0), (tr, n))
        .copy_from(&(-(terminal.matrix() * &apow[nh])));
    w.rows_mut(at, tr).copy_from(terminal.offsets());
    for _ in 0..tr {
        tags.push(RowTag {
            stage: nh,
            kind: RowKind::Terminal,
        });
    }

    let s = &e + &g * h_chol.solve(&f.transpose());
    Ok(CondensedQP {
        h,
        f,
        y,
        g,
        w,
        e,
        s,
        p,
        k_lqr,
        terminal_set: terminal,
        row_tags: tags,
        state_dim: n,
        input_dim: m,
        horizon: nh,
        h_chol,
    })
}

/// Rolls the open-loop dynamics forward and accumulates the stage costs
/// plus the terminal penalty; the condensed objective must match this.
pub fn simulated_cost(spec: &ProblemSpec, p: &DMatrix<f64>, x0: &DVector<f64>, u_bar: &DVector<f64>) -> f64 {
    let m = spec.input_dim();
    let mut x = x0.clone();
    let mut cost = 0.0;
    for k in 0..spec.horizon {
        let u = DVector::from(u_bar.rows(k * m, m).clone_owned());
        cost += x.dot(&(&spec.q * &x)) + u.dot(&(&spec.r * &u));
        x = &spec.a * &x + &spec.b * &u;
    }
    cost + x.dot(&(p * &x))
}

/// Applies `mat_pow` for callers that need plain matrix powers.
pub fn matrix_power(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    mat_pow(a, k)
}
