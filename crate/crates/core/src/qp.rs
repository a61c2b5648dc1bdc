//! Dense dual active-set solver for the condensed QP, specialized to a
//! fixed constraint system queried at many parameter values. The expensive
//! products H^-1 G' and G H^-1 G' are formed once and shared by every
//! solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::synthesis::CondensedQP;

/// Tolerance on the scaled residual below which a row counts as violated
/// during the solve.
const VIOLATION_EPS: f64 = 1e-10;
/// Threshold on dual step denominators.
const STEP_EPS: f64 = 1e-12;
/// Scaled residual band for the reported active set.
const ACTIVE_EPS: f64 = 1e-8;

/// A solved parametric QP instance.
#[derive(Debug, Clone)]
pub struct QPSolution {
    /// Optimal stacked input sequence.
    pub u_bar: DVector<f64>,
    /// Objective value at the optimum.
    pub value: f64,
    /// Rows with zero residual, ascending.
    pub active: Vec<usize>,
    /// Remaining rows, ascending.
    pub inactive: Vec<usize>,
    /// Lagrange multipliers for all rows (zero off the active set).
    pub multipliers: DVector<f64>,
}

/// Solver state shared across parameter values.
pub struct QPSolver {
    qp: CondensedQP,
    /// H^-1 G', one column per constraint row.
    hg: DMatrix<f64>,
    /// G H^-1 G'.
    gram: DMatrix<f64>,
    /// -H^-1 F', mapping the parameter to the unconstrained optimizer.
    free_gain: DMatrix<f64>,
    /// Per-row |w_i| and ||E_i||, used to scale residual tolerances.
    w_abs: DVector<f64>,
    e_norms: DVector<f64>,
}

impl QPSolver {
    pub fn new(qp: &CondensedQP) -> Self {
        let hg = qp.h_solve(&qp.g.transpose());
        let gram = &qp.g * &hg;
        let free_gain = -qp.h_solve(&qp.f.transpose());
        let w_abs = qp.w.abs();
        let e_norms = DVector::from_iterator(
            qp.e.nrows(),
            qp.e.row_iter().map(|r| r.norm()),
        );
        QPSolver {
            qp: qp.clone(),
            hg,
            gram,
            free_gain,
            w_abs,
            e_norms,
        }
    }

    pub fn qp(&self) -> &CondensedQP {
        &self.qp
    }

    /// The unconstrained minimizer -H^-1 F' x.
    pub fn free_solution(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.free_gain * x
    }

    /// Solves the QP at parameter `x`.
    ///
    /// Starts from the unconstrained minimizer and walks the dual: the
    /// most violated row (largest residual relative to its natural scale)
    /// is driven to equality along the direction that keeps the working
    /// set tight, dropping any working row whose multiplier would go
    /// negative. No finite step for a violated row means the constraints
    /// exclude every input sequence at this parameter.
    pub fn solve(&self, x: &DVector<f64>) -> Result<QPSolution> {
        let q = self.qp.rows();
        let x_norm = x.norm();
        let scale =
            DVector::from_fn(q, |i, _| 1.0 + self.w_abs[i] + self.e_norms[i] * x_norm);
        let rhs = &self.qp.w + &self.qp.e * x;

        let mut u = self.free_solution(x);
        let mut mu = DVector::zeros(q);
        let mut working: Vec<usize> = Vec::new();
        let cap = 50 * q + 100;
        let mut iterations = 0usize;

        loop {
            // Most violated row on the scaled residuals, lowest index on
            // ties.
            let s = &self.qp.g * &u - &rhs;
            let mut pick: Option<(usize, f64)> = None;
            for i in 0..q {
                let v = s[i] / scale[i];
                if v > VIOLATION_EPS && pick.map_or(true, |(_, best)| v > best) {
                    pick = Some((i, v));
                }
            }
            let Some((p, _)) = pick else {
                return Ok(self.finish(x, u, mu, &s, &scale));
            };

            // Inner loop: step toward row p, shrinking the working set as
            // multipliers hit zero.
            loop {
                iterations += 1;
                if iterations > cap {
                    return Err(Error::MaxIterations);
                }
                let nw = working.len();
                let mut rvec = DVector::zeros(nw);
                if nw > 0 {
                    let mut v = DMatrix::zeros(nw, nw);
                    let mut gp = DVector::zeros(nw);
                    for (a, &i) in working.iter().enumerate() {
                        gp[a] = self.gram[(i, p)];
                        for (b, &j) in working.iter().enumerate() {
                            v[(a, b)] = self.gram[(i, j)];
                        }
                    }
                    rvec = v
                        .lu()
                        .solve(&gp)
                        .ok_or(Error::DegenerateActiveSet)?;
                }
                let gamma = self.gram[(p, p)]
                    - working
                        .iter()
                        .enumerate()
                        .map(|(a, &i)| rvec[a] * self.gram[(i, p)])
                        .sum::<f64>();

                let s_p = self.qp.g.row(p).dot(&u.transpose()) - rhs[p];
                let t2 = if gamma > 1e-12 * (1.0 + self.gram[(p, p)].abs()) {
                    s_p / gamma
                } else {
                    f64::INFINITY
                };
                let mut t1 = f64::INFINITY;
                let mut blocker = None;
                for (a, &j) in working.iter().enumerate() {
                    if rvec[a] > STEP_EPS {
                        let ratio = mu[j] / rvec[a];
                        if ratio < t1 {
                            t1 = ratio;
                            blocker = Some(a);
                        }
                    }
                }
                let t = t1.min(t2);
                if !t.is_finite() {
                    return Err(Error::Infeasible);
                }

                // u moves along -H^-1 (G_p' - G_W' r).
                let mut z = -self.hg.column(p).clone_owned();
                for (a, &j) in working.iter().enumerate() {
                    z += rvec[a] * self.hg.column(j);
                }
                u += t * z;
                for (a, &j) in working.iter().enumerate() {
                    mu[j] -= t * rvec[a];
                }
                mu[p] += t;

                if t2 <= t1 {
                    let at = working.partition_point(|&j| j < p);
                    working.insert(at, p);
                    break;
                }
                let dropped = working.remove(blocker.expect("finite t1 has a blocker"));
                mu[dropped] = 0.0;
            }
        }
    }

    fn finish(
        &self,
        x: &DVector<f64>,
        u: DVector<f64>,
        mu: DVector<f64>,
        s: &DVector<f64>,
        scale: &DVector<f64>,
    ) -> QPSolution {
        let q = self.qp.rows();
        let mut active = Vec::new();
        let mut inactive = Vec::new();
        for i in 0..q {
            if s[i].abs() <= ACTIVE_EPS * scale[i] {
                active.push(i);
            } else {
                inactive.push(i);
            }
        }
        let value = self.qp.objective(x, &u);
        QPSolution {
            u_bar: u,
            value,
            active,
            inactive,
            multipliers: mu,
        }
    }
}
