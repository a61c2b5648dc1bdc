//! Shared fixtures: the two bundled example problems, condensed once per
//! test binary.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use nalgebra::DVector;
use rand::Rng;
use rmpc_core::{condense, CondensedQP, ProblemSpec, QPSolver};

pub fn problem_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../problems")
        .join(name)
}

pub fn ex1() -> &'static ProblemSpec {
    static SPEC: OnceLock<ProblemSpec> = OnceLock::new();
    SPEC.get_or_init(|| ProblemSpec::from_file(&problem_path("example1.json")).unwrap())
}

pub fn ex1_qp() -> &'static CondensedQP {
    static QP: OnceLock<CondensedQP> = OnceLock::new();
    QP.get_or_init(|| condense(ex1()).unwrap())
}

pub fn ex1_solver() -> &'static QPSolver {
    static SOLVER: OnceLock<QPSolver> = OnceLock::new();
    SOLVER.get_or_init(|| QPSolver::new(ex1_qp()))
}

pub fn ex2() -> &'static ProblemSpec {
    static SPEC: OnceLock<ProblemSpec> = OnceLock::new();
    SPEC.get_or_init(|| ProblemSpec::from_file(&problem_path("example2.json")).unwrap())
}

pub fn ex2_qp() -> &'static CondensedQP {
    static QP: OnceLock<CondensedQP> = OnceLock::new();
    QP.get_or_init(|| condense(ex2()).unwrap())
}

pub fn ex2_solver() -> &'static QPSolver {
    static SOLVER: OnceLock<QPSolver> = OnceLock::new();
    SOLVER.get_or_init(|| QPSolver::new(ex2_qp()))
}

/// A point drawn uniformly from an axis-aligned box.
pub fn random_in_box(rng: &mut impl Rng, bounds: &[(f64, f64)]) -> DVector<f64> {
    DVector::from_iterator(
        bounds.len(),
        bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)),
    )
}

/// Strictly interior points of a polytope: random rays from the
/// Chebyshev center, stopped short of the boundary. Unbounded rays are
/// clamped.
pub fn interior_points(
    p: &rmpc_core::Polytope,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<DVector<f64>> {
    let (center, _) = p.chebyshev_center().unwrap();
    let n = p.dim();
    (0..count)
        .map(|_| {
            let dir = DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..1.0)))
                .normalize();
            let mut t_max = 1e3_f64;
            for i in 0..p.rows() {
                let (row, off) = p.row(i);
                let along = (&row * &dir)[0];
                if along > 1e-12 {
                    t_max = t_max.min((off - (&row * &center)[0]) / along);
                }
            }
            &center + rng.gen_range(0.0..0.9) * t_max * dir
        })
        .collect()
}

/// Brute-force reference for the parametric QP: every linearly
/// independent active set up to full size is turned into its law and
/// exact-optimality polytope once; a query returns the best law whose
/// polytope admits the state. Strict convexity makes the optimizer
/// unique, so any admitted set reproduces it.
pub struct EnumerationOracle {
    laws: Vec<(rmpc_core::AffineLaw, rmpc_core::Polytope)>,
}

impl EnumerationOracle {
    pub fn build(qp: &CondensedQP) -> Self {
        let mut laws = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        fn recurse(
            qp: &CondensedQP,
            start: usize,
            stack: &mut Vec<usize>,
            laws: &mut Vec<(rmpc_core::AffineLaw, rmpc_core::Polytope)>,
        ) {
            match rmpc_core::law_and_polytope(qp, stack) {
                Ok(pair) => laws.push(pair),
                // Dependent rows: every superset is dependent too.
                Err(rmpc_core::Error::DegenerateActiveSet) => return,
                // Certifiably empty region: no state picks this set, but
                // supersets may still be fine.
                Err(_) => {}
            }
            if stack.len() == qp.vars() {
                return;
            }
            for i in start..qp.rows() {
                stack.push(i);
                recurse(qp, i + 1, stack, laws);
                stack.pop();
            }
        }
        recurse(qp, 0, &mut stack, &mut laws);
        EnumerationOracle { laws }
    }

    /// Minimum objective and its optimizer over all admitted active sets,
    /// or None when no set admits the state (infeasible).
    pub fn solve(&self, qp: &CondensedQP, x: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for (law, pstar) in &self.laws {
            if !pstar.contains(x, 1e-7) {
                continue;
            }
            let u = &law.k_bar * x + &law.b_bar;
            let value = qp.objective(x, &u);
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, u));
            }
        }
        best
    }
}
