//! Explicit feedback laws extracted from a solved QP and the state-space
//! regions on which they remain valid: the exact optimality polytope, the
//! feasibility polytope, the projection-based feasibility region and the
//! cost-decrease quadric.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::{remove_redundant, same_set, Polytope, ROW_TOL};
use crate::problem::ProblemSpec;
use crate::synthesis::CondensedQP;

/// Relative rank tolerance for active-set row systems.
const RANK_TOL: f64 = 1e-10;

/// The affine feedback U = K_bar x + b_bar induced by an active set,
/// together with its first-input block u(0) = K x + b.
#[derive(Debug, Clone)]
pub struct AffineLaw {
    pub k_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
    pub k: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Active rows the law was derived from, ascending.
    pub active: Vec<usize>,
}

/// Derives the explicit law for an active set and the polytope on which
/// that active set is exactly optimal: the inactive rows stay satisfied
/// and the multipliers of the active rows stay nonnegative. The returned
/// polytope always carries one row per constraint, inactive block first.
pub fn law_and_polytope(qp: &CondensedQP, active: &[usize]) -> Result<(AffineLaw, Polytope)> {
    let q = qp.rows();
    let nv = qp.vars();
    let n = qp.state_dim;
    let m = qp.input_dim;
    let mut act: Vec<usize> = active.to_vec();
    act.sort_unstable();
    act.dedup();
    if act.last().is_some_and(|&i| i >= q) {
        return Err(Error::DimensionMismatch(format!(
            "active row {} out of range for {} constraints",
            act.last().unwrap(),
            q
        )));
    }
    let inactive: Vec<usize> = (0..q).filter(|i| act.binary_search(i).is_err()).collect();

    let hf = qp.h_solve(&qp.f.transpose());
    let (k_bar, b_bar, mult_t, mult_d) = if act.is_empty() {
        (-&hf, DVector::zeros(nv), DMatrix::zeros(0, n), DVector::zeros(0))
    } else {
        let ga = qp.g.select_rows(act.iter());
        if act.len() > nv {
            return Err(Error::DegenerateActiveSet);
        }
        let sv = ga.clone().singular_values();
        if sv[sv.len() - 1] <= RANK_TOL * sv[0] {
            return Err(Error::DegenerateActiveSet);
        }
        let hga = qp.h_solve(&ga.transpose());
        let w_mat = &ga * &hga;
        let chol = Cholesky::new(w_mat).ok_or(Error::DegenerateActiveSet)?;
        let sa = qp.s.select_rows(act.iter());
        let wa = qp.w.select_rows(act.iter());
        let winv_sa = chol.solve(&sa);
        let winv_wa = chol.solve(&wa);
        let k_bar = &hga * &winv_sa - &hf;
        let b_bar = &hga * &winv_wa;
        // Nonnegative multipliers: W^-1 S_A x <= -W^-1 w_A.
        (k_bar, b_bar, winv_sa, -winv_wa)
    };

    // Inactive rows stay strictly feasible: (G_I K_bar - E_I) x <= w_I - G_I b_bar.
    let gi = qp.g.select_rows(inactive.iter());
    let t1 = &gi * &k_bar - qp.e.select_rows(inactive.iter());
    let d1 = qp.w.select_rows(inactive.iter()) - &gi * &b_bar;
    let region = Polytope::new(t1, d1)?.intersect(&Polytope::new(mult_t, mult_d)?)?;

    let law = AffineLaw {
        k: k_bar.rows(0, m).clone_owned(),
        b: DVector::from(b_bar.rows(0, m).clone_owned()),
        k_bar,
        b_bar,
        active: act,
    };
    Ok((law, region))
}

/// Largest prefix-greedy subset of `active` whose constraint rows are
/// linearly independent. Rows are taken in ascending order, so the result
/// is deterministic; the tolerance is relative to the norm of the full
/// active block.
pub fn repair_active_set(qp: &CondensedQP, active: &[usize]) -> Vec<usize> {
    let mut act: Vec<usize> = active.to_vec();
    act.sort_unstable();
    act.dedup();
    if act.is_empty() {
        return act;
    }
    let full = qp.g.select_rows(act.iter());
    let scale = full.clone().singular_values()[0];
    let tol = RANK_TOL * scale;
    let mut kept: Vec<usize> = Vec::new();
    for &i in &act {
        if kept.len() == qp.vars() {
            break;
        }
        let mut trial = kept.clone();
        trial.push(i);
        let mat = qp.g.select_rows(trial.iter());
        let sv = mat.singular_values();
        if sv[sv.len() - 1] > tol {
            kept = trial;
        }
    }
    kept
}

/// The feasibility polytope of a law: states where every constraint row
/// not used in deriving the law still holds under U = K_bar x + b_bar.
/// For the law of an empty active set this coincides with the optimality
/// polytope.
pub fn feasibility_polytope(qp: &CondensedQP, law: &AffineLaw) -> Result<Polytope> {
    let q = qp.rows();
    let inactive: Vec<usize> =
        (0..q).filter(|i| law.active.binary_search(i).is_err()).collect();
    let gi = qp.g.select_rows(inactive.iter());
    let t = &gi * &law.k_bar - qp.e.select_rows(inactive.iter());
    let d = qp.w.select_rows(inactive.iter()) - &gi * &law.b_bar;
    Polytope::new(t, d)
}

/// True when the law ignores the state and pins every input at one of its
/// bounds.
pub fn is_saturated(law: &AffineLaw, u_bounds: &[(f64, f64)]) -> bool {
    if law.k.amax() > 1e-12 {
        return false;
    }
    u_bounds.iter().enumerate().all(|(i, &(lo, hi))| {
        (law.b[i] - lo).abs() <= 1e-9 || (law.b[i] - hi).abs() <= 1e-9
    })
}

/// The quadric { x | x'T3 x + T2 x < d2 } of states whose cost under the
/// law has dropped by at least the factor lambda relative to the
/// predecessor state, reconstructed through the inverse closed loop.
#[derive(Debug, Clone)]
pub struct StabilityQuadric {
    pub t3: DMatrix<f64>,
    pub t2: DVector<f64>,
    pub d2: f64,
    /// Inverse closed-loop map: the predecessor of x is M3 x + M4.
    pub m3: DMatrix<f64>,
    pub m4: DVector<f64>,
}

/// Coefficients (M1, M2, M5) of the cost along a fixed law as an
/// explicit quadratic form in the state: V(x) = x'M1 x + M2·x + M5.
pub fn law_cost_coefficients(
    qp: &CondensedQP,
    law: &AffineLaw,
) -> (DMatrix<f64>, DVector<f64>, f64) {
    let hk = &qp.h * &law.k_bar;
    let m1_raw = 0.5 * law.k_bar.transpose() * &hk + &qp.f * &law.k_bar + 0.5 * &qp.y;
    let m1 = 0.5 * (&m1_raw + m1_raw.transpose());
    let hb = &qp.h * &law.b_bar;
    let m2 = law.k_bar.transpose() * &hb + &qp.f * &law.b_bar;
    let m5 = 0.5 * law.b_bar.dot(&hb);
    (m1, m2, m5)
}

impl StabilityQuadric {
    /// Assembles the quadric for a law under the plant (A, B). Fails with
    /// `SingularClosedLoop` when A + B K cannot be inverted reliably.
    pub fn new(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        qp: &CondensedQP,
        law: &AffineLaw,
        lambda: f64,
    ) -> Result<Self> {
        let (m1, m2, m5) = law_cost_coefficients(qp, law);

        let a_cl = a + b * &law.k;
        let sv = a_cl.clone().singular_values();
        if sv[sv.len() - 1] <= 1e-10 * sv[0] {
            return Err(Error::SingularClosedLoop);
        }
        let m3 = a_cl.try_inverse().ok_or(Error::SingularClosedLoop)?;
        let m4 = -(&m3 * (b * &law.b));

        // Collect V(x) < lambda V(M3 x + M4) into quadric coefficients.
        let m1m3 = &m1 * &m3;
        let t3_raw = &m1 - lambda * m3.transpose() * &m1m3;
        let t3 = 0.5 * (&t3_raw + t3_raw.transpose());
        let t2 = &m2 - lambda * (2.0 * m1m3.transpose() * &m4 + m3.transpose() * &m2);
        let d2 = lambda * (m4.dot(&(&m1 * &m4)) + m2.dot(&m4) + m5) - m5;
        Ok(StabilityQuadric { t3, t2, d2, m3, m4 })
    }

    /// Strict membership; boundary states are outside.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.dot(&(&self.t3 * x)) + self.t2.dot(x) < self.d2
    }

    /// The state that maps to `x` under the closed loop.
    pub fn predecessor(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m3 * x + &self.m4
    }
}

/// Where a feedback law may keep running without re-solving: either the
/// exact optimality polytope or a feasibility polytope intersected with
/// the cost-decrease quadric.
#[derive(Debug, Clone)]
pub enum ValidityRegion {
    OptimalPolytope(Polytope),
    Extended {
        feasibility: Polytope,
        quadric: StabilityQuadric,
    },
}

impl ValidityRegion {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            ValidityRegion::OptimalPolytope(p) => p.contains(x, ROW_TOL),
            ValidityRegion::Extended { feasibility, quadric } => {
                feasibility.contains(x, ROW_TOL) && quadric.contains(x)
            }
        }
    }

    /// Local work of one membership test: 2qn for a polytope with q rows,
    /// plus 2n^2 + 3n for the quadric in the extended case.
    pub fn flops(&self, n: usize) -> u64 {
        let (n, two) = (n as u64, 2u64);
        match self {
            ValidityRegion::OptimalPolytope(p) => two * p.rows() as u64 * n,
            ValidityRegion::Extended { feasibility, .. } => {
                two * n * n + 3 * n + two * feasibility.rows() as u64 * n
            }
        }
    }
}

/// The set of states from which some admissible input sequence of the
/// given remaining length reaches the terminal set while respecting the
/// state bounds along the way. Computed backwards from the terminal set;
/// the recursion stops early once it reaches a fixed point, which it
/// keeps thereafter.
pub fn tail_feasible_set(spec: &ProblemSpec, qp: &CondensedQP, row_cap: usize) -> Result<Polytope> {
    let n = spec.state_dim();
    let m = spec.input_dim();
    let x_set = Polytope::from_box(&spec.x_bounds);
    let u_set = Polytope::from_box(&spec.u_bounds);
    let mut prev = remove_redundant(&qp.terminal_set)?;
    for _ in 1..spec.horizon {
        // Lift to (z, u), require z in X, u in U, Az + Bu in the previous
        // set, then project the input away.
        let rows = x_set.rows() + u_set.rows() + prev.rows();
        let mut t = DMatrix::zeros(rows, n + m);
        let mut d = DVector::zeros(rows);
        t.view_mut((0, 0), (x_set.rows(), n)).copy_from(x_set.matrix());
        d.rows_mut(0, x_set.rows()).copy_from(x_set.offsets());
        t.view_mut((x_set.rows(), n), (u_set.rows(), m))
            .copy_from(u_set.matrix());
        d.rows_mut(x_set.rows(), u_set.rows()).copy_from(u_set.offsets());
        let at = x_set.rows() + u_set.rows();
        t.view_mut((at, 0), (prev.rows(), n))
            .copy_from(&(prev.matrix() * &spec.a));
        t.view_mut((at, n), (prev.rows(), m))
            .copy_from(&(prev.matrix() * &spec.b));
        d.rows_mut(at, prev.rows()).copy_from(prev.offsets());

        let next = crate::geometry::project_prefix(&Polytope::new(t, d)?, n, row_cap)?;
        if same_set(&next, &prev, ROW_TOL)? {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

/// The region where a law's first input keeps the full problem feasible:
/// u(0) = K x + b must be admissible and the successor state must belong
/// to the set from which the remaining horizon can still be completed.
pub fn projection_region(
    spec: &ProblemSpec,
    law: &AffineLaw,
    tail_set: &Polytope,
) -> Result<Polytope> {
    let u_set = Polytope::from_box(&spec.u_bounds);
    let input_part = Polytope::new(
        u_set.matrix() * &law.k,
        u_set.offsets() - u_set.matrix() * &law.b,
    )?;
    let a_cl = &spec.a + &spec.b * &law.k;
    let successor_part = tail_set.affine_preimage(&a_cl, &(&spec.b * &law.b));
    remove_redundant(&input_part.intersect(&successor_part)?)
}

/// Reference construction of the same region by direct elimination: fix
/// u(0) to the law, keep the remaining inputs as variables and project
/// them out of the stacked constraint system one column at a time.
pub fn projection_region_direct(
    spec: &ProblemSpec,
    qp: &CondensedQP,
    law: &AffineLaw,
    row_cap: usize,
) -> Result<Polytope> {
    let n = spec.state_dim();
    let m = spec.input_dim();
    let nv = qp.vars();
    let g0 = qp.g.columns(0, m).clone_owned();
    let g_rest = qp.g.columns(m, nv - m).clone_owned();
    let t_lift = DMatrix::from_fn(qp.rows(), n + (nv - m), |i, j| {
        if j < n {
            (g0.row(i) * &law.k)[(0, j)] - qp.e[(i, j)]
        } else {
            g_rest[(i, j - n)]
        }
    });
    let d_lift = &qp.w - &g0 * &law.b;
    crate::geometry::project_prefix(&Polytope::new(t_lift, d_lift)?, n, row_cap)
}

/// Offline cache of projection regions keyed by the active set that
/// produced the law, serialized as JSON.
#[derive(Debug, Clone, Default)]
pub struct RegionCache {
    map: BTreeMap<String, Polytope>,
}

impl RegionCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Canonical key: the sorted active rows joined by commas.
    pub fn key(active: &[usize]) -> String {
        let mut act = active.to_vec();
        act.sort_unstable();
        act.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn insert(&mut self, active: &[usize], region: Polytope) {
        self.map.insert(Self::key(active), region);
    }

    pub fn get(&self, active: &[usize]) -> Option<&Polytope> {
        self.map.get(&Self::key(active))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut regions = serde_json::Map::new();
        for (key, poly) in &self.map {
            let t: Vec<Vec<f64>> = (0..poly.rows())
                .map(|i| poly.matrix().row(i).iter().copied().collect())
                .collect();
            let d: Vec<f64> = poly.offsets().iter().copied().collect();
            regions.insert(key.clone(), json!({ "t": t, "d": d }));
        }
        serde_json::to_string_pretty(&Value::Object(
            [("regions".to_string(), Value::Object(regions))]
                .into_iter()
                .collect(),
        ))
        .expect("serializing plain maps cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::BadProblemFile(format!("region cache: {msg}"));
        let root: Value =
            serde_json::from_str(text).map_err(|e| bad(&format!("invalid JSON: {e}")))?;
        let regions = root
            .get("regions")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("missing \"regions\" object"))?;
        let mut map = BTreeMap::new();
        for (key, entry) in regions {
            let t_rows = entry
                .get("t")
                .and_then(Value::as_array)
                .ok_or_else(|| bad(&format!("entry {key}: missing \"t\"")))?;
            let d_vals = entry
                .get("d")
                .and_then(Value::as_array)
                .ok_or_else(|| bad(&format!("entry {key}: missing \"d\"")))?;
            let nrows = t_rows.len();
            let ncols = t_rows
                .first()
                .and_then(|r| r.as_array())
                .map_or(0, |r| r.len());
            let mut flat = Vec::with_capacity(nrows * ncols);
            for row in t_rows {
                let row = row
                    .as_array()
                    .ok_or_else(|| bad(&format!("entry {key}: \"t\" row is not an array")))?;
                if row.len() != ncols {
                    return Err(bad(&format!("entry {key}: ragged \"t\" rows")));
                }
                for v in row {
                    flat.push(
                        v.as_f64()
                            .ok_or_else(|| bad(&format!("entry {key}: non-numeric entry")))?,
                    );
                }
            }
            let d: Vec<f64> = d_vals
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| bad(&format!("entry {key}: non-numeric offset")))
                })
                .collect::<Result<_>>()?;
            if d.len() != nrows {
                return Err(bad(&format!("entry {key}: {} rows but {} offsets", nrows, d.len())));
            }
            map.insert(
                key.clone(),
                Polytope::new(
                    DMatrix::from_row_slice(nrows, ncols, &flat),
                    DVector::from_vec(d),
                )?,
            );
        }
        Ok(RegionCache { map })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::BadProblemFile(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::BadProblemFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
