//! Event-triggered closed-loop control: the current law is reused while
//! the state stays inside its validity region, and a fresh QP is solved
//! (an event) the moment it leaves. Trajectories carry the event flags,
//! membership flop counts and per-step cost values that the experiment
//! reports aggregate.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::qp::{QPSolution, QPSolver};
use crate::regions::{
    feasibility_polytope, is_saturated, law_and_polytope, repair_active_set, AffineLaw,
    RegionCache, StabilityQuadric, ValidityRegion,
};

/// How the controller chooses validity regions after each QP event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Exact: reuse only while the active set stays optimal.
    Optimal,
    /// Extended: feasibility polytope intersected with the cost-decrease
    /// quadric.
    Suboptimal,
    /// As `Suboptimal`, but saturated laws use precomputed projection
    /// regions when a cache provides them.
    SuboptimalProjection,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Optimal => "optimal",
            Mode::Suboptimal => "suboptimal",
            Mode::SuboptimalProjection => "suboptimal-proj",
        }
    }

    pub fn from_label(s: &str) -> Option<Mode> {
        match s {
            "optimal" => Some(Mode::Optimal),
            "suboptimal" => Some(Mode::Suboptimal),
            "suboptimal-proj" => Some(Mode::SuboptimalProjection),
            _ => None,
        }
    }
}

/// Stop conditions for a closed-loop run.
#[derive(Debug, Clone, Copy)]
pub struct RunLimits {
    pub max_steps: usize,
    /// Euclidean norm below which the state counts as converged.
    pub conv_tol: f64,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits {
            max_steps: 1000,
            conv_tol: 1e-2,
        }
    }
}

/// A simulated closed-loop run. `states` has one more entry than the
/// per-step vectors; `costs[k]` is the QP objective evaluated at
/// (x(k), law applied to x(k)) under the law in force at step k.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    /// True where a QP was solved.
    pub events: Vec<bool>,
    /// Local membership-test work per step.
    pub flops: Vec<u64>,
    pub costs: Vec<f64>,
    /// False when the run stopped at `max_steps` instead of the norm
    /// threshold.
    pub converged: bool,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn qp_count(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn total_flops(&self) -> u64 {
        self.flops.iter().sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// CSV export with one row per applied step. The input dimension is
    /// passed explicitly so converged runs with no steps still print the
    /// right header.
    pub fn to_csv(&self, input_dim: usize) -> String {
        let n = self.states[0].len();
        let mut out = String::from("k");
        for i in 1..=n {
            out.push_str(&format!(",x_{i}"));
        }
        for i in 1..=input_dim {
            out.push_str(&format!(",u_{i}"));
        }
        out.push_str(",e,flops,cost\n");
        for k in 0..self.steps() {
            out.push_str(&k.to_string());
            for v in self.states[k].iter() {
                out.push_str(&format!(",{v}"));
            }
            for v in self.inputs[k].iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(
                ",{},{},{}\n",
                u8::from(self.events[k]),
                self.flops[k],
                self.costs[k]
            ));
        }
        out
    }
}

/// Event-triggered controller bound to one problem and one mode.
pub struct Controller<'a> {
    spec: &'a ProblemSpec,
    solver: &'a QPSolver,
    mode: Mode,
    lambda: f64,
    cache: Option<&'a RegionCache>,
}

impl<'a> Controller<'a> {
    pub fn new(
        spec: &'a ProblemSpec,
        solver: &'a QPSolver,
        mode: Mode,
        lambda: f64,
        cache: Option<&'a RegionCache>,
    ) -> Self {
        Controller {
            spec,
            solver,
            mode,
            lambda,
            cache,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Law and validity region for a solved QP, per the controller mode.
    /// Degenerate active sets are repaired to a maximal independent
    /// subset; a non-invertible closed loop falls back to the exact
    /// polytope.
    pub fn derive_law(&self, sol: &QPSolution) -> Result<(AffineLaw, ValidityRegion)> {
        let qp = self.solver.qp();
        let (law, pstar) = match law_and_polytope(qp, &sol.active) {
            Err(Error::DegenerateActiveSet) => {
                let repaired = repair_active_set(qp, &sol.active);
                law_and_polytope(qp, &repaired)?
            }
            other => other?,
        };
        if self.mode == Mode::Optimal {
            return Ok((law, ValidityRegion::OptimalPolytope(pstar)));
        }
        let region = match StabilityQuadric::new(&self.spec.a, &self.spec.b, qp, &law, self.lambda)
        {
            Ok(quadric) => {
                let cached = if self.mode == Mode::SuboptimalProjection
                    && is_saturated(&law, &self.spec.u_bounds)
                {
                    self.cache.and_then(|c| c.get(&law.active)).cloned()
                } else {
                    None
                };
                let feasibility = match cached {
                    Some(c) => c,
                    None => feasibility_polytope(qp, &law)?,
                };
                ValidityRegion::Extended {
                    feasibility,
                    quadric,
                }
            }
            Err(Error::SingularClosedLoop) => ValidityRegion::OptimalPolytope(pstar),
            Err(e) => return Err(e),
        };
        Ok((law, region))
    }

    /// Runs the closed loop from `x0` until the norm threshold or the
    /// step cap. A pre-solved QP for x0 may be passed in so a feasibility
    /// screening solve is not repeated; it still counts as the first
    /// event.
    pub fn run(
        &self,
        x0: &DVector<f64>,
        limits: &RunLimits,
        initial: Option<&QPSolution>,
    ) -> Result<Trajectory> {
        self.run_with_sink(x0, limits, initial, |_, _| {})
    }

    /// As `run`, with a callback invoked on every law update — the hook
    /// the network simulation uses to count transmitted packets.
    pub fn run_with_sink(
        &self,
        x0: &DVector<f64>,
        limits: &RunLimits,
        initial: Option<&QPSolution>,
        mut sink: impl FnMut(&AffineLaw, &ValidityRegion),
    ) -> Result<Trajectory> {
        let n = self.spec.state_dim();
        if x0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {} entries, expected {}",
                x0.len(),
                n
            )));
        }
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        let mut events = Vec::new();
        let mut flops = Vec::new();
        let mut costs = Vec::new();
        let mut current: Option<(AffineLaw, ValidityRegion)> = None;
        let mut x = x0.clone();
        let mut converged = false;
        for k in 0..usize::MAX {
            if x.norm() <= limits.conv_tol {
                converged = true;
                break;
            }
            if k >= limits.max_steps {
                break;
            }
            let mut step_flops = 0u64;
            let event = match &current {
                None => true,
                Some((_, region)) => {
                    step_flops += region.flops(n);
                    !region.contains(&x)
                }
            };
            if event {
                let fresh;
                let sol = match (k, initial) {
                    (0, Some(given)) => given,
                    _ => {
                        fresh = self.solver.solve(&x).map_err(|e| match e {
                            Error::Infeasible => Error::InfeasibleState { step: k },
                            other => other,
                        })?;
                        &fresh
                    }
                };
                let pair = self.derive_law(sol)?;
                sink(&pair.0, &pair.1);
                current = Some(pair);
            }
            let law = &current.as_ref().expect("law exists after first event").0;
            let u = &law.k * &x + &law.b;
            let u_bar = &law.k_bar * &x + &law.b_bar;
            costs.push(self.solver.qp().objective(&x, &u_bar));
            states.push(x.clone());
            events.push(event);
            flops.push(step_flops);
            x = &self.spec.a * &x + &self.spec.b * &u;
            inputs.push(u);
        }
        states.push(x);
        Ok(Trajectory {
            states,
            inputs,
            events,
            flops,
            costs,
            converged,
        })
    }
}
