//! Python bindings for the event-triggered MPC library.
//!
//! The module mirrors the CLI pipeline: load a `Problem`, condense it
//! into a `Synthesis` (QP plus solver), then solve single QPs, run
//! closed-loop trajectories or whole batches, optionally against a
//! precomputed `Regions` cache.

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rmpc_core::{
    build_projection_cache, condense, run_batch, run_networked, BatchConfig, CondensedQP,
    Controller, Mode, ProblemSpec, QPSolver, RegionCache, RunLimits,
};

fn to_py_err(e: rmpc_core::Error) -> PyErr {
    use rmpc_core::Error::*;
    match e {
        BadProblemFile(_) | DimensionMismatch(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_mode(label: &str) -> PyResult<Mode> {
    Mode::from_label(label).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown mode \"{label}\" (expected optimal, suboptimal or suboptimal-proj)"
        ))
    })
}

fn vector(values: Vec<f64>, dim: usize, what: &str) -> PyResult<DVector<f64>> {
    if values.len() != dim {
        return Err(PyValueError::new_err(format!(
            "{what} has {} entries, expected {dim}",
            values.len()
        )));
    }
    Ok(DVector::from_vec(values))
}

fn rows_of(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.as_slice().to_vec()).collect()
}

/// A linear MPC problem: plant, weights, horizon and box bounds.
#[pyclass(module = "rmpc_py")]
struct Problem {
    spec: ProblemSpec,
}

#[pymethods]
impl Problem {
    /// Reads a problem from a JSON file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let spec = ProblemSpec::from_file(std::path::Path::new(path)).map_err(to_py_err)?;
        Ok(Problem { spec })
    }

    /// Parses a problem from JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec = ProblemSpec::from_json(text).map_err(to_py_err)?;
        Ok(Problem { spec })
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.spec.state_dim()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.spec.lambda
    }

    fn to_json(&self) -> String {
        self.spec.to_json()
    }

    /// Condenses the horizon into one dense QP and factorizes it.
    fn condense(&self) -> PyResult<Synthesis> {
        let qp = condense(&self.spec).map_err(to_py_err)?;
        let solver = QPSolver::new(&qp);
        Ok(Synthesis {
            spec: self.spec.clone(),
            qp,
            solver,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(states={}, inputs={}, horizon={})",
            self.spec.state_dim(),
            self.spec.input_dim(),
            self.spec.horizon
        )
    }
}

/// A single parametric QP solution.
#[pyclass(module = "rmpc_py", get_all, skip_from_py_object)]
#[derive(Clone)]
struct Solution {
    /// Objective value at the optimum.
    value: f64,
    /// Stacked input sequence, inputs-per-step major.
    u: Vec<f64>,
    /// First-step input, the one the plant applies.
    first_input: Vec<f64>,
    /// Indices of constraint rows active at the optimum.
    active: Vec<usize>,
}

/// One closed-loop trajectory with its event and accounting traces.
#[pyclass(module = "rmpc_py", get_all, skip_from_py_object)]
#[derive(Clone)]
struct Run {
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    /// True at steps where the central node solved a QP.
    events: Vec<bool>,
    costs: Vec<f64>,
    converged: bool,
    steps: usize,
    qps: usize,
    flops: u64,
    messages: usize,
    bytes: u64,
    cost: f64,
}

/// Per-trajectory accounting row of a batch.
#[pyclass(module = "rmpc_py", get_all, skip_from_py_object)]
#[derive(Clone)]
struct Record {
    index: usize,
    steps: usize,
    converged: bool,
    qps: usize,
    flops: u64,
    cost: f64,
    messages: usize,
    bytes: u64,
}

/// Batch totals plus the per-trajectory rows they were reduced from.
#[pyclass(module = "rmpc_py", get_all, skip_from_py_object)]
#[derive(Clone)]
struct BatchResult {
    mode: String,
    lambda_: f64,
    seed: u64,
    count: usize,
    qps: u64,
    flops: u64,
    costs: f64,
    messages: u64,
    bytes: u64,
    failures: usize,
    records: Vec<Record>,
}

/// Precomputed projection regions for saturated control laws.
#[pyclass(module = "rmpc_py")]
struct Regions {
    cache: RegionCache,
}

#[pymethods]
impl Regions {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let cache = RegionCache::load(std::path::Path::new(path)).map_err(to_py_err)?;
        Ok(Regions { cache })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.cache.save(std::path::Path::new(path)).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.cache.len()
    }
}

/// A condensed QP with its factorized solver; the entry point for
/// solving, closed-loop runs and batches.
#[pyclass(module = "rmpc_py")]
struct Synthesis {
    spec: ProblemSpec,
    qp: CondensedQP,
    solver: QPSolver,
}

impl Synthesis {
    fn limits(&self, max_steps: usize, conv_tol: f64) -> RunLimits {
        RunLimits { max_steps, conv_tol }
    }
}

#[pymethods]
impl Synthesis {
    /// Total constraint rows of the condensed QP.
    #[getter]
    fn rows(&self) -> usize {
        self.qp.rows()
    }

    /// Decision variables (inputs times horizon).
    #[getter]
    fn vars(&self) -> usize {
        self.qp.vars()
    }

    /// Rows describing the terminal set.
    #[getter]
    fn terminal_rows(&self) -> usize {
        self.qp.terminal_set.rows()
    }

    /// Solves the QP at one state.
    fn solve(&self, x: Vec<f64>) -> PyResult<Solution> {
        let x = vector(x, self.spec.state_dim(), "state")?;
        let sol = self.solver.solve(&x).map_err(to_py_err)?;
        let m = self.spec.input_dim();
        Ok(Solution {
            value: sol.value,
            first_input: sol.u_bar.as_slice()[..m].to_vec(),
            u: sol.u_bar.as_slice().to_vec(),
            active: sol.active,
        })
    }

    /// Runs one event-triggered closed loop from `x0`, counting QPs,
    /// local flops and transmitted law packets.
    #[pyo3(signature = (x0, mode="optimal", lambda_=1.0, max_steps=1000, conv_tol=1e-2, regions=None))]
    fn run(
        &self,
        x0: Vec<f64>,
        mode: &str,
        lambda_: f64,
        max_steps: usize,
        conv_tol: f64,
        regions: Option<&Regions>,
    ) -> PyResult<Run> {
        let x0 = vector(x0, self.spec.state_dim(), "initial state")?;
        let controller = Controller::new(
            &self.spec,
            &self.solver,
            parse_mode(mode)?,
            lambda_,
            regions.map(|r| &r.cache),
        );
        let (t, tel) = run_networked(&controller, &x0, &self.limits(max_steps, conv_tol), None)
            .map_err(to_py_err)?;
        Ok(Run {
            states: rows_of(&t.states),
            inputs: rows_of(&t.inputs),
            events: t.events,
            costs: t.costs,
            converged: t.converged,
            steps: tel.steps,
            qps: tel.qp_count,
            flops: tel.local_flops,
            messages: tel.messages,
            bytes: tel.bytes_tx,
            cost: tel.total_cost,
        })
    }

    /// Runs a batch of trajectories from seeded feasible initial states
    /// (or from `x0` when given) and reduces the accounting.
    #[pyo3(signature = (mode="optimal", count=1, seed=0, lambda_=1.0, max_steps=1000, conv_tol=1e-2, x0=None, regions=None))]
    #[allow(clippy::too_many_arguments)]
    fn batch(
        &self,
        mode: &str,
        count: usize,
        seed: u64,
        lambda_: f64,
        max_steps: usize,
        conv_tol: f64,
        x0: Option<Vec<f64>>,
        regions: Option<&Regions>,
    ) -> PyResult<BatchResult> {
        let forced_x0 = x0
            .map(|v| vector(v, self.spec.state_dim(), "initial state"))
            .transpose()?;
        let config = BatchConfig {
            mode: parse_mode(mode)?,
            lambda: lambda_,
            count,
            seed,
            limits: self.limits(max_steps, conv_tol),
            forced_x0,
        };
        let s = run_batch(&self.spec, &self.solver, &config, regions.map(|r| &r.cache))
            .map_err(to_py_err)?;
        Ok(BatchResult {
            mode: s.mode.label().to_string(),
            lambda_: s.lambda,
            seed: s.seed,
            count: s.count,
            qps: s.qps,
            flops: s.flops,
            costs: s.costs,
            messages: s.messages,
            bytes: s.bytes,
            failures: s.failures,
            records: s
                .records
                .iter()
                .map(|r| Record {
                    index: r.index,
                    steps: r.steps,
                    converged: r.converged,
                    qps: r.qps,
                    flops: r.flops,
                    cost: r.cost,
                    messages: r.messages,
                    bytes: r.bytes,
                })
                .collect(),
        })
    }

    /// Discovers saturated laws over a scouting batch and precomputes
    /// their projection regions. Returns `(regions, discovered, skipped)`.
    #[pyo3(signature = (count=50, seed=0, lambda_=1.0, row_cap=20000, max_steps=1000, conv_tol=1e-2))]
    fn build_regions(
        &self,
        count: usize,
        seed: u64,
        lambda_: f64,
        row_cap: usize,
        max_steps: usize,
        conv_tol: f64,
    ) -> PyResult<(Regions, usize, usize)> {
        let config = BatchConfig {
            mode: Mode::SuboptimalProjection,
            lambda: lambda_,
            count,
            seed,
            limits: self.limits(max_steps, conv_tol),
            forced_x0: None,
        };
        let (cache, seen, skipped) =
            build_projection_cache(&self.spec, &self.solver, &config, row_cap)
                .map_err(to_py_err)?;
        Ok((Regions { cache }, seen, skipped))
    }

    fn __repr__(&self) -> String {
        format!("Synthesis(rows={}, vars={})", self.qp.rows(), self.qp.vars())
    }
}

#[pymodule]
fn rmpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Synthesis>()?;
    m.add_class::<Solution>()?;
    m.add_class::<Run>()?;
    m.add_class::<Record>()?;
    m.add_class::<BatchResult>()?;
    m.add_class::<Regions>()?;
    Ok(())
}
