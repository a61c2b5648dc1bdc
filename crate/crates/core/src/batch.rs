//! Seeded batch experiments over random feasible initial states, run
//! directories on disk, projection-cache construction and the per-mode
//! comparison report.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::controller::{Controller, Mode, RunLimits};
use crate::error::{Error, Result};
use crate::netsim::run_networked;
use crate::problem::ProblemSpec;
use crate::qp::{QPSolution, QPSolver};
use crate::regions::{
    is_saturated, projection_region, tail_feasible_set, AffineLaw, RegionCache,
};

/// Everything that determines a batch run besides the problem itself.
#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub mode: Mode,
    pub lambda: f64,
    pub count: usize,
    pub seed: u64,
    pub limits: RunLimits,
    /// When set, every trajectory starts here instead of sampling.
    pub forced_x0: Option<DVector<f64>>,
}

/// Per-trajectory accounting row.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub steps: usize,
    pub converged: bool,
    pub qps: usize,
    pub flops: u64,
    pub cost: f64,
    pub messages: usize,
    pub bytes: u64,
}

/// Batch totals plus the rows they were reduced from.
#[derive(Debug, Clone)]
pub struct BatchSummary {
    pub mode: Mode,
    pub lambda: f64,
    pub seed: u64,
    pub count: usize,
    pub qps: u64,
    pub flops: u64,
    pub costs: f64,
    pub messages: u64,
    pub bytes: u64,
    /// Trajectories that hit the step cap before the norm threshold.
    pub failures: usize,
    pub records: Vec<TrajectoryRecord>,
}

/// Draws initial states uniformly from the state box and keeps those
/// whose QP is feasible, returning each kept state with its screening
/// solution. Gives up if acceptance stays below 0.1% at million-draw
/// checkpoints.
pub fn sample_initial_states(
    spec: &ProblemSpec,
    solver: &QPSolver,
    count: usize,
    seed: u64,
) -> Result<Vec<(DVector<f64>, QPSolution)>> {
    let n = spec.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0usize;
    while out.len() < count {
        draws += 1;
        let x = DVector::from_iterator(
            n,
            spec.x_bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)),
        );
        match solver.solve(&x) {
            Ok(sol) => out.push((x, sol)),
            Err(Error::Infeasible) => {}
            Err(e) => return Err(e),
        }
        if draws % 1_000_000 == 0 && (out.len() as f64) < 1e-3 * draws as f64 {
            return Err(Error::SamplingExhausted {
                draws,
                accepted: out.len(),
            });
        }
    }
    Ok(out)
}

/// Runs `count` trajectories and reduces their telemetry in index order.
pub fn run_batch(
    spec: &ProblemSpec,
    solver: &QPSolver,
    config: &BatchConfig,
    cache: Option<&RegionCache>,
) -> Result<BatchSummary> {
    let controller = Controller::new(spec, solver, config.mode, config.lambda, cache);
    let starts = match &config.forced_x0 {
        Some(x0) => {
            let sol = solver.solve(x0).map_err(|e| match e {
                Error::Infeasible => Error::InfeasibleState { step: 0 },
                other => other,
            })?;
            vec![(x0.clone(), sol); config.count]
        }
        None => sample_initial_states(spec, solver, config.count, config.seed)?,
    };
    let mut summary = BatchSummary {
        mode: config.mode,
        lambda: config.lambda,
        seed: config.seed,
        count: config.count,
        qps: 0,
        flops: 0,
        costs: 0.0,
        messages: 0,
        bytes: 0,
        failures: 0,
        records: Vec::with_capacity(starts.len()),
    };
    for (index, (x0, sol)) in starts.iter().enumerate() {
        let (trajectory, telemetry) =
            run_networked(&controller, x0, &config.limits, Some(sol))?;
        summary.qps += telemetry.qp_count as u64;
        summary.flops += telemetry.local_flops;
        summary.costs += telemetry.total_cost;
        summary.messages += telemetry.messages as u64;
        summary.bytes += telemetry.bytes_tx;
        summary.failures += usize::from(!trajectory.converged);
        summary.records.push(TrajectoryRecord {
            index,
            steps: telemetry.steps,
            converged: trajectory.converged,
            qps: telemetry.qp_count,
            flops: telemetry.local_flops,
            cost: telemetry.total_cost,
            messages: telemetry.messages,
            bytes: telemetry.bytes_tx,
        });
    }
    Ok(summary)
}

/// Discovers laws with a scouting batch, computes projection regions for
/// the saturated ones and returns the cache along with how many laws
/// were seen and how many projections had to be skipped for growing too
/// large.
pub fn build_projection_cache(
    spec: &ProblemSpec,
    solver: &QPSolver,
    config: &BatchConfig,
    row_cap: usize,
) -> Result<(RegionCache, usize, usize)> {
    let controller = Controller::new(spec, solver, config.mode, config.lambda, None);
    let starts = match &config.forced_x0 {
        Some(x0) => {
            let sol = solver.solve(x0)?;
            vec![(x0.clone(), sol)]
        }
        None => sample_initial_states(spec, solver, config.count, config.seed)?,
    };
    let mut laws: std::collections::BTreeMap<String, AffineLaw> = Default::default();
    for (x0, sol) in &starts {
        controller.run_with_sink(x0, &config.limits, Some(sol), |law, _| {
            laws.entry(RegionCache::key(&law.active))
                .or_insert_with(|| law.clone());
        })?;
    }
    let tail = tail_feasible_set(spec, solver.qp(), row_cap)?;
    let mut cache = RegionCache::new();
    let mut skipped = 0usize;
    for law in laws.values() {
        if !is_saturated(law, &spec.u_bounds) {
            continue;
        }
        match projection_region(spec, law, &tail) {
            Ok(region) => cache.insert(&law.active, region),
            Err(Error::ProjectionTooLarge { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((cache, laws.len(), skipped))
}

/// Writes `report.json` and `trajectories.csv` into a run directory.
pub fn write_run_dir(dir: &Path, summary: &BatchSummary) -> Result<()> {
    let io_err = |e: std::io::Error| Error::BadProblemFile(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let report = json!({
        "mode": summary.mode.label(),
        "lambda": summary.lambda,
        "seed": summary.seed,
        "count": summary.count,
        "qps": summary.qps,
        "flops": summary.flops,
        "costs": summary.costs,
        "messages": summary.messages,
        "bytes": summary.bytes,
        "failures": summary.failures,
    });
    let text = serde_json::to_string_pretty(&report).expect("plain JSON object");
    std::fs::write(dir.join("report.json"), text + "\n").map_err(io_err)?;

    let mut csv = String::from("index,steps,converged,qps,flops,cost,messages,bytes\n");
    for r in &summary.records {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.index,
            r.steps,
            u8::from(r.converged),
            r.qps,
            r.flops,
            r.cost,
            r.messages,
            r.bytes
        ));
    }
    std::fs::write(dir.join("trajectories.csv"), csv).map_err(io_err)?;
    Ok(())
}

/// The slice of a run directory the report needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: String,
    pub qps: f64,
    pub flops: f64,
    pub costs: f64,
}

pub fn read_run_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("report.json");
    let bad = |msg: String| Error::BadProblemFile(format!("{}: {msg}", path.display()));
    let text = std::fs::read_to_string(&path).map_err(|e| bad(e.to_string()))?;
    let root: Value = serde_json::from_str(&text).map_err(|e| bad(format!("invalid JSON: {e}")))?;
    let field = |name: &str| -> Result<f64> {
        root.get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| bad(format!("missing numeric field \"{name}\"")))
    };
    Ok(RunSummary {
        mode: root
            .get("mode")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing field \"mode\"".into()))?
            .to_string(),
        qps: field("qps")?,
        flops: field("flops")?,
        costs: field("costs")?,
    })
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub mode: String,
    pub qps: f64,
    pub flops: f64,
    pub costs: f64,
    pub d_qps_pct: f64,
    pub d_flops_pct: f64,
    pub d_costs_pct: f64,
}

/// Builds the comparison table, with deltas in percent against the run
/// whose mode is `optimal`. Rows keep the input order.
pub fn make_report(runs: &[RunSummary]) -> Result<Vec<ReportRow>> {
    let baseline = runs
        .iter()
        .find(|r| r.mode == "optimal")
        .ok_or(Error::MissingBaseline)?
        .clone();
    let delta = |v: f64, base: f64| 100.0 * (v - base) / base;
    Ok(runs
        .iter()
        .map(|r| ReportRow {
            mode: r.mode.clone(),
            qps: r.qps,
            flops: r.flops,
            costs: r.costs,
            d_qps_pct: delta(r.qps, baseline.qps),
            d_flops_pct: delta(r.flops, baseline.flops),
            d_costs_pct: delta(r.costs, baseline.costs),
        })
        .collect())
}

pub fn report_to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("mode,qps,flops,costs,d_qps_pct,d_flops_pct,d_costs_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.mode, r.qps, r.flops, r.costs, r.d_qps_pct, r.d_flops_pct, r.d_costs_pct
        ));
    }
    out
}

pub fn report_to_text(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<16} {:>12} {:>14} {:>14} {:>10} {:>10} {:>10}\n",
        "mode", "qps", "flops", "costs", "dQPs%", "dflops%", "dcosts%"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<16} {:>12} {:>14} {:>14.2} {:>+10.2} {:>+10.2} {:>+10.2}\n",
            r.mode, r.qps, r.flops, r.costs, r.d_qps_pct, r.d_flops_pct, r.d_costs_pct
        ));
    }
    out
}
