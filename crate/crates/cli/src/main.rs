//! Command-line driver: synthesize problems, run batch experiments in the
//! three controller modes, build projection caches and compare run
//! directories in a Table-style report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rmpc_core::{
    build_projection_cache, condense, make_report, read_run_summary, report_to_csv,
    report_to_text, run_batch, write_run_dir, BatchConfig, Mode, ProblemSpec, QPSolver,
    RegionCache, Result, RunLimits,
};

#[derive(Parser)]
#[command(name = "rmpc", about = "Event-triggered MPC experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Condense a problem file and report the QP dimensions.
    Synth {
        /// Problem description (JSON).
        problem: PathBuf,
        /// Directory for the condensed-QP and terminal-set artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch of seeded closed-loop trajectories in one mode.
    Batch {
        /// Problem description (JSON).
        problem: PathBuf,
        /// Controller mode: optimal | suboptimal | suboptimal-proj.
        #[arg(long)]
        mode: String,
        /// Cost-decrease factor for the extended regions.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Number of trajectories.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Convergence threshold on the state norm.
        #[arg(long, default_value_t = 1e-2)]
        conv_tol: f64,
        /// Step cap per trajectory.
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
        /// Run directory for report.json and trajectories.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start every trajectory from this state (comma-separated).
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        /// Projection cache file for suboptimal-proj mode.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Discover saturated laws with a scouting batch and store their
    /// projection regions.
    Project {
        /// Problem description (JSON).
        problem: PathBuf,
        /// Output cache file (JSON).
        cache: PathBuf,
        /// Scouting trajectories.
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// Scouting seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cost-decrease factor used during scouting.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Abort a projection once it grows past this many rows.
        #[arg(long, default_value_t = 20_000)]
        row_cap: usize,
    },
    /// Compare run directories against the optimal baseline.
    Report {
        /// Run directories written by `batch --out`.
        run_dirs: Vec<PathBuf>,
        /// Also write the table as CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { problem, out } => cmd_synth(&problem, out.as_deref()),
        Command::Batch {
            problem,
            mode,
            lambda,
            count,
            seed,
            conv_tol,
            max_steps,
            out,
            x0,
            cache,
        } => cmd_batch(
            &problem, &mode, lambda, count, seed, conv_tol, max_steps, out.as_deref(),
            x0.as_deref(), cache.as_deref(),
        ),
        Command::Project {
            problem,
            cache,
            count,
            seed,
            lambda,
            row_cap,
        } => cmd_project(&problem, &cache, count, seed, lambda, row_cap),
        Command::Report { run_dirs, csv } => cmd_report(&run_dirs, csv.as_deref()),
    }
}

fn load_spec(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        rmpc_core::Error::BadProblemFile(format!("{}: {e}", path.display()))
    })?;
    ProblemSpec::from_json(&text)
}

fn matrix_json(m: &DMatrix<f64>) -> serde_json::Value {
    serde_json::Value::Array(
        (0..m.nrows())
            .map(|i| {
                serde_json::Value::Array(
                    (0..m.ncols())
                        .map(|j| serde_json::json!(m[(i, j)]))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn vector_json(v: &DVector<f64>) -> serde_json::Value {
    serde_json::Value::Array(v.iter().map(|x| serde_json::json!(x)).collect())
}

fn cmd_synth(problem: &Path, out: Option<&Path>) -> Result<()> {
    let spec = load_spec(problem)?;
    let qp = condense(&spec)?;
    println!("q={} vars={}", qp.rows(), qp.vars());
    if let Some(dir) = out {
        let io_err =
            |e: std::io::Error| rmpc_core::Error::BadProblemFile(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io_err)?;
        let doc = serde_json::json!({
            "vars": qp.vars(),
            "rows": qp.rows(),
            "h": matrix_json(&qp.h),
            "f": matrix_json(&qp.f),
            "y": matrix_json(&qp.y),
            "g": matrix_json(&qp.g),
            "w": vector_json(&qp.w),
            "e": matrix_json(&qp.e),
            "s": matrix_json(&qp.s),
        });
        std::fs::write(
            dir.join("qp.json"),
            serde_json::to_string(&doc).expect("plain JSON") + "\n",
        )
        .map_err(io_err)?;
        let term = serde_json::json!({
            "t": matrix_json(qp.terminal_set.matrix()),
            "d": vector_json(qp.terminal_set.offsets()),
        });
        std::fs::write(
            dir.join("terminal.json"),
            serde_json::to_string(&term).expect("plain JSON") + "\n",
        )
        .map_err(io_err)?;
    }
    Ok(())
}

fn parse_mode(label: &str) -> Result<Mode> {
    Mode::from_label(label).ok_or_else(|| {
        rmpc_core::Error::BadProblemFile(format!(
            "unknown mode \"{label}\" (expected optimal, suboptimal or suboptimal-proj)"
        ))
    })
}

fn parse_x0(text: &str, dim: usize) -> Result<DVector<f64>> {
    let vals: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| {
        rmpc_core::Error::BadProblemFile(format!("invalid --x0 entry: {e}"))
    })?;
    if vals.len() != dim {
        return Err(rmpc_core::Error::DimensionMismatch(format!(
            "--x0 has {} entries, the problem has {} states",
            vals.len(),
            dim
        )));
    }
    Ok(DVector::from_vec(vals))
}

#[allow(clippy::too_many_arguments)]
fn cmd_batch(
    problem: &Path,
    mode: &str,
    lambda: f64,
    count: usize,
    seed: u64,
    conv_tol: f64,
    max_steps: usize,
    out: Option<&Path>,
    x0: Option<&str>,
    cache_path: Option<&Path>,
) -> Result<()> {
    let spec = load_spec(problem)?;
    let qp = condense(&spec)?;
    let solver = QPSolver::new(&qp);
    let config = BatchConfig {
        mode: parse_mode(mode)?,
        lambda,
        count,
        seed,
        limits: RunLimits {
            max_steps,
            conv_tol,
        },
        forced_x0: match x0 {
            Some(text) => Some(parse_x0(text, spec.state_dim())?),
            None => None,
        },
    };
    let cache = match cache_path {
        Some(p) => Some(RegionCache::load(p)?),
        None => None,
    };
    let summary = run_batch(&spec, &solver, &config, cache.as_ref())?;
    println!(
        "mode={} lambda={} count={} seed={}: qps={} flops={} costs={} messages={} bytes={} failures={}",
        summary.mode.label(),
        summary.lambda,
        summary.count,
        summary.seed,
        summary.qps,
        summary.flops,
        summary.costs,
        summary.messages,
        summary.bytes,
        summary.failures,
    );
    if let Some(dir) = out {
        write_run_dir(dir, &summary)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_project(
    problem: &Path,
    cache_file: &Path,
    count: usize,
    seed: u64,
    lambda: f64,
    row_cap: usize,
) -> Result<()> {
    let spec = load_spec(problem)?;
    let qp = condense(&spec)?;
    let solver = QPSolver::new(&qp);
    let config = BatchConfig {
        mode: Mode::SuboptimalProjection,
        lambda,
        count,
        seed,
        limits: RunLimits::default(),
        forced_x0: None,
    };
    let (cache, seen, skipped) = build_projection_cache(&spec, &solver, &config, row_cap)?;
    cache.save(cache_file)?;
    println!(
        "cached {} projection regions from {} discovered laws ({} skipped as too large) -> {}",
        cache.len(),
        seen,
        skipped,
        cache_file.display()
    );
    Ok(())
}

fn cmd_report(run_dirs: &[PathBuf], csv: Option<&Path>) -> Result<()> {
    let runs = run_dirs
        .iter()
        .map(|d| read_run_summary(d))
        .collect::<Result<Vec<_>>>()?;
    let rows = make_report(&runs)?;
    print!("{}", report_to_text(&rows));
    if let Some(path) = csv {
        std::fs::write(path, report_to_csv(&rows)).map_err(|e| {
            rmpc_core::Error::BadProblemFile(format!("{}: {e}", path.display()))
        })?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
