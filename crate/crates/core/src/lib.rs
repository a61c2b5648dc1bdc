//! Event-triggered linear MPC with explicit law reuse.
//!
//! The pipeline: a linear MPC problem is condensed into a parametric QP
//! over the stacked input sequence (`synthesis`); solving it at a state
//! yields an active set, from which an explicit affine feedback law and
//! the regions on which it stays usable are derived (`qp`, `regions`);
//! a closed-loop controller reuses the law while the state remains in
//! the region and re-solves only on exit events (`controller`); a
//! central/local node split accounts QPs, flops, messages and bytes
//! (`netsim`); and seeded batches aggregate the savings across random
//! initial states (`batch`).

pub mod batch;
pub mod controller;
pub mod error;
pub mod geometry;
pub mod lp;
pub mod netsim;
pub mod problem;
pub mod qp;
pub mod regions;
pub mod synthesis;

pub use batch::{
    build_projection_cache, make_report, read_run_summary, report_to_csv, report_to_text,
    run_batch, sample_initial_states, write_run_dir, BatchConfig, BatchSummary, ReportRow,
    RunSummary, TrajectoryRecord,
};
pub use controller::{Controller, Mode, RunLimits, Trajectory};
pub use error::{Error, Result};
pub use geometry::{
    contains_polytope, eliminate_column, project_prefix, remove_redundant, same_set, Polytope,
    ROW_TOL,
};
pub use lp::{lp_exceeds, lp_max, LpOutcome};
pub use netsim::{
    deserialize_packet, run_networked, serialize_packet, LawPacket, PacketBody, Telemetry,
};
pub use problem::ProblemSpec;
pub use qp::{QPSolution, QPSolver};
pub use regions::{
    feasibility_polytope, is_saturated, law_and_polytope, law_cost_coefficients,
    projection_region, projection_region_direct, repair_active_set, tail_feasible_set, AffineLaw,
    RegionCache, StabilityQuadric, ValidityRegion,
};
pub use synthesis::{
    condense, lqr_gain, matrix_power, simulated_cost, solve_dare, spectral_radius, terminal_set,
    CondensedQP, RowKind, RowTag,
};
