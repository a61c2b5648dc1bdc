//! Seeded batch experiments, their on-disk artifacts, and the
//! cross-mode comparison report.

mod common;

use common::{ex1, ex1_solver};
use nalgebra::DVector;
use rmpc_core::{
    build_projection_cache, is_saturated, make_report, read_run_summary, report_to_csv,
    report_to_text, run_batch, sample_initial_states, write_run_dir, BatchConfig, Controller,
    Error, Mode, RunLimits, RunSummary, ValidityRegion,
};

fn config(mode: Mode, lambda: f64, count: usize, seed: u64) -> BatchConfig {
    BatchConfig { mode, lambda, count, seed, limits: RunLimits::default(), forced_x0: None }
}

#[test]
fn equal_seeds_give_byte_identical_artifacts() {
    let cfg = config(Mode::Suboptimal, 0.9, 15, 42);
    let a = run_batch(ex1(), ex1_solver(), &cfg, None).unwrap();
    let b = run_batch(ex1(), ex1_solver(), &cfg, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (dir_a, dir_b) = (dir.path().join("a"), dir.path().join("b"));
    write_run_dir(&dir_a, &a).unwrap();
    write_run_dir(&dir_b, &b).unwrap();
    for name in ["report.json", "trajectories.csv"] {
        let bytes_a = std::fs::read(dir_a.join(name)).unwrap();
        let bytes_b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }

    let other = run_batch(ex1(), ex1_solver(), &config(Mode::Suboptimal, 0.9, 15, 43), None)
        .unwrap();
    let dir_c = dir.path().join("c");
    write_run_dir(&dir_c, &other).unwrap();
    assert_ne!(
        std::fs::read(dir_a.join("trajectories.csv")).unwrap(),
        std::fs::read(dir_c.join("trajectories.csv")).unwrap(),
        "different seeds should sample different starts"
    );
}

#[test]
fn summary_is_the_reduction_of_its_records() {
    let summary = run_batch(ex1(), ex1_solver(), &config(Mode::Optimal, 1.0, 12, 7), None)
        .unwrap();
    assert_eq!(summary.records.len(), 12);
    assert_eq!(summary.qps, summary.records.iter().map(|r| r.qps as u64).sum::<u64>());
    assert_eq!(summary.flops, summary.records.iter().map(|r| r.flops).sum::<u64>());
    assert_eq!(summary.messages, summary.records.iter().map(|r| r.messages as u64).sum::<u64>());
    assert_eq!(summary.bytes, summary.records.iter().map(|r| r.bytes).sum::<u64>());
    assert_eq!(
        summary.failures,
        summary.records.iter().filter(|r| !r.converged).count()
    );
    let cost_sum: f64 = summary.records.iter().map(|r| r.cost).sum();
    assert!((summary.costs - cost_sum).abs() <= 1e-9 * (1.0 + cost_sum.abs()));
    for (i, r) in summary.records.iter().enumerate() {
        assert_eq!(r.index, i);
        assert_eq!(r.messages, 2 * r.qps);
    }
}

#[test]
fn forced_converged_start_accounts_the_screening_solve() {
    let mut cfg = config(Mode::Optimal, 1.0, 3, 0);
    cfg.forced_x0 = Some(DVector::zeros(2));
    let summary = run_batch(ex1(), ex1_solver(), &cfg, None).unwrap();
    assert_eq!(summary.qps, 3);
    assert_eq!(summary.messages, 6);
    assert!(summary.bytes > 0);
    assert_eq!(summary.bytes % 3, 0);
    for r in &summary.records {
        assert_eq!(r.steps, 0);
        assert!(r.converged);
        assert_eq!(r.qps, 1);
        assert_eq!(r.messages, 2);
    }
}

#[test]
fn forced_infeasible_start_is_an_error() {
    let mut cfg = config(Mode::Optimal, 1.0, 1, 0);
    cfg.forced_x0 = Some(DVector::from_vec(vec![-3.0, 3.0]));
    assert!(matches!(
        run_batch(ex1(), ex1_solver(), &cfg, None),
        Err(Error::InfeasibleState { step: 0 })
    ));
}

#[test]
fn sampling_is_deterministic_feasible_and_in_the_box() {
    let a = sample_initial_states(ex1(), ex1_solver(), 50, 5).unwrap();
    let b = sample_initial_states(ex1(), ex1_solver(), 50, 5).unwrap();
    assert_eq!(a.len(), 50);
    for ((xa, sola), (xb, solb)) in a.iter().zip(&b) {
        assert_eq!(xa, xb);
        assert_eq!(sola.u_bar, solb.u_bar);
        for (i, &(lo, hi)) in ex1().x_bounds.iter().enumerate() {
            assert!(xa[i] >= lo && xa[i] <= hi);
        }
        let fresh = ex1_solver().solve(xa).unwrap();
        assert_eq!(fresh.u_bar, sola.u_bar);
    }
    let c = sample_initial_states(ex1(), ex1_solver(), 50, 6).unwrap();
    assert!(a.iter().zip(&c).any(|((xa, _), (xc, _))| xa != xc));
}

#[test]
fn run_summary_round_trips_through_the_run_dir() {
    let summary = run_batch(ex1(), ex1_solver(), &config(Mode::Suboptimal, 1.0, 5, 9), None)
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_dir(dir.path(), &summary).unwrap();
    let back = read_run_summary(dir.path()).unwrap();
    assert_eq!(back.mode, "suboptimal");
    assert_eq!(back.qps, summary.qps as f64);
    assert_eq!(back.flops, summary.flops as f64);
    assert!((back.costs - summary.costs).abs() <= 1e-12 * (1.0 + summary.costs.abs()));

    assert!(matches!(
        read_run_summary(&dir.path().join("missing")),
        Err(Error::BadProblemFile(_))
    ));
}

#[test]
fn report_deltas_are_percentages_against_the_optimal_row() {
    let runs = vec![
        RunSummary { mode: "optimal".into(), qps: 100.0, flops: 1000.0, costs: 50.0 },
        RunSummary { mode: "suboptimal".into(), qps: 75.0, flops: 800.0, costs: 51.0 },
    ];
    let rows = make_report(&runs).unwrap();
    assert_eq!(rows[0].mode, "optimal");
    assert_eq!(rows[0].d_qps_pct, 0.0);
    assert_eq!(rows[0].d_flops_pct, 0.0);
    assert_eq!(rows[0].d_costs_pct, 0.0);
    assert_eq!(rows[1].d_qps_pct, -25.0);
    assert_eq!(rows[1].d_flops_pct, -20.0);
    assert_eq!(rows[1].d_costs_pct, 2.0);

    let csv = report_to_csv(&rows);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "mode,qps,flops,costs,d_qps_pct,d_flops_pct,d_costs_pct"
    );
    assert_eq!(lines.next().unwrap(), "optimal,100,1000,50,0,0,0");
    assert_eq!(lines.next().unwrap(), "suboptimal,75,800,51,-25,-20,2");
    assert_eq!(lines.next(), None);

    let text = report_to_text(&rows);
    assert!(text.starts_with("mode"));
    assert!(text.contains("-25.00"));
    assert!(text.contains("+2.00"));

    // Reversed order keeps rows in place; only the baseline lookup cares
    // about the mode name.
    let swapped = make_report(&[runs[1].clone(), runs[0].clone()]).unwrap();
    assert_eq!(swapped[0].mode, "suboptimal");
    assert_eq!(swapped[0].d_qps_pct, -25.0);

    let no_baseline = vec![RunSummary {
        mode: "suboptimal".into(),
        qps: 75.0,
        flops: 800.0,
        costs: 51.0,
    }];
    assert!(matches!(make_report(&no_baseline), Err(Error::MissingBaseline)));
}

#[test]
fn projection_cache_covers_saturated_laws_and_extends_regions() {
    let cfg = config(Mode::SuboptimalProjection, 1.0, 40, 17);
    let (cache, law_count, skipped) =
        build_projection_cache(ex1(), ex1_solver(), &cfg, 4000).unwrap();
    assert!(!cache.is_empty(), "scouting found no saturated laws");
    assert!(law_count >= cache.len());
    assert_eq!(skipped, 0);

    // With the cache wired in, events on saturated laws must ship the
    // projected region instead of the plain feasibility rows.
    let ctrl = Controller::new(ex1(), ex1_solver(), Mode::SuboptimalProjection, 1.0, Some(&cache));
    let starts = sample_initial_states(ex1(), ex1_solver(), 40, 17).unwrap();
    let mut saw_cached = false;
    for (x0, sol) in &starts {
        ctrl.run_with_sink(x0, &RunLimits::default(), Some(sol), |law, region| {
            if let ValidityRegion::Extended { feasibility, .. } = region {
                if is_saturated(law, &ex1().u_bounds) {
                    if let Some(projected) = cache.get(&law.active) {
                        saw_cached = true;
                        assert_eq!(feasibility.matrix(), projected.matrix());
                        assert_eq!(feasibility.offsets(), projected.offsets());
                    }
                }
            }
        })
        .unwrap();
    }
    assert!(saw_cached, "no trajectory ever used a cached projection");
}

#[test]
fn projections_do_not_increase_the_qp_load() {
    let seed = 31;
    let count = 30;
    let sub = run_batch(ex1(), ex1_solver(), &config(Mode::Suboptimal, 1.0, count, seed), None)
        .unwrap();
    let cfg = config(Mode::SuboptimalProjection, 1.0, count, seed);
    let (cache, _, _) = build_projection_cache(ex1(), ex1_solver(), &cfg, 4000).unwrap();
    let proj = run_batch(ex1(), ex1_solver(), &cfg, Some(&cache)).unwrap();
    assert!(
        proj.qps <= sub.qps,
        "projection mode used more solves ({} vs {})",
        proj.qps,
        sub.qps
    );
}
