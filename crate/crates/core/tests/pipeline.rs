use std::path::Path;

use iree_core::baselines::{baseline_solve, warm_start, BaselineVariant};
use iree_core::capacity::{capacity_field, CapacityKind};
use iree_core::io::{self, load_scenario, Artifact, RunInfo, ScenarioDocument};
use iree_core::solver::{evaluate_metrics, optimize, penalty_omega};

const SMALL: &str = r#"
seed = 11

[network]
n_bs = 2
n_ris = 2
n_t_bs = 2
n_t_ris = 4
area_side_m = 1200.0
grid_side = 10

[traffic]
d_tot_bps = 1e10

[constraints]
zeta_min = 0.1

[solver]
inner_iters_bs = 10
inner_iters_ris = 10
max_outer_iters = 8
"#;

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn shipped_defaults_match_builtin_defaults() {
    let doc = load_scenario(configs().join("defaults.toml")).unwrap();
    assert_eq!(doc, ScenarioDocument::default());
}

#[test]
fn shipped_configs_validate() {
    for name in ["defaults.toml", "desk.toml", "sweep.toml", "toy.toml"] {
        let doc = load_scenario(configs().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        doc.scenario(doc.seed).unwrap();
    }
}

#[test]
fn optimized_deployment_reports_consistent_metrics() {
    let doc = ScenarioDocument::parse(SMALL).unwrap();
    let s = doc.scenario(doc.seed).unwrap();
    let trace = optimize(&s, &doc.solver_config()).unwrap();
    assert!(trace.records.len() <= doc.solver.max_outer_iters);
    assert_eq!(evaluate_metrics(&s, &trace.deployment).unwrap(), trace.metrics);
    if trace.converged {
        let cap = capacity_field(
            &trace.deployment,
            &s.grid,
            &s.propagation,
            &s.power,
            s.seed,
            CapacityKind::LowerBound,
        )
        .unwrap();
        let omega = penalty_omega(&trace.deployment, cap.values(), s.traffic.values(), &s.constraints()).unwrap();
        assert_eq!(omega, 0.0);
    }
    let start = evaluate_metrics(&s, &warm_start(&s).unwrap()).unwrap();
    assert!(
        trace.metrics.iree >= start.iree,
        "{} < {}",
        trace.metrics.iree,
        start.iree
    );
}

#[test]
fn baselines_share_placement_and_power_accounting() {
    let doc = ScenarioDocument::parse(SMALL).unwrap();
    let s = doc.scenario(doc.seed).unwrap();
    let cfg = doc.solver_config();
    let bs_only = baseline_solve(&s, BaselineVariant::BsOnlyUnopt, &cfg).unwrap();
    let with_ris = baseline_solve(&s, BaselineVariant::BsRisUnopt, &cfg).unwrap();
    assert!(bs_only.deployment.ris.is_empty());
    assert_eq!(with_ris.deployment.ris.len(), 2);
    let locs = |t: &iree_core::solver::SolveTrace| t.deployment.bs.iter().map(|b| b.location).collect::<Vec<_>>();
    assert_eq!(locs(&bs_only), locs(&with_ris));
    let extra = with_ris.metrics.p_t - bs_only.metrics.p_t;
    assert!((extra - 2.0 * s.power.p_circuit_ris).abs() < 1e-9);
}

#[test]
fn saved_results_round_trip_through_csv() {
    let doc = ScenarioDocument::parse(SMALL).unwrap();
    let s = doc.scenario(doc.seed).unwrap();
    let dep = warm_start(&s).unwrap();
    let m = evaluate_metrics(&s, &dep).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let artifacts = vec![
        Artifact::csv(
            "traffic.csv",
            io::field_csv(s.grid.centers(), s.traffic.values(), "traffic_bps").unwrap(),
        ),
        Artifact::csv("metrics.csv", io::metrics_csv(&m).unwrap()),
    ];
    let info = RunInfo {
        command: "test".into(),
        seed: doc.seed,
        config_hash: io::sha256_hex(doc.to_toml().unwrap().as_bytes()),
        wall_time_s: 0.0,
    };
    let manifest = io::save_results(&artifacts, dir.path(), &info).unwrap();
    assert_eq!(manifest.files.len(), 2);

    let (centers, values) = io::read_field_csv(&dir.path().join("traffic.csv")).unwrap();
    assert_eq!(centers.len(), s.grid.len());
    for (a, b) in values.iter().zip(s.traffic.values()) {
        assert!((a - b).abs() <= 1e-11 * b.abs());
    }
    let (header, cols) = io::read_columns(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(header, ["c_tot", "d_tot", "p_t", "xi", "csat", "ee", "iree"]);
    assert!((cols[6][0] - m.iree).abs() <= 1e-11 * m.iree);
}

#[test]
fn document_survives_serialization() {
    let doc = ScenarioDocument::parse(SMALL).unwrap();
    let again = ScenarioDocument::parse(&doc.to_toml().unwrap()).unwrap();
    assert_eq!(doc, again);
    assert_eq!(
        doc.scenario(3).unwrap().traffic.values(),
        again.scenario(3).unwrap().traffic.values()
    );
}
