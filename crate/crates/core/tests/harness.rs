use std::path::Path;

use gala_core::harness::{compare_bounds, run_experiment, sweep, ExperimentConfig, Mode};
use gala_core::harness::artifacts::decode_params;
use gala_core::engine::Tau;
use gala_core::GalaError;

fn config(json: serde_json::Value, out: &Path) -> ExperimentConfig {
    let mut v = json;
    v["output_dir"] = serde_json::Value::String(out.display().to_string());
    ExperimentConfig::from_json(&v.to_string()).unwrap()
}

fn gossip_json() -> serde_json::Value {
    serde_json::json!({
        "mode": "gossip-only",
        "topology": {"kind": "ring", "n": 8},
        "dim": 6,
        "init": {"kind": "uniform", "low": -1.0, "high": 1.0},
        "seeds": [1, 2],
        "total_steps": 500
    })
}

fn synthetic_json(seeds: Vec<u64>) -> serde_json::Value {
    serde_json::json!({
        "mode": "gala-sim",
        "topology": {"kind": "ring", "n": 4},
        "tau": 1,
        "delay": {"kind": "uniform"},
        "learner": {"kind": "synthetic", "lr": 0.05, "noise": 0.3, "cap": 1.5},
        "dim": 3,
        "seeds": seeds,
        "total_steps": 300
    })
}

fn chain_json(mode: &str, n: usize, seeds: Vec<u64>) -> serde_json::Value {
    serde_json::json!({
        "mode": mode,
        "topology": {"kind": "ring", "n": n},
        "learner": {"kind": "a2c", "optimizer": {"kind": "rms_prop"}},
        "env": {"kind": "chain", "length": 5},
        "seeds": seeds,
        "total_steps": 40000,
        "eval": {"interval": 5000, "episodes": 2},
        "bounds": {"enabled": false}
    })
}

#[test]
fn gossip_only_reports_consensus() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&config(gossip_json(), dir.path()), None).unwrap();
    assert!(s.passed);
    for seed in &s.seeds {
        assert!(seed.consensus.consensus_achieved);
        assert!(seed.consensus.max_deviation_from_initial_mean <= 1e-8);
    }
    for f in ["bounds.csv", "metrics.csv", "corr.csv", "protocol.log", "summary.json", "final_params.bin", "timing.json"] {
        assert!(dir.path().join("seed_1").join(f).is_file(), "{f} missing");
    }
    assert!(dir.path().join("summary.json").is_file());
}

#[test]
fn gossip_only_bounds_are_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let mut j = gossip_json();
    j["init"] = serde_json::json!({"kind": "identical"});
    run_experiment(&config(j, dir.path()), None).unwrap();
    let reports = compare_bounds(dir.path()).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert_eq!(r.violations, 0);
        assert_eq!(r.degenerate.as_deref(), Some("degenerate: zero bound"));
    }
    assert!(dir.path().join("seed_1").join("bound_report.json").is_file());
}

#[test]
fn synthetic_runs_never_violate_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&config(synthetic_json((0..10).collect()), dir.path()), None).unwrap();
    assert!(s.passed);
    assert_eq!(s.total_violations, 0);
    let reports = compare_bounds(dir.path()).unwrap();
    assert_eq!(reports.len(), 10);
    assert!(reports.iter().all(|r| r.violations == 0 && r.degenerate.is_none()));
    assert!(reports.iter().all(|r| r.geometric.max_ratio <= 1.0 + 1e-9));
}

#[test]
fn summary_is_deterministic_and_counts_metrics_rows() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = run_experiment(&config(synthetic_json(vec![3]), a.path()), None).unwrap();
    run_experiment(&config(synthetic_json(vec![3]), b.path()), None).unwrap();
    let read = |p: &Path| std::fs::read(p.join("seed_3").join("summary.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(std::fs::read(a.path().join("summary.json")).unwrap(), std::fs::read(b.path().join("summary.json")).unwrap());

    let mut rdr = csv::Reader::from_path(a.path().join("seed_3").join("metrics.csv")).unwrap();
    assert_eq!(rdr.records().count(), sa.seeds[0].updates);
    let bytes = std::fs::read(a.path().join("seed_3").join("final_params.bin")).unwrap();
    let params = decode_params(Path::new("final_params.bin"), &bytes).unwrap();
    assert_eq!(params.len(), 4);
    assert_eq!(params[0].len(), 3);
}

#[test]
fn chain_learning_reaches_ninety_percent() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&config(chain_json("gala-sim", 4, vec![0, 1]), dir.path()), None).unwrap();
    for seed in &s.seeds {
        let opt = seed.optimum.unwrap();
        assert!(seed.final_eval.unwrap() >= 0.9 * opt);
        assert!(seed.steps_to_target.is_some());
        assert!(!seed.eval_history.is_empty());
    }
    assert_eq!(s.success_rate, Some(1.0));
}

#[test]
fn single_agent_gossip_equals_allreduce() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&config(chain_json("gala-sim", 1, vec![5]), a.path()), None).unwrap();
    run_experiment(&config(chain_json("allreduce", 1, vec![5]), b.path()), None).unwrap();
    let read = |p: &Path| std::fs::read(p.join("seed_5").join("final_params.bin")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let ma = std::fs::read_to_string(a.path().join("seed_5").join("metrics.csv")).unwrap();
    let mb = std::fs::read_to_string(b.path().join("seed_5").join("metrics.csv")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn sweep_grid_has_one_cell_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    let mut j = chain_json("gala-sim", 4, vec![0, 1, 2, 3, 4]);
    j["total_steps"] = serde_json::json!(2000);
    j["eval"] = serde_json::json!({"interval": 1000, "episodes": 1});
    j["sweep"] = serde_json::json!({"learners": [1, 2, 4], "modes": ["gala-sim", "allreduce"]});
    let cells = sweep(&config(j, dir.path()), None).unwrap();
    assert_eq!(cells.len(), 6);
    assert!(cells.iter().all(|c| c.summary.as_ref().is_some_and(|s| s.seeds.len() == 5)));
    let mut rdr = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(rdr.records().count(), 6);
    assert_eq!(cells[1].mode, Mode::Allreduce);
}

#[test]
fn stationary_bound_grows_with_tau() {
    let dir = tempfile::tempdir().unwrap();
    let mut j = synthetic_json(vec![0, 1, 2]);
    j["delay"] = serde_json::json!({"kind": "adversarial"});
    j["sweep"] = serde_json::json!({"tau": [0, 1, 2]});
    let cells = sweep(&config(j, dir.path()), None).unwrap();
    let bounds: Vec<f64> = cells.iter().map(|c| c.prop2_bound().unwrap()).collect();
    assert_eq!(cells.iter().map(|c| c.tau).collect::<Vec<_>>(), vec![Tau::Finite(0), Tau::Finite(1), Tau::Finite(2)]);
    assert!(bounds.windows(2).all(|w| w[0] <= w[1]), "{bounds:?}");
}

#[test]
fn failing_cell_does_not_stop_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut j = synthetic_json(vec![0]);
    j["topology"] = serde_json::json!({"kind": "custom", "n": 2, "edges": [[0, 1], [1, 0]]});
    j["tau"] = serde_json::json!(0);
    j["delay"] = serde_json::json!({"kind": "constant", "delay": 0});
    j["sweep"] = serde_json::json!({"learners": [2, 3]});
    let cells = sweep(&config(j, dir.path()), None).unwrap();
    assert!(cells[0].error.is_none());
    assert!(cells[1].error.is_some());
    assert!(cells[1].failed());
}

#[test]
fn missing_bounds_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(compare_bounds(dir.path()), Err(GalaError::Format { .. })));
}

#[test]
fn parallel_mode_runs_and_reports_staleness() {
    let dir = tempfile::tempdir().unwrap();
    let mut j = synthetic_json(vec![0]);
    j["mode"] = serde_json::json!("gala-parallel");
    let s = run_experiment(&config(j, dir.path()), None).unwrap();
    assert!(s.passed);
    assert!(s.seeds[0].staleness.max_since_at_step <= 1);
    assert_eq!(s.seeds[0].updates, 4 * 300);
}
