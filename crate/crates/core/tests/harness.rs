use nhevec::changevar::Side;
use nhevec::harness::*;
use nhevec::scalar::cplx;
use proptest::prelude::*;

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_kind(kind);
    c.n_list = vec![24];
    c.n_samples = 12;
    c
}

#[test]
fn config_round_trips_through_json() {
    for kind in ExperimentKind::ALL {
        let mut c = ExperimentConfig::for_kind(kind);
        c.t_rule = TRule::Power { exponent: -1.0 / 3.0 + 0.05 };
        c.params.deltas = vec![0.05, 0.1, 0.2];
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }
}

#[test]
fn partial_config_takes_defaults() {
    let c: ExperimentConfig = serde_json::from_str(r#"{"kind": "rigidity", "n_samples": 3}"#).unwrap();
    assert_eq!(c.kind, ExperimentKind::Rigidity);
    assert_eq!(c.n_samples, 3);
    assert_eq!(c.thresholds, Thresholds::default());
}

#[test]
fn every_kind_has_a_cli_name() {
    for kind in ExperimentKind::ALL {
        let v = serde_json::to_value(kind).unwrap();
        assert_eq!(v.as_str().unwrap(), kind.name());
    }
}

#[test]
fn zero_samples_give_empty_passing_record_with_warning() {
    let mut c = small(ExperimentKind::EvecStats);
    c.n_samples = 0;
    let r = run_experiment(&c).unwrap();
    assert!(r.aggregate.pass && r.aggregate.samples.is_empty());
    assert_eq!(r.aggregate.warnings.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&r, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("aggregate.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["used"], 0);
}

#[test]
fn aggregate_is_independent_of_thread_count() {
    let mut c = small(ExperimentKind::EvecStats);
    c.targets = vec![
        Target { z: cplx(0.0, 0.0), side: Side::Right },
        Target { z: cplx(0.5, 0.0), side: Side::Left },
    ];
    c.n_samples = 16;
    let a = run_experiment_with_threads(&c, 1).unwrap().aggregate_json().unwrap();
    let b = run_experiment_with_threads(&c, 4).unwrap().aggregate_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn discards_are_accounted() {
    let mut c = small(ExperimentKind::EvecStats);
    // two targets with the same nearest eigenvalue are always rejected
    c.targets = vec![
        Target { z: cplx(0.0, 0.0), side: Side::Right },
        Target { z: cplx(1e-9, 0.0), side: Side::Right },
    ];
    c.thresholds.discard_cap = 0.5;
    let err = run_experiment(&c).unwrap_err();
    assert!(matches!(err, nhevec::error::Error::DiscardCapExceeded { discarded: 12, total: 12 }));

    let mut c = small(ExperimentKind::EvecStats);
    c.thresholds.discard_cap = 0.0;
    let r = run_experiment(&c).unwrap();
    assert_eq!(r.aggregate.used + r.aggregate.discarded, r.aggregate.n_samples);
    assert_eq!(r.aggregate.n_samples, 12);
}

#[test]
fn emitted_files_follow_format_contract() {
    let mut c = small(ExperimentKind::VerifyA1);
    c.params.eta_grid.points = 5;
    c.n_samples = 2;
    let r = run_experiment(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&r, dir.path()).unwrap();
    let dats: Vec<_> = files.iter().filter(|p| p.extension().unwrap() == "dat").collect();
    assert_eq!(dats.len(), r.aggregate.scaling.len());
    for d in dats {
        let text = std::fs::read_to_string(d).unwrap();
        let rows: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|l| l.split_whitespace().count() == 2));
    }
    let summary: RunRecord = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, r);
}

#[test]
fn ecdf_overlay_has_one_more_row_than_samples() {
    let c = small(ExperimentKind::EvecStats);
    let r = run_experiment(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&r, dir.path()).unwrap();
    let e = files.iter().find(|p| p.file_name().unwrap().to_string_lossy().starts_with("ecdf_")).unwrap();
    let text = std::fs::read_to_string(e).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), r.aggregate.used + 1);
    assert!(rows.windows(2).all(|w| w[0][1] < w[1][1] && w[0][0] <= w[1][0]));
}

#[test]
fn each_kind_runs_at_small_size() {
    for kind in ExperimentKind::ALL {
        let mut c = small(kind);
        match kind {
            ExperimentKind::JacobianCheck => {
                c.n_list = vec![3];
                c.sides = vec![Side::Right, Side::Left];
                c.n_samples = 3;
            }
            ExperimentKind::KqRatio | ExperimentKind::Mgf => c.t_rule = TRule::Fixed { t: 0.4 },
            ExperimentKind::VerifyA2 | ExperimentKind::Independence => {
                c.targets.push(Target { z: cplx(0.5, 0.0), side: Side::Left });
            }
            ExperimentKind::DseTable => c.params.dse_points = 11,
            _ => {}
        }
        let r = run_experiment(&c).unwrap_or_else(|e| panic!("{kind:?}: {e}"));
        assert_eq!(r.aggregate.kind, kind.name());
        assert_eq!(r.aggregate.used + r.aggregate.discarded, r.aggregate.n_samples);
    }
}

#[test]
fn same_config_gives_identical_aggregate() {
    let c = small(ExperimentKind::LevelRepulsion);
    let a = run_experiment(&c).unwrap().aggregate_json().unwrap();
    let b = run_experiment(&c).unwrap().aggregate_json().unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn t_rule_power_matches_definition(n in 2usize..4096, e in -1.0f64..0.0) {
        let t = TRule::Power { exponent: e }.at(n);
        prop_assert!((t.ln() - e * (n as f64).ln()).abs() < 1e-12);
    }
}
