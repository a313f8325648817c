use std::fs;

use spikeslab::exec::Exec;
use spikeslab::harness::*;

fn small_contract(seed: u64) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        r#"
        study = "contract"
        seed = {seed}
        replications = 3
        grid = [{{ n = 40, p = 6, s = 2 }}, {{ n = 60, p = 7, s = 0 }}, {{ n = 50, p = 30, s = 2 }}]
        signal = {{ kind = "rate", multiple = 10.0 }}

        [inference]
        draws_per_model = 200
        [inference.sampler]
        sweeps = 300
        burn_in = 100
        "#
    ))
    .unwrap()
}

#[test]
fn schema_file_matches_rows() {
    let committed = include_str!("../schema/study_row.v1.csv");
    assert_eq!(committed.trim_end(), study_row_header());
    assert_eq!(STUDY_ROW_VERSION, 1);
}

#[test]
fn output_does_not_depend_on_workers() {
    let cfg = small_contract(11);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, ma) = run_study(&cfg, Some(a.path()), Some(1)).unwrap();
    let (_, mb) = run_study(&cfg, Some(b.path()), Some(3)).unwrap();
    assert_eq!(ma.files, vec!["rows.csv", "aggregate.csv"]);
    assert_eq!(ma.config_sha256, mb.config_sha256);
    for f in &ma.files {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert!(a.path().join(MANIFEST_FILE).exists());
    assert_eq!(ma.rows, 9);
}

#[test]
fn rows_follow_grid_and_replication_order() {
    let cfg = small_contract(5);
    let rows = run_contraction_study(&cfg, Exec::Sequential).unwrap();
    let coords: Vec<(usize, usize)> = rows.iter().map(|r| (r.grid_index, r.replication)).collect();
    assert_eq!(coords, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]);
    for r in &rows {
        assert!(r.is_ok(), "{}", r.error);
        assert_eq!(r.seed, replication_seed(5, r.grid_index, r.replication));
    }
    assert_eq!(rows[0].inference, Some("exact"));
    assert_eq!(rows[8].inference, Some("mcmc"));
    // replications share the design and redraw noise
    assert_eq!(rows[0].design_seed, rows[2].design_seed);
    assert_eq!(rows[0].lambda, rows[2].lambda);
    assert_ne!(rows[0].seed, rows[2].seed);
}

#[test]
fn empty_truth_keeps_size_clause() {
    let cfg = small_contract(6);
    let rows = run_contraction_study(&cfg, Exec::Sequential).unwrap();
    for r in rows.iter().filter(|r| r.s == 0) {
        assert!(r.size_clause.unwrap() >= 0.99, "{:?}", r.size_clause);
    }
}

#[test]
fn failing_replication_becomes_error_row() {
    let mut cfg = small_contract(2);
    cfg.design = spikeslab::model::DesignSpec::DuplicateColumnDemo;
    cfg.signal = SignalSpec::BetaMin { multiple: 2.0 };
    cfg.grid = vec![GridPoint { n: 40, p: 6, s: 1 }, GridPoint { n: 40, p: 6, s: 0 }];
    let rows = run_contraction_study(&cfg, Exec::Sequential).unwrap();
    assert_eq!(rows.len(), 6);
    // lambda = 0 leaves the beta-min signal undefined at the first point
    for r in &rows[..3] {
        assert_eq!(r.status, "error");
        assert!(r.error.contains("lambda"), "{}", r.error);
    }
    assert!(rows[3..].iter().all(|r| r.is_ok()));
    let agg = aggregate(&rows);
    assert_eq!((agg[0].replications, agg[0].errors), (0, 3));
}

#[test]
fn selection_arms_are_paired() {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
        study = "select"
        seed = 3
        replications = 2
        grid = [{ n = 60, p = 8, s = 2 }]
        [prior]
        selection = { kind = "csv", csv_base = "p^2" }
        spike = { kind = "dirac" }
        slab = { kind = "gaussian", scale = 1.0 }
        [inference]
        draws_per_model = 100
        "#,
    )
    .unwrap();
    let rows = run_selection_study(&cfg, Exec::Sequential).unwrap();
    assert_eq!(rows.iter().map(|r| r.arm).collect::<Vec<_>>(), vec!["above", "above", "below", "below"]);
    assert_eq!(rows[0].seed, rows[2].seed);
    let ratio = rows[2].signal.unwrap() / rows[0].signal.unwrap();
    assert!((ratio - 0.05).abs() < 1e-12);
    assert!(rows[0].prob_true_model.unwrap() > rows[2].prob_true_model.unwrap());
    assert!(rows.iter().all(|r| r.r_n.is_some()));
}

#[test]
fn huge_slab_density_flags_rate_condition() {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
        study = "select"
        replications = 1
        grid = [{ n = 40, p = 6, s = 1 }]
        [prior]
        selection = { kind = "bernoulli" }
        spike = { kind = "dirac" }
        slab = { kind = "gaussian", scale = 1e-6 }
        [inference]
        draws_per_model = 50
        "#,
    )
    .unwrap();
    let rows = run_selection_study(&cfg, Exec::Sequential).unwrap();
    assert_eq!(rows[0].rate_below_one, Some(false));
}

#[test]
fn eigen_audit_examples() {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
        study = "audit-eigen"
        grid = [{ n = 30, p = 6, s = 1 }, { n = 40, p = 5, s = 2 }]
        design = { kind = "orthogonal" }
        "#,
    )
    .unwrap();
    let rows = run_eigen_audit(&cfg, Exec::Sequential).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.status, "ok", "{}", r.error);
        for v in [r.muev, r.msev, r.mnev] {
            assert!((v.unwrap() - 1.0).abs() < 1e-9);
        }
        assert_eq!(r.assumption2, Some(true));
    }

    let mut dup = cfg.clone();
    dup.design = spikeslab::model::DesignSpec::DuplicateColumnDemo;
    dup.grid = vec![GridPoint { n: 30, p: 6, s: 1 }];
    let rows = run_eigen_audit(&dup, Exec::Sequential).unwrap();
    assert!(rows[0].lambda.unwrap().abs() < LAMBDA_FLOOR);
    assert_eq!(rows[0].assumption2, Some(false));
}

#[test]
fn prior_audit_bernoulli_tail() {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
        study = "audit-prior"
        grid = [{ n = 50, p = 10, s = 1 }, { n = 200, p = 100, s = 1 }, { n = 400, p = 1000, s = 1 }]
        [audit]
        t_max = 2
        "#,
    )
    .unwrap();
    let rows = run_prior_audit(&cfg, Exec::Sequential).unwrap();
    let tails: Vec<f64> =
        rows.iter().filter(|r| r.check == "tail" && r.t == Some(1)).map(|r| r.value.unwrap()).collect();
    assert_eq!(tails.len(), 3);
    for t in tails {
        assert!((t - 0.264).abs() < 0.01, "{t}");
    }
}

#[test]
fn bounds_study_writes_rows() {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
        study = "bounds"
        [[bounds]]
        check = "pelekis"
        params = { p = 10, mu = 0.1, t = 2 }
        [[bounds]]
        check = "chi2"
        params = { d = 3, t = 6 }
        "#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = run_study(&cfg, Some(dir.path()), Some(1)).unwrap();
    assert_eq!(m.rows, 2);
    let text = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert!(text.starts_with("check,inputs,bound,exact,"));
    assert!(text.contains("fails-unasserted"));
}

#[test]
fn posterior_on_generated_and_bundled_data() {
    let mut cfg = small_contract(9);
    cfg.grid.truncate(1);
    let run = run_posterior(&cfg, None, 5).unwrap();
    assert_eq!(run.models.len(), 5);
    assert_eq!(run.models[0].rank, 1);
    assert!(run.models.windows(2).all(|w| w[0].mass >= w[1].mass));
    assert!(run.summary.is_some());

    let d = prepare_design(&cfg, 0).unwrap();
    let mut inst = instance_for(&d, 1.0, 4).unwrap();
    inst.truth = None;
    let run = run_posterior(&cfg, Some(inst), 3).unwrap();
    assert!(run.summary.is_none());
    assert_eq!(run.models[0].source, "exact");
}
