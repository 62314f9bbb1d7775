use semg_core::config::{HardClasses, PipelineConfig};
use semg_core::dataset::{generate_synthetic, make_cv_plans, split_by_repetition};
use semg_core::dsp::{compute_stats, ChannelStats};
use semg_core::ensemble::stratified_kfold;
use semg_core::gbdt::{bin_features, load_model};
use semg_core::pipeline::{class_indices, features_with, prepare_windows, run_pipeline, Mode};
use semg_core::Error;

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.data.synthetic.n_classes = 3;
    cfg.data.synthetic.hold_duration = 1.0;
    cfg.data.synthetic.rest_duration = 0.5;
    cfg.ensemble.k = 2;
    cfg.train.max_rounds = 20;
    cfg
}

#[test]
fn train_then_evaluate_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let trained = run_pipeline(&cfg, Mode::Train, dir.path()).unwrap();
    let first = std::fs::read_to_string(dir.path().join("per_movement.csv")).unwrap();
    let evaluated = run_pipeline(&cfg, Mode::Evaluate, dir.path()).unwrap();
    assert!(trained.stages.contains(&"train"));
    assert!(!evaluated.stages.contains(&"train"));
    assert_eq!(std::fs::read_to_string(dir.path().join("per_movement.csv")).unwrap(), first);
    assert_eq!(trained.report.unwrap().mean_accuracy(), evaluated.report.unwrap().mean_accuracy());
    assert_eq!(first.lines().count(), 5);
}

#[test]
fn statistics_and_bins_come_from_training_windows_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.ensemble.k = 1;
    cfg.loss.hard_classes = HardClasses::Manual(vec![1]);
    run_pipeline(&cfg, Mode::Train, dir.path()).unwrap();

    let rec = generate_synthetic(&cfg.data.synthetic).unwrap();
    let windows = prepare_windows(&[rec], &cfg).unwrap();
    let params = cfg.train_params();
    for (i, plan) in make_cv_plans().iter().enumerate() {
        let plan_dir = dir.path().join(format!("model/plan_{}", i + 1));
        let (train, test) = split_by_repetition(&windows, plan).unwrap();
        let saved: ChannelStats = serde_json::from_str(&std::fs::read_to_string(plan_dir.join("stats.json")).unwrap()).unwrap();
        let expected = compute_stats(&train).unwrap();
        assert_eq!(saved, expected);
        assert_ne!(saved, compute_stats(&test).unwrap());

        let fm = features_with(&expected, &train, &cfg.feature_config()).unwrap();
        let y = class_indices(&fm.labels);
        let folds = stratified_kfold(&y, cfg.ensemble.holdout_folds, params.seed).unwrap();
        let fit_rows: Vec<Vec<f64>> = fm.rows.iter().zip(&folds).filter(|(_, &f)| f != 0).map(|(r, _)| r.clone()).collect();
        let model = load_model(&plan_dir.join("model.json")).unwrap();
        assert_eq!(&model.stages[0].bin_edges, bin_features(&fit_rows, params.max_bins).unwrap().mapper());
    }
}

#[test]
fn failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.data.paths = vec![dir.path().join("missing.csv")];
    let err = run_pipeline(&cfg, Mode::Train, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "load", .. }), "{err}");

    let err = run_pipeline(&small_config(), Mode::Evaluate, &dir.path().join("empty")).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "load", .. }), "{err}");
}

#[test]
fn invalid_config_is_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.window.step = 0;
    assert!(matches!(run_pipeline(&cfg, Mode::Train, dir.path()), Err(Error::Config(_))));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}
