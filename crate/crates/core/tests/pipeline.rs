use harfe::data::{load_csv, CsvOptions, Dataset, Normalizer, TargetColumn};
use harfe::experiment::{self, Experiment, ExperimentConfig};
use harfe::{HarfeError, HarfeModel, ImportanceMode};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn config(
    target: &str,
    activation: &str,
    order: usize,
    normalize: bool,
    seed: u64,
) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
        seed = {seed}
        [target]
        synthetic = "{target}"
        [features]
        n_features = 150
        order = {order}
        activation = "{activation}"
        [solver]
        sparsity = 15
        lambda = 1e-5
        [protocol]
        m_train = 60
        m_test = 20
        normalize = {normalize}
        "#
    ))
    .unwrap()
}

#[test]
fn noiseless_tiny_problem_converges() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        seed = 4
        [target]
        synthetic = "sqrt_norm"
        dim = 2
        [features]
        n_features = 400
        order = 2
        [solver]
        sparsity = 40
        lambda = 1e-10
        epsilon = 1e-3
        [protocol]
        m_train = 40
        m_test = 40
        "#,
    )
    .unwrap();
    let exp = Experiment::new(&cfg).unwrap();
    let (result, fit) = exp.run_trial(0).unwrap();
    assert!(fit.report.converged);
    assert!(result.final_relative_residual <= 1e-3);
    assert!(result.rel_error < 0.05, "{}", result.rel_error);
}

#[test]
fn csv_source_split_and_normalized_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let x = DMatrix::from_fn(3, 80, |i, k| {
        ((i * 31 + k * 17) % 23) as f64 * 10.0 + i as f64
    });
    let y = DVector::from_fn(80, |k, _| 100.0 + x[(0, k)] - 0.5 * x[(2, k)]);
    Dataset::new(x, y, "t").unwrap().write_csv(&path).unwrap();
    let cfg = ExperimentConfig::from_toml(&format!(
        r#"
        seed = 1
        [target]
        csv = "{}"
        target_column = "y"
        [features]
        n_features = 300
        order = 2
        [solver]
        sparsity = 30
        m_lambda = 1e-8
        [protocol]
        split_fraction = 0.5
        normalize = true
        "#,
        path.display()
    ))
    .unwrap();
    let exp = Experiment::new(&cfg).unwrap();
    let data = exp.trial_data(0).unwrap();
    assert_eq!((data.train.len(), data.test.len()), (40, 40));
    let fit = exp.fit_trial(&data).unwrap();
    assert_eq!(fit.report.m_lambda, 1e-8);
    let result = exp.evaluate(&data, &fit, 0.0).unwrap();
    let n = fit.model.output_normalizer().unwrap();
    assert!(
        (result.mse_normalized.unwrap() - result.mse / (n.stds[0] * n.stds[0])).abs()
            < 1e-9 * result.mse.max(1.0)
    );
}

#[test]
fn normalization_round_trip_on_loaded_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "target,a,b\n1,2,3\n4,5,6\n7,8,10\n").unwrap();
    let opts = CsvOptions {
        target_column: Some(TargetColumn::Index(0)),
        ..CsvOptions::default()
    };
    let ds = load_csv(&path, &opts).unwrap();
    assert_eq!(ds.y.as_slice(), &[1.0, 4.0, 7.0]);
    assert_eq!(
        ds.feature_names.as_deref(),
        Some(&["a".to_string(), "b".to_string()][..])
    );
    let norm = Normalizer::fit(&ds).unwrap();
    let back = norm.invert(&norm.apply(&ds).unwrap());
    assert!((back.x - &ds.x).abs().max() < 1e-12);
    assert!((back.y - &ds.y).abs().max() < 1e-12);
}

#[test]
fn predict_command_accepts_inputs_with_or_without_target() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("friedman3", "sin", 2, false, 5);
    cfg.output.dir = dir.path().join("out");
    experiment::cmd_fit(&cfg).unwrap();
    experiment::cmd_gen_synthetic(&cfg).unwrap();
    let model = cfg.output.dir.join("model.json");
    let with_target = cfg.output.dir.join("test.csv");
    let metrics = experiment::cmd_predict(
        &model,
        &with_target,
        &CsvOptions::default(),
        &dir.path().join("p1.csv"),
    )
    .unwrap()
    .unwrap();
    assert!(metrics.0.is_finite() && metrics.1.is_finite());

    let inputs_only = dir.path().join("x.csv");
    let text = std::fs::read_to_string(&with_target).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    std::fs::write(&inputs_only, stripped).unwrap();
    let none = experiment::cmd_predict(
        &model,
        &inputs_only,
        &CsvOptions::default(),
        &dir.path().join("p2.csv"),
    )
    .unwrap();
    assert!(none.is_none());
    assert_eq!(
        std::fs::read(dir.path().join("p1.csv")).unwrap(),
        std::fs::read(dir.path().join("p2.csv")).unwrap()
    );
}

#[test]
fn missing_csv_fails_before_writing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("sqrt_norm", "sin", 1, false, 1);
    cfg.target.synthetic = None;
    cfg.target.csv = Some(dir.path().join("absent.csv"));
    cfg.output.dir = dir.path().join("out");
    assert!(matches!(
        experiment::cmd_benchmark(&cfg),
        Err(HarfeError::Io { .. })
    ));
    assert!(!cfg.output.dir.exists());
}

#[test]
fn diagnose_orthonormal_source() {
    let mut cfg = config("sqrt_norm", "sin", 1, false, 1);
    cfg.diagnostics = Some(
        toml::from_str(
            r#"
            source = "orthonormal"
            rows = 10
            cols = 6
            rip_levels = [1, 2, 3]
            "#,
        )
        .unwrap(),
    );
    let report = experiment::diagnose(&cfg).unwrap();
    assert_eq!(report.rip.len(), 3);
    assert!(report.rip.iter().all(|r| r.delta_s < 1e-12));
    assert!(report.coherence.unwrap() < 1e-12);
}

#[test]
fn diagnose_feature_source_reports_monotone_rip() {
    let mut cfg = config("sqrt_norm", "complex_exp", 1, false, 1);
    cfg.features.n_features = 12;
    cfg.solver.sparsity = 3;
    cfg.diagnostics = Some(
        toml::from_str(
            r#"
            source = "features"
            rip_levels = [1, 2, 3]
            kappa_levels = [1, 2, 3]
            "#,
        )
        .unwrap(),
    );
    let report = experiment::diagnose(&cfg).unwrap();
    let d: Vec<f64> = report.rip.iter().map(|r| r.delta_s).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]), "{d:?}");
    let k: Vec<f64> = report.kappa.iter().map(|e| e.value).collect();
    assert!(k.windows(2).all(|w| w[0] >= w[1]), "{k:?}");
    assert_eq!(k[2], 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fitted_models_have_valid_histograms_and_round_trip(
        seed in 0u64..1000,
        target in prop::sample::select(vec!["inv_sqrt_norm", "rational_prod", "friedman1", "friedman2"]),
        activation in prop::sample::select(vec!["sin", "complex_exp", "relu", "sigmoid"]),
        order in 1usize..4,
        normalize in any::<bool>(),
    ) {
        let cfg = config(target, activation, order, normalize, seed);
        let exp = Experiment::new(&cfg).unwrap();
        let data = exp.trial_data(0).unwrap();
        let fit = exp.fit_trial(&data).unwrap();
        for mode in [ImportanceMode::CountWeighted, ImportanceMode::MagnitudeWeighted] {
            let h = fit.model.variable_importance(mode).unwrap();
            prop_assert_eq!(h.scores.len(), data.train.dim());
            prop_assert!(h.scores.iter().all(|&v| v >= 0.0));
            prop_assert!((h.scores.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
        let loaded = HarfeModel::from_json(&fit.model.to_json().unwrap()).unwrap();
        let a = fit.model.predict(&data.test.x).unwrap();
        let b = loaded.predict(&data.test.x).unwrap();
        prop_assert!(a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}
