use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn harfe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harfe"))
        .args(args)
        .output()
        .expect("spawn harfe")
}

fn ok(args: &[&str]) -> String {
    let out = harfe(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"
seed = 21
[target]
synthetic = "friedman1"
noise_std = 1.0
[features]
n_features = 500
order = 2
weights = { kind = "uniform", low = -1.0, high = 1.0 }
bias = { kind = "uniform", low = -1.0, high = 1.0 }
[solver]
sparsity = 40
lambda = 1e-3
[protocol]
m_train = 80
m_test = 40
trials = 3
"#;

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_all_commands() {
    let text = ok(&["--help"]);
    for cmd in [
        "fit",
        "predict",
        "benchmark",
        "importance",
        "diagnose",
        "gen-synthetic",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn benchmark_writes_one_row_per_trial_and_flags_override_config() {
    let (dir, cfg) = setup();
    let out = dir.path().join("b");
    ok(&["benchmark", "-c", s(&cfg), "--out", s(&out)]);
    let rows = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3);

    let out2 = dir.path().join("b2");
    ok(&[
        "benchmark",
        "-c",
        s(&cfg),
        "--out",
        s(&out2),
        "--trials",
        "2",
        "--lambda",
        "0.5",
    ]);
    let rows2 = std::fs::read_to_string(out2.join("results.csv")).unwrap();
    assert_eq!(rows2.lines().count(), 1 + 2);
    assert!(rows2.lines().nth(1).unwrap().contains(",0.5,"));
    let resolved = std::fs::read_to_string(out2.join("config.resolved.json")).unwrap();
    assert!(resolved.contains("\"trials\": 2"));

    // a different seed changes the data and therefore the table
    let out3 = dir.path().join("b3");
    ok(&[
        "benchmark",
        "-c",
        s(&cfg),
        "--out",
        s(&out3),
        "--seed",
        "22",
    ]);
    assert_ne!(
        rows,
        std::fs::read_to_string(out3.join("results.csv")).unwrap()
    );
}

#[test]
fn fit_importance_predict_chain() {
    let (dir, cfg) = setup();
    let out = dir.path().join("f");
    let text = ok(&["fit", "-c", s(&cfg), "--out", s(&out), "--normalize"]);
    assert!(text.contains("normalized units"));
    let model = out.join("model.json");
    let imp = ok(&["importance", "--model", s(&model), "--out", s(&out)]);
    assert!(imp.contains("count_weighted") && imp.contains("magnitude_weighted"));
    let hist = std::fs::read_to_string(out.join("importance_magnitude.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("dimension,score,mode"));
    assert_eq!(hist.lines().count(), 1 + 10);

    ok(&["gen-synthetic", "-c", s(&cfg), "--out", s(&out)]);
    let pred = out.join("pred.csv");
    let metrics = ok(&[
        "predict",
        "--model",
        s(&model),
        "--input",
        s(&out.join("test.csv")),
        "--out",
        s(&pred),
    ]);
    assert!(metrics.contains("mse="));
    assert_eq!(
        std::fs::read_to_string(&pred).unwrap().lines().count(),
        1 + 40
    );
}

#[test]
fn errors_exit_nonzero_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("never");
    std::fs::write(
        &cfg,
        format!(
            "[target]\ncsv = \"{}\"\n[features]\nn_features = 10\norder = 1\n[solver]\nsparsity = 2\n",
            s(&dir.path().join("missing.csv"))
        ),
    )
    .unwrap();
    let res = harfe(&["fit", "-c", s(&cfg), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("missing.csv"));
    assert!(!out.exists());

    std::fs::write(&cfg, "[target]\nsynthetic = \"nope\"\n").unwrap();
    assert!(!harfe(&["benchmark", "-c", s(&cfg)]).status.success());

    let res = harfe(&[
        "importance",
        "--model",
        s(&dir.path().join("none.json")),
        "--out",
        s(&out),
    ]);
    assert!(!res.status.success());
}

#[test]
fn diagnose_planted_reports_rate() {
    let (dir, cfg) = setup();
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text.push_str(
        "[diagnostics]\nsource = \"planted\"\nrows = 40\ncols = 10\nrip_levels = [1, 2]\n",
    );
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("d");
    let stdout = ok(&[
        "diagnose",
        "-c",
        s(&cfg),
        "--out",
        s(&out),
        "--lambda",
        "1e-12",
    ]);
    assert!(stdout.contains("delta_2="));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(doc["diagnostics"]["rip"].as_array().unwrap().len(), 2);
    assert!(doc["diagnostics"]["error_trace"].as_array().unwrap().len() > 1);
}
