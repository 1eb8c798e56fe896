use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qcnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = qcnn(&args);
    assert!(out.status.success(), "{}", text(&out.stderr));
    PathBuf::from(text(&out.stdout).trim())
}

const SMALL_NET: [&str; 10] = [
    "--window", "32", "--hidden-layers", "3", "--filters", "4", "--epochs", "2", "--batch-size", "64",
];

#[test]
fn help_lists_subcommands_and_exit_codes() {
    let out = qcnn(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let help = text(&out.stdout);
    for word in ["simulate", "run", "train", "forecast", "backtest", "report", "Exit codes", "fit failure"] {
        assert!(help.contains(word), "help lacks {word}");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(qcnn(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(qcnn(&[]).status.code(), Some(1));
    assert_eq!(qcnn(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[data]\nmanifest = \"m.txt\"\nwhat = 1\n").unwrap();
    assert_eq!(qcnn(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn missing_config_is_a_data_error_naming_the_path() {
    let out = qcnn(&["run", "--config", "missing.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("missing.cfg"));
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--process", "iid_normal", "--n", "1000", "--seed", "7"];
    simulate(a.path(), &args);
    simulate(b.path(), &args);
    let file = "sim_000.csv";
    let fa = fs::read(a.path().join(file)).unwrap();
    assert_eq!(fa, fs::read(b.path().join(file)).unwrap());
    assert_eq!(text(&fa).lines().count(), 1002);
    assert_eq!(
        fs::read(a.path().join("manifest.txt")).unwrap(),
        fs::read(b.path().join("manifest.txt")).unwrap()
    );
}

#[test]
fn run_on_a_synthetic_panel() {
    let data = tempfile::tempdir().unwrap();
    let manifest = simulate(data.path(), &["--assets", "20", "--n", "600", "--seed", "3"]);
    let report = tempfile::tempdir().unwrap();
    let mut args = vec![
        "run",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        report.path().to_str().unwrap(),
        "--forecasts",
        "false",
    ];
    args.extend_from_slice(&SMALL_NET);
    let out = qcnn(&args);
    assert!(out.status.success(), "{}", text(&out.stderr));

    for theta in ["0.05", "0.01", "0.001"] {
        let summary = fs::read_to_string(report.path().join(format!("summary_theta_{theta}.csv"))).unwrap();
        let methods: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(methods, ["constant", "garch", "qr", "qcnn", "joint_qcnn"]);
        let per_asset = fs::read_to_string(report.path().join(format!("theta_{theta}/garch.csv"))).unwrap();
        assert_eq!(per_asset.lines().next().unwrap(), "asset_id,exceedance_rate,dq_stat,p_value,mean_var");
        assert_eq!(per_asset.lines().count(), 21);
    }
    assert!(report.path().join("run_manifest.json").is_file());
    assert!(report.path().join("theta_0.05/joint_qcnn.ckpt").is_file());

    // rebuilding summaries from the per-method files reproduces them
    let before = fs::read(report.path().join("summary_theta_0.05.txt")).unwrap();
    let out = qcnn(&["report", "--dir", report.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(fs::read(report.path().join("summary_theta_0.05.txt")).unwrap(), before);
    assert!(text(&out.stdout).contains("Joint QCNN"));
}

#[test]
fn train_forecast_backtest_pipeline() {
    let data = tempfile::tempdir().unwrap();
    simulate(data.path(), &["--n", "800", "--seed", "5"]);
    let prices = data.path().join("sim_000.csv");
    let prices = prices.to_str().unwrap();
    let ckpt = data.path().join("model.ckpt");
    let ckpt = ckpt.to_str().unwrap();

    let mut train = vec!["train", "--data", prices, "--theta", "0.05", "--out", ckpt];
    train.extend_from_slice(&SMALL_NET);
    let out = qcnn(&train);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["steps"], 2 * (560usize - 32).div_ceil(64));

    let fc = data.path().join("fc.csv");
    let out = qcnn(&["forecast", "--data", prices, "--checkpoint", ckpt, "--out", fc.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let rows = fs::read_to_string(&fc).unwrap();
    assert_eq!(rows.lines().next().unwrap(), "date,return,var");
    assert_eq!(rows.lines().count(), 1 + 800 - 560);

    let out = qcnn(&["backtest", "--data", prices, "--forecast", fc.to_str().unwrap(), "--theta", "0.05"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["n"], 240);
    assert_eq!(result["dof"], 4);

    let out = qcnn(&["forecast", "--data", prices, "--method", "garch", "--theta", "0.01"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).lines().count(), 241);

    let out = qcnn(&["forecast", "--data", prices, "--checkpoint", ckpt, "--theta", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_or_degenerate_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.csv");
    fs::write(&zero, "date,close\n2020-01-01,100\n2020-01-02,0\n").unwrap();
    let out = qcnn(&["forecast", "--data", zero.to_str().unwrap(), "--method", "constant"]);
    assert_eq!(out.status.code(), Some(2));

    // a flat training segment has no variance to model
    let mut csv = String::from("date,close\n");
    for i in 0..300 {
        let price = if i < 220 { 100.0 } else { 100.0 + (i % 3) as f64 };
        csv.push_str(&format!("2001-{:02}-{:02},{price}\n", 1 + i / 28, 1 + i % 28));
    }
    let flat = dir.path().join("flat.csv");
    fs::write(&flat, csv).unwrap();
    let out = qcnn(&["forecast", "--data", flat.to_str().unwrap(), "--method", "garch"]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
}
