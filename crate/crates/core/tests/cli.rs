//! End-to-end runs of the `sepeval` binary: golden outputs and exit codes.
//!
//! Regenerate the golden files with `UPDATE_GOLDEN=1 cargo test --test cli`.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn here() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    here().join("tests/fixtures").join(name)
}

fn sepeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepeval"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn inputs() -> Vec<String> {
    vec![
        "--gt".into(),
        fixture("gt.jsonl").display().to_string(),
        "--pred".into(),
        fixture("pred.jsonl").display().to_string(),
    ]
}

fn run_with_inputs(cmd: &str, extra: &[&str]) -> Output {
    let inputs = inputs();
    let mut args: Vec<&str> = vec![cmd];
    args.extend(inputs.iter().map(String::as_str));
    args.extend_from_slice(extra);
    sepeval(&args)
}

fn check_golden(name: &str, actual: &str) {
    let path = here().join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn eval_matches_golden_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = run_with_inputs(
        "eval",
        &[
            "--t-bg",
            "0.39",
            "--t-fg",
            "0.42",
            "--label",
            "fixture",
            "--report",
            report.to_str().unwrap(),
        ],
    );
    check_golden("eval_table.txt", &stdout(&out));
    check_golden(
        "eval_report.json",
        &std::fs::read_to_string(report).unwrap(),
    );
}

#[test]
fn eval_with_iop_changes_only_ood_matching() {
    let out = run_with_inputs(
        "eval",
        &["--t-bg", "0.39", "--t-fg", "0.42", "--iop-for-ood"],
    );
    check_golden("eval_iop_table.txt", &stdout(&out));
}

#[test]
fn sweep_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.csv");
    let out = run_with_inputs(
        "sweep",
        &["--step", "0.05", "--grid", grid.to_str().unwrap()],
    );
    check_golden("sweep.txt", &stdout(&out));
    let csv = std::fs::read_to_string(grid).unwrap();
    // 21 values, pairs with t_bg <= t_fg, plus the header
    assert_eq!(csv.lines().count(), 21 * 22 / 2 + 1);
}

#[test]
fn hist_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("hist.csv");
    let out = run_with_inputs("hist", &["--out", csv.to_str().unwrap()]);
    stdout(&out);
    check_golden("hist.csv", &std::fs::read_to_string(csv).unwrap());
}

#[test]
fn eval_writes_histogram_alongside() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("h.csv");
    let report = dir.path().join("r.json");
    let out = run_with_inputs(
        "eval",
        &[
            "--t-bg",
            "0.39",
            "--t-fg",
            "0.42",
            "--hist",
            csv.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ],
    );
    stdout(&out);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["histogram"], csv.to_str().unwrap());
    assert_eq!(
        std::fs::read_to_string(csv).unwrap(),
        std::fs::read_to_string(here().join("tests/golden/hist.csv")).unwrap()
    );
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"n_classes\": 2}\n{\"image\": \"a\", \"box\": [0, 0, 1, 1], \"scores\": [0.5]}\n",
    )
    .unwrap();

    let o = sepeval(&[
        "eval",
        "--gt",
        fixture("gt.jsonl").to_str().unwrap(),
        "--pred",
        bad.to_str().unwrap(),
        "--t-bg",
        "0.3",
        "--t-fg",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");

    // thresholds out of order
    let o = run_with_inputs("eval", &["--t-bg", "0.6", "--t-fg", "0.5"]);
    assert_eq!(o.status.code(), Some(1));

    // missing file
    let o = sepeval(&[
        "hist",
        "--gt",
        "/nonexistent/gt",
        "--pred",
        "/nonexistent/p",
        "--out",
        "x.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));

    // unknown flag and missing required argument
    assert_eq!(sepeval(&["eval", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        run_with_inputs("eval", &["--t-bg", "0.3"]).status.code(),
        Some(1)
    );

    // sweep step outside (0, 0.5]
    assert_eq!(
        run_with_inputs("sweep", &["--step", "0.7"]).status.code(),
        Some(1)
    );

    // unknown key in the toy config
    let cfg = dir.path().join("toy.toml");
    std::fs::write(&cfg, "epochs = 3\nlearning_rate = 0.1\n").unwrap();
    assert_eq!(
        sepeval(&["toy", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn gradcheck_passes() {
    let o = sepeval(&["gradcheck", "--trials", "100", "--seed", "3"]);
    let text = stdout(&o);
    assert!(text.contains("trials 100"), "{text}");
}

#[test]
fn toy_runs_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("toy.toml");
    std::fs::write(
        &cfg,
        "seed = 4\nepochs = 5\nsweep_step = 0.05\n\n[data]\npoints_per_class = 40\nbg_points = 60\nood_points_per_cluster = 4\n",
    )
    .unwrap();
    let o = sepeval(&[
        "toy",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "2",
        "--compare",
    ]);
    let text = stdout(&o);
    assert!(text.contains("median S ratio"), "{text}");

    // a learning rate this large blows the weights up: internal failure, exit 2
    std::fs::write(&cfg, format!("epochs = 3\nlr = {:e}\n", f64::MAX)).unwrap();
    let o = sepeval(&["toy", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
