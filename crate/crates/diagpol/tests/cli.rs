//! End-to-end runs of the `diagpol` binary: every subcommand, plus the
//! error paths a shell user will actually hit.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CSV: &str = "\
power_light,fan,temperature,beep_code,fault
off,stopped,31.5,none,supply
off,stopped,29.0,none,supply
off,spinning,30.1,none,supply
off,stopped,35.8,long,supply
off,stopped,28.4,none,supply
off,stopped,32.0,none,supply
on,stopped,78.2,none,cooling
on,stopped,83.5,none,cooling
on,stopped,76.9,none,cooling
on,stopped,81.0,long,cooling
on,spinning,79.4,none,cooling
on,stopped,85.1,none,cooling
on,spinning,44.2,long,board
on,spinning,41.8,long,board
on,spinning,46.5,long,board
on,spinning,43.0,long,board
on,spinning,40.9,none,board
on,stopped,42.7,long,board
";

const COSTS: &str = r#"
default_test_cost = 1.0

[test_costs]
temperature = 4.0

[[levels]]
name = "low"
matrix = [[0.0, 10.0, 10.0], [10.0, 0.0, 10.0], [10.0, 10.0, 0.0]]

[[levels]]
name = "high"
matrix = [[0.0, 120.0, 120.0], [120.0, 0.0, 120.0], [120.0, 120.0, 0.0]]
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diagpol"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes the fixture CSV and cost file, runs `prepare`, and returns the
/// workspace directory.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("input.csv"), CSV).unwrap();
    fs::write(dir.path().join("costs.toml"), COSTS).unwrap();
    let out = run(
        dir.path(),
        &[
            "prepare",
            "--data",
            "input.csv",
            "--class-column",
            "fault",
            "--replicas",
            "2",
            "--seed",
            "5",
            "--out",
            "prep",
        ],
    );
    assert!(out.status.success(), "prepare failed: {}", stderr(&out));
    dir
}

#[test]
fn prepare_writes_dataset_and_replicas() {
    let dir = prepared();
    assert!(dir.path().join("prep/dataset.json").exists());
    assert!(dir.path().join("prep/replicas.json").exists());
    let out = run(
        dir.path(),
        &[
            "prepare", "--data", "input.csv", "--class-column", "fault", "--out", "again",
        ],
    );
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("kept 18 of 18 records"), "stdout: {text}");
    assert!(text.contains("3 classes"), "stdout: {text}");
}

#[test]
fn learn_eval_compare_and_export_work_end_to_end() {
    let dir = prepared();
    let base = [
        "--data",
        "prep/dataset.json",
        "--costs",
        "costs.toml",
        "--cost-level",
        "high",
    ];

    let mut args = vec!["learn"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--algo", "MC-N-L", "--seed", "3", "--out", "mcn.json"]);
    let out = run(dir.path(), &args);
    assert!(out.status.success(), "learn failed: {}", stderr(&out));
    assert!(stdout(&out).contains("V_test"), "stdout: {}", stdout(&out));

    let mut args = vec!["learn"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--algo", "SP", "--seed", "3", "--out", "sp.json", "--trace"]);
    let out = run(dir.path(), &args);
    assert!(out.status.success(), "learn failed: {}", stderr(&out));
    assert!(stdout(&out).contains("expansions"), "stdout: {}", stdout(&out));

    let mut args = vec!["eval", "--policy", "mcn.json"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--seed", "3"]);
    let out = run(dir.path(), &args);
    assert!(out.status.success(), "eval failed: {}", stderr(&out));
    assert!(stdout(&out).contains("V_test ="), "stdout: {}", stdout(&out));

    let mut args = vec!["compare", "mcn.json", "sp.json"];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--seed", "3"]);
    let out = run(dir.path(), &args);
    assert!(out.status.success(), "compare failed: {}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("Win") || text.contains("Tie") || text.contains("Loss"),
        "stdout: {text}"
    );
    assert!(text.contains("95% CI"), "stdout: {text}");

    let out = run(
        dir.path(),
        &[
            "export-dot",
            "--policy",
            "mcn.json",
            "--data",
            "prep/dataset.json",
            "--costs",
            "costs.toml",
            "--cost-level",
            "high",
            "--out",
            "mcn.dot",
        ],
    );
    assert!(out.status.success(), "export failed: {}", stderr(&out));
    let dot = fs::read_to_string(dir.path().join("mcn.dot")).unwrap();
    assert!(dot.starts_with("digraph"), "dot: {dot}");
}

#[test]
fn an_unknown_algorithm_is_a_usage_error_naming_the_choices() {
    let dir = prepared();
    let out = run(
        dir.path(),
        &[
            "learn",
            "--data",
            "prep/dataset.json",
            "--costs",
            "costs.toml",
            "--cost-level",
            "low",
            "--algo",
            "XYZ",
            "--out",
            "p.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    let text = stderr(&out);
    for name in ["AO*", "SP", "ES", "PPP", "Nor", "MC-N", "VOI"] {
        assert!(text.contains(name), "missing {name} in: {text}");
    }
}

#[test]
fn runtime_failures_exit_nonzero_with_a_diagnostic() {
    let dir = prepared();
    let out = run(
        dir.path(),
        &[
            "learn",
            "--data",
            "missing.json",
            "--costs",
            "costs.toml",
            "--cost-level",
            "low",
            "--algo",
            "Nor",
            "--out",
            "p.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"), "stderr: {}", stderr(&out));

    let out = run(
        dir.path(),
        &[
            "learn",
            "--data",
            "prep/dataset.json",
            "--costs",
            "costs.toml",
            "--cost-level",
            "bogus",
            "--algo",
            "Nor",
            "--out",
            "p.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let text = stderr(&out);
    assert!(text.contains("bogus"), "stderr: {text}");
    assert!(text.contains("low"), "stderr should list valid levels: {text}");
}

#[test]
fn tournament_reruns_are_byte_identical() {
    let dir = prepared();
    let common = [
        "tournament",
        "--data",
        "prep/dataset.json",
        "--costs",
        "costs.toml",
        "--algo",
        "Nor",
        "--algo",
        "MC-N",
        "--algo",
        "VOI",
        "--replica-file",
        "prep/replicas.json",
        "--seed",
        "9",
        "--jobs",
        "2",
    ];

    let mut args = common.to_vec();
    args.extend_from_slice(&["--out", "t1"]);
    let out = run(dir.path(), &args);
    assert!(out.status.success(), "tournament failed: {}", stderr(&out));
    assert!(stdout(&out).contains("totals:"), "stdout: {}", stdout(&out));

    let mut args = common.to_vec();
    args.extend_from_slice(&["--out", "t2"]);
    let out = run(dir.path(), &args);
    assert!(out.status.success(), "rerun failed: {}", stderr(&out));

    let r1 = fs::read(dir.path().join("t1/report.json")).unwrap();
    let r2 = fs::read(dir.path().join("t2/report.json")).unwrap();
    assert_eq!(r1, r2, "reruns with the same flags must match");
    let m1 = fs::read(dir.path().join("t1/manifest.json")).unwrap();
    let m2 = fs::read(dir.path().join("t2/manifest.json")).unwrap();
    assert_eq!(m1, m2);

    let mut args = common.to_vec();
    args.extend_from_slice(&["--from-manifest", "t1/manifest.json", "--out", "t3"]);
    let out = run(dir.path(), &args);
    assert!(out.status.success(), "manifest rerun failed: {}", stderr(&out));
    let r3 = fs::read(dir.path().join("t3/report.json")).unwrap();
    assert_eq!(r1, r3, "a manifest rerun must reproduce the report exactly");
}
