use std::path::Path;
use std::process::{Command, Output};

fn condlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condlab"))
        .current_dir(dir)
        .env("CONDLAB_CACHE", dir.join("cache"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = condlab(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn small_env(dir: &Path) {
    std::fs::write(
        dir.join("env.json"),
        ok(dir, &["env-dump", "--preset", "small", "--seed", "1"]),
    )
    .unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(condlab(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(condlab(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(condlab(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        condlab(d, &["validate", "--env", "missing.json"]).status.code(),
        Some(1)
    );
    std::fs::write(d.join("bad.json"), "{ not json").unwrap();
    assert_eq!(condlab(d, &["validate", "--env", "bad.json"]).status.code(), Some(1));
    small_env(d);
    assert_eq!(
        condlab(d, &["tune-k", "--env", "env.json", "--level", "3"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn strict_validation_of_desk_ladder_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("desk.json"), ok(d, &["env-dump", "--preset", "desk"])).unwrap();
    assert_eq!(condlab(d, &["validate", "--env", "desk.json"]).status.code(), Some(0));
    let strict = condlab(d, &["validate", "--env", "desk.json", "--profile", "strict"]);
    assert_eq!(strict.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&strict.stdout).unwrap();
    assert_eq!(report["result"]["pass"], false);
}

#[test]
fn infeasible_geometry_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("env.json"),
        r#"{"scales": [{"level": 1, "a": 40, "b": 4, "beta": 10}]}"#,
    )
    .unwrap();
    assert_eq!(condlab(d, &["env-dump", "--env", "env.json"]).status.code(), Some(2));
}

#[test]
fn tune_k_report_is_identical_with_and_without_cache() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_env(d);
    let first = condlab(d, &["tune-k", "--env", "env.json", "--level", "1"]);
    let second = condlab(d, &["tune-k", "--env", "env.json", "--level", "1"]);
    assert!(first.status.success() && second.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert!(String::from_utf8_lossy(&first.stderr).contains("computed"));
    assert!(String::from_utf8_lossy(&second.stderr).contains("cache hit"));
    let report: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert!((report["result"]["sigma_sq_at_k"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
}

#[test]
fn env_out_must_not_overwrite_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_env(d);
    let before = std::fs::read(d.join("env.json")).unwrap();
    let out = condlab(
        d,
        &["tune-k", "--env", "env.json", "--level", "1", "--env-out", "env.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read(d.join("env.json")).unwrap(), before);

    ok(
        d,
        &["tune-k", "--env", "env.json", "--level", "1", "--env-out", "tuned.json"],
    );
    let tuned: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("tuned.json")).unwrap()).unwrap();
    assert!(tuned["scales"][0]["k_tuned"].as_f64().unwrap() > 0.0);
}

#[test]
fn env_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_env(d);
    let again = ok(d, &["env-dump", "--env", "env.json"]);
    assert_eq!(again, std::fs::read(d.join("env.json")).unwrap());
}

#[test]
fn missing_offsets_are_sampled_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("ladder.json"),
        r#"{"scales": [{"level": 1, "a": 96, "b": 4, "beta": 24}], "seed": 1}"#,
    )
    .unwrap();
    small_env(d);
    assert_eq!(
        ok(d, &["env-dump", "--env", "ladder.json"]),
        std::fs::read(d.join("env.json")).unwrap()
    );
}

#[test]
fn csv_floats_parse_back_to_report_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_env(d);
    let report = ok(
        d,
        &[
            "resistance",
            "--env",
            "env.json",
            "--level",
            "1",
            "--K",
            "2.5",
            "--csv",
            "r.csv",
        ],
    );
    let report: serde_json::Value = serde_json::from_slice(&report).unwrap();
    let text = std::fs::read_to_string(d.join("r.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let column = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    let sigma: f64 = column("sigma_sq").parse().unwrap();
    assert_eq!(sigma, report["result"]["sigma_sq"].as_f64().unwrap());
    assert_eq!(
        column("iterations").parse::<u64>().unwrap(),
        report["result"]["iterations"].as_u64().unwrap()
    );
}

#[test]
fn dumped_paths_start_at_the_start_point() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "simulate",
            "--uniform",
            "--start",
            "3,-2",
            "--T",
            "5",
            "--paths",
            "3",
            "--dump-paths",
            "paths",
        ],
    );
    let text = std::fs::read_to_string(d.join("paths/path_000002.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,y"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0].parse::<f64>().unwrap(), 0.0);
    assert_eq!((first[1], first[2]), ("3", "-2"));
    let times: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]) && *times.last().unwrap() <= 5.0);
}

#[test]
fn rerun_reproduces_report_and_threads_do_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "clt-stats",
        "--uniform",
        "--eps",
        "0.25",
        "--envs",
        "4",
        "--paths",
        "60",
        "--seed",
        "9",
    ];
    let first = ok(d, &args);
    std::fs::write(d.join("report.json"), &first).unwrap();
    assert_eq!(ok(d, &["rerun", "--config", "report.json"]), first);
    let mut threaded = vec!["--threads", "2"];
    threaded.extend(args);
    assert_eq!(ok(d, &threaded), first);
    let other_seed = ok(
        d,
        &[
            "clt-stats",
            "--uniform",
            "--eps",
            "0.25",
            "--envs",
            "4",
            "--paths",
            "60",
            "--seed",
            "10",
        ],
    );
    assert_ne!(other_seed, first);
}

#[test]
fn reversal_check_reports_small_residual() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("chain.json"),
        r#"{"rates": [[0, 0.4], [0.4, 0]], "times": [0.5, 1.0], "factors": [[1, 0.2], [0.5, 1]]}"#,
    )
    .unwrap();
    let report: serde_json::Value =
        serde_json::from_slice(&ok(d, &["reversal-check", "--chain", "chain.json"])).unwrap();
    assert!(report["result"]["residual"].as_f64().unwrap() <= 1e-12);
    assert_eq!(report["result"]["self_adjoint"], true);
}
