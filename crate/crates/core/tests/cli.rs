use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robuststop"))
        .args(args)
        .env_remove("ROBUSTSTOP_LOG")
        .output()
        .unwrap()
}

fn run_in(out: &Path, cmd: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn solve_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "solve", &fixture("one_step.json"), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(dir.path());
    assert_eq!(r["root_value"], 0.5);
    assert_eq!(r["root_stops"], false);
    assert_eq!(r["tree"]["nodes"], 5);
    let slices = std::fs::read_to_string(dir.path().join("slices.csv")).unwrap();
    assert_eq!(slices.lines().count(), 3, "{slices}");
}

#[test]
fn oracle_agrees_on_fixtures() {
    for name in [
        "one_step.json",
        "put_n2.json",
        "put_n3.json",
        "constant.json",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_in(dir.path(), "oracle", &fixture(name), &[]);
        assert_eq!(out.status.code(), Some(0), "{name}");
        let r = report(dir.path());
        assert_eq!(r["agree"], true, "{name}: {r}");
        assert!(r["saddle"].is_object(), "{name}");
    }
}

#[test]
fn verify_passes_and_mutation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "verify", &fixture("put_n3.json"), &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    let r = report(dir.path());
    assert_eq!(r["passed"], true);
    assert!(r["checks"].as_array().unwrap().len() >= 14);

    let out = run_in(
        dir.path(),
        "verify",
        &fixture("put_n3.json"),
        &["--mutate", "--suite", "envelope-basic,dpp"],
    );
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r["mutated"], true);
    assert_eq!(r["passed"], false);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("put_n2.json");
    assert_eq!(
        run_in(dir.path(), "verify", &cfg, &["--suite", "bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run_in(dir.path(), "verify", &cfg, &["--suite", ","])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run_in(dir.path(), "solve", &fixture("missing.json"), &[])
            .status
            .code(),
        Some(2)
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dynamics": {}, "surprise": 1}"#).unwrap();
    let out = run_in(dir.path(), "solve", &bad, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("surprise"));

    assert_eq!(run(&["solve"]).status.code(), Some(2));
}

#[test]
fn oversized_game_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "oracle", &fixture("too_big.json"), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("size limit"));
}

#[test]
fn demo_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "demo", &fixture("demo.json"), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(dir.path());
    assert_eq!(r["widening_nonincreasing"], true);
    for csv in [
        "value_vs_strike.csv",
        "exercise_boundary.csv",
        "widening.csv",
    ] {
        let text = std::fs::read_to_string(dir.path().join(csv)).unwrap();
        assert!(text.lines().count() > 1, "{csv}");
    }
    // a put is convex, so the lower volatility bound prices it
    for row in r["strikes"].as_array().unwrap() {
        let robust = row["robust_value"].as_f64().unwrap();
        let lo = row["value_at_sigma_lo"].as_f64().unwrap();
        let hi = row["value_at_sigma_hi"].as_f64().unwrap();
        assert!(robust <= lo.min(hi) + 1e-12, "{row}");
    }
}

#[test]
fn thread_count_does_not_change_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = fixture("put_n3.json");
    let suite = [
        "--suite",
        "supermartingale,game-oracle,pasting",
        "--seed",
        "5",
    ];
    run_in(
        a.path(),
        "verify",
        &cfg,
        &[&suite[..], &["--threads", "1"]].concat(),
    );
    run_in(
        b.path(),
        "verify",
        &cfg,
        &[&suite[..], &["--threads", "4"]].concat(),
    );
    assert_eq!(
        std::fs::read(a.path().join("report.json")).unwrap(),
        std::fs::read(b.path().join("report.json")).unwrap()
    );
}
