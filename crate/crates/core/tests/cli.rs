use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn equidist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equidist"))
        .args(args)
        .env_remove("EQUIDIST_THREADS")
        .output()
        .expect("spawn equidist")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, experiments: Value) -> String {
    let cfg = json!({"map": "z2", "seed": 7, "output_dir": dir.join("out"), "experiments": experiments});
    let path = dir.join("suite.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn fiber_report_on_stdout() {
    let o = equidist(&["fiber", "--point", "[[4,0],[1,0]]", "--n", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["status"], "ok");
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    assert!(report["config_hash"].as_str().unwrap().len() == 64);
    assert_eq!(report["result"]["total_multiplicity"], "8");
    assert!(report["result"]["residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn experiment_error_exits_one_and_is_reported() {
    let o = equidist(&["mu-sample", "--samples", "10"]);
    assert_eq!(code(&o), 1);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["status"], "error");
}

#[test]
fn malformed_input_exits_two() {
    assert_eq!(code(&equidist(&["fiber", "--point", "[[0,0],[0,0]]"])), 2);
    assert_eq!(
        code(&equidist(&["fiber", "--map", "{\"dim\":1", "--point", "[[1,0],[1,0]]"])),
        2
    );
    assert_eq!(
        code(&equidist(&["fiber", "--map", "nope", "--point", "[[1,0],[1,0]]"])),
        2
    );
    assert_eq!(code(&equidist(&["suite", "/nonexistent/suite.json"])), 2);
}

#[test]
fn inline_map_matches_preset_output() {
    let inline = r#"{"dim":1,"degree":2,"components":[[[1,0],[0,0],[0,0]],[[0,0],[0,0],[1,0]]]}"#;
    let a = equidist(&["fiber", "--map", inline, "--point", "[[2,0],[1,0]]", "--n", "2"]);
    let b = equidist(&["fiber", "--map", "z2", "--point", "[[2,0],[1,0]]", "--n", "2"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0);
    let ra: Value = serde_json::from_slice(&a.stdout).unwrap();
    let rb: Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(ra["result"]["points"], rb["result"]["points"]);
}

#[test]
fn regularize_prints_csv_without_output_path() {
    let o = equidist(&[
        "regularize",
        "--theta",
        "0.1",
        "--samples",
        "100",
        "--probe-points",
        "50",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains(','));
    assert!(lines.count() >= 50);
}

#[test]
fn empty_suite_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!([]));
    let o = equidist(&["suite", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out").join("summary.csv").exists());
}

#[test]
fn suite_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        json!([{"kind": "fiber", "id": "a", "point": [[1, 0], [1, 0]]}, {"kind": "fiber", "id": "a", "point": [[1, 0], [1, 0]]}]),
        json!([{"kind": "fiber", "id": "a", "point": [[1, 0], [1, 0]], "bogus": 1}]),
        json!([{"kind": "nonsense", "id": "a"}]),
        json!([{"kind": "fiber", "id": "a", "map": {"dim": 1, "degree": 1, "components": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}, "point": [[1, 0], [1, 0]]}]),
    ] {
        let cfg = write_config(dir.path(), bad.clone());
        let o = equidist(&["suite", &cfg]);
        assert_eq!(code(&o), 2, "accepted {bad}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn suite_with_failing_experiment_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        json!([
            {"kind": "fiber", "id": "ok", "point": [[2, 0], [1, 0]], "n": 2},
            {"kind": "mu", "id": "start-on-e", "start": [[0, 0], [1, 0]], "samples": 1000}
        ]),
    );
    let o = equidist(&["suite", &cfg]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    let out = dir.path().join("out");
    assert!(out.join("ok.json").exists());
    let failed: Value = serde_json::from_str(&fs::read_to_string(out.join("start-on-e.json")).unwrap()).unwrap();
    assert_eq!(failed["status"], "error");
}

#[test]
fn suite_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let experiments = json!([
        {"kind": "fiber", "id": "fib", "map": "basilica", "point": [[0.3, 0.2], [1, 0]], "n": 6},
        {"kind": "mu", "id": "mu", "map": "cheb", "samples": 2000, "burn_in": 20},
        {"kind": "exceptional", "id": "detect", "mode": "detect"}
    ]);
    let cfg = write_config(dir.path(), experiments);
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_equidist"))
            .args(["suite", &cfg, "--output-dir", out.to_str().unwrap()])
            .env("EQUIDIST_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("1", "a");
    let b = run("3", "b");
    for name in ["fib.json", "mu.json", "detect.json", "summary.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
}
