use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stable-cir"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PARAMS: &str = r#"{"a":1,"b":1,"sigma":1,"delta":1,"alpha":1.5,"y0":1}"#;

fn sim_config(params: &str, seed: u64) -> String {
    format!(r#"{{"version":1,"params":{params},"T":2,"n_steps":400,"seed":{seed}}}"#)
}

#[test]
fn simulate_without_immigration_from_zero_stays_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", &sim_config(r#"{"a":0,"b":1,"sigma":1,"delta":1,"alpha":1.5,"y0":0}"#, 1));
    let o = run(&["simulate", "--config", &cfg, "--out", "p.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,y,dW,dL,is_jump");
    let ys: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ys.len(), 401);
    assert!(ys.iter().all(|y| *y == 0.0));
    assert!(dir.path().join("p.csv.json").exists());
}

#[test]
fn simulate_is_byte_deterministic_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", &sim_config(PARAMS, 5));
    for out in ["a.csv", "b.csv"] {
        assert_eq!(run(&["simulate", "--config", &cfg, "--out", out], dir.path()).status.code(), Some(0));
    }
    assert_eq!(run(&["simulate", "--config", &cfg, "--seed", "6", "--out", "c.csv"], dir.path()).status.code(), Some(0));
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.csv.json"), read("b.csv.json"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn simulate_json_format_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", &sim_config(PARAMS, 2));
    let o = run(&["simulate", "--config", &cfg, "--format", "json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["y"].as_array().unwrap().len(), 401);
    assert_eq!(v["meta"]["n_steps"], 400);
}

#[test]
fn invalid_configs_fail_with_one_line_and_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.json", format!(r#"{{"version":1,"params":{PARAMS},"T":2,"n_steps":400,"seed":1,"extra":0}}"#)),
        ("version.json", format!(r#"{{"version":3,"params":{PARAMS},"T":2,"n_steps":400,"seed":1}}"#)),
        ("noversion.json", format!(r#"{{"params":{PARAMS},"T":2,"n_steps":400,"seed":1}}"#)),
        ("alpha.json", sim_config(r#"{"a":1,"b":1,"sigma":1,"delta":1,"alpha":2.5,"y0":1}"#, 1)),
        ("steps.json", format!(r#"{{"version":1,"params":{PARAMS},"T":2,"n_steps":0,"seed":1}}"#)),
        ("noseed.json", format!(r#"{{"version":1,"params":{PARAMS},"T":2,"n_steps":4}}"#)),
        ("broken.json", "{\"version\":1,".to_owned()),
    ];
    for (name, body) in cases {
        let cfg = write(dir.path(), name, &body);
        let o = run(&["simulate", "--config", &cfg, "--out", "out.csv"], dir.path());
        assert_eq!(o.status.code(), Some(1), "{name}: {}", stderr(&o));
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{name}: {err}");
        assert!(err.starts_with("error: "), "{name}: {err}");
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.starts_with("out"))
            .collect();
        assert!(leftovers.is_empty(), "{name}: {leftovers:?}");
    }
}

#[test]
fn flag_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", &sim_config(PARAMS, 1));
    for args in [
        vec!["simulate", "--out", "x.csv"],
        vec!["simulate", "--config", cfg.as_str(), "--out", "x.csv", "--workers", "2"],
        vec!["simulate", "--config", cfg.as_str(), "--format", "xml"],
        vec!["frobnicate"],
        vec![],
    ] {
        let o = run(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert_eq!(stderr(&o).lines().count(), 1, "{args:?}: {}", stderr(&o));
    }
    assert!(!dir.path().join("x.csv").exists());
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

fn laplace(dir: &Path, query: &str) -> Value {
    let cfg = write(dir, "q.json", &format!(r#"{{"version":1,"params":{PARAMS},"query":{query}}}"#));
    let o = run(&["laplace", "--config", &cfg], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn laplace_queries() {
    let dir = tempfile::tempdir().unwrap();
    let v = laplace(dir.path(), r#"{"kind":"stationary","lambda":0}"#);
    assert_eq!(v["value"], 1.0);
    assert_eq!(v["query"]["kind"], "stationary");
    let y = laplace(dir.path(), r#"{"kind":"Y","lambda":0.5,"t":1.5}"#)["value"].as_f64().unwrap();
    let j = laplace(dir.path(), r#"{"kind":"joint","u":-0.5,"v":0,"t":1.5}"#)["value"].as_f64().unwrap();
    assert!((y - j).abs() <= 1e-12 * y);
    assert!(y > 0.0 && y < 1.0);

    let cfg = write(dir.path(), "v.json", &format!(r#"{{"version":1,"params":{PARAMS},"query":{{"kind":"V","u":-1}}}}"#));
    let o = run(&["laplace", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let cfg = write(dir.path(), "k.json", &format!(r#"{{"version":1,"params":{PARAMS},"query":{{"kind":"K","lambda":1}}}}"#));
    assert_eq!(run(&["laplace", "--config", &cfg], dir.path()).status.code(), Some(1));
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", &format!(r#"{{"version":1,"params":{PARAMS},"T":20,"n_steps":20000,"seed":4}}"#));
    assert_eq!(run(&["simulate", "--config", &cfg, "--out", "p.csv"], dir.path()).status.code(), Some(0));
    for method in ["full_information", "path_only"] {
        let est = write(
            dir.path(),
            "est.json",
            &format!(r#"{{"version":1,"path":"p.csv","method":"{method}","true_b":1}}"#),
        );
        let o = run(&["estimate", "--config", &est, "--out", "report.json"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        let b_hat = v["b_hat"].as_f64().unwrap();
        assert!((b_hat - 1.0).abs() < 0.6, "{method}: {b_hat}");
        assert_eq!(v["method"], method);
        assert!(v["scaled_error_random"].is_f64());
    }
    let est = write(dir.path(), "missing.json", r#"{"version":1,"path":"nope.csv"}"#);
    assert_eq!(run(&["estimate", "--config", &est], dir.path()).status.code(), Some(1));
}

fn experiment_config(dir: &Path) -> String {
    write(
        dir,
        "exp.json",
        &format!(
            r#"{{"version":1,"params":{PARAMS},"T_grid":[1,2],"dt":0.01,"n_reps":24,"base_seed":9,
                "diagnostics":{{"ks_normal":true,"moment_table":true,"consistency_curve":true}}}}"#
        ),
    )
}

#[test]
fn experiment_output_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment_config(dir.path());
    for (w, out) in [("1", "one.csv"), ("3", "three.csv")] {
        let o = run(&["experiment", "--config", &cfg, "--workers", w, "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("one.csv"), read("three.csv"));
    assert_eq!(read("one.csv.json"), read("three.csv.json"));
    let csv = String::from_utf8(read("one.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 48);
    let summary: Value = serde_json::from_slice(&read("one.csv.json")).unwrap();
    assert_eq!(summary["summaries"].as_array().unwrap().len(), 2);
    assert!(summary["summaries"][0]["ks_random_scaled"]["p_value"].is_f64());
    assert_eq!(summary["consistency"].as_array().unwrap().len(), 2);
}

#[test]
fn experiment_json_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment_config(dir.path());
    let o = run(&["experiment", "--config", &cfg, "--format", "json", "--seed", "77", "--out", "all.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("all.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["base_seed"], 77);
    assert_eq!(v["rows"].as_array().unwrap().len(), 48);

    let bad = write(
        dir.path(),
        "bad.json",
        &format!(r#"{{"version":1,"params":{PARAMS},"T_grid":[2,1],"dt":0.01,"n_reps":4,"base_seed":1}}"#),
    );
    let o = run(&["experiment", "--config", &bad, "--out", "bad.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("bad.csv").exists());
    assert!(!dir.path().join("bad.csv.json").exists());
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle-check"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert!(rows.len() >= 100);
    assert!(rows.iter().all(|r| r.ends_with("pass")));

    let o = run(&["oracle-check", "--format", "json"], dir.path());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().all(|r| r["pass"] == true));
}
