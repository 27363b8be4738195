use std::path::Path;
use std::process::{Command, Output};

use qpon_core::ScenarioConfig;
use serde_json::Value;

fn qpon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpon"))
        .args(args)
        .output()
        .expect("spawn qpon")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// A scenario small enough to simulate in a couple of seconds.
fn small_scenario(dir: &Path, tweak: impl FnOnce(&mut ScenarioConfig)) -> String {
    let mut cfg = ScenarioConfig::preset("table1_4qnu").unwrap();
    cfg.frames.count = 8;
    cfg.frames.samples = 80_000;
    cfg.frames.estimation_group = 4;
    cfg.impairments.max_delay = 200;
    cfg.dsp.sync_max_lag = 200;
    cfg.dsp.sync_segment = 32_768;
    tweak(&mut cfg);
    let path = dir.join("small.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

fn without_runtime(json: &str) -> Value {
    let mut v: Value = serde_json::from_str(json).unwrap();
    v.as_object_mut().unwrap().remove("runtime");
    v
}

#[test]
fn analytic_csv_report() {
    let o = qpon(&["run", "--analytic", "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("point,qnu,T_db_hat"));
    assert_eq!(lines.count(), 4 * 4);
}

#[test]
fn reports_are_reproducible() {
    let a = qpon(&["run", "--analytic", "--seed", "9"]);
    let b = qpon(&["--seed", "9", "run", "--analytic"]);
    assert_eq!(code(&a), 0);
    assert_eq!(without_runtime(&stdout(&a)), without_runtime(&stdout(&b)));
    assert_eq!(without_runtime(&stdout(&a))["seed"], 9);
}

#[test]
fn stage_chain_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path(), |_| {});
    let work = dir.path().join("work");
    let work_s = work.to_str().unwrap();
    for stage in ["simulate", "dsp", "estimate"] {
        let o = qpon(&["--scenario", &scenario, "--out", work_s, stage]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let estimates = work.join("estimates.json");
    let staged = dir.path().join("staged.json");
    let o = qpon(&[
        "--scenario",
        &scenario,
        "--out",
        staged.to_str().unwrap(),
        "keyrate",
        "--input",
        estimates.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let direct = qpon(&["--scenario", &scenario, "run"]);
    assert_eq!(code(&direct), 0);
    let a = without_runtime(&std::fs::read_to_string(&staged).unwrap());
    let b = without_runtime(&stdout(&direct));
    assert_eq!(a["points"], b["points"]);
    assert_eq!(a["scenario_digest"], b["scenario_digest"]);

    // Estimates made for one scenario are refused under another seed.
    let o = qpon(&[
        "--scenario",
        &scenario,
        "--seed",
        "5",
        "keyrate",
        "--input",
        estimates.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn report_rerenders_and_checks_its_digest() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let p = path.to_str().unwrap();
    assert_eq!(code(&qpon(&["run", "--analytic", "--out", p])), 0);

    let csv = qpon(&["report", "--input", p, "--format", "csv"]);
    assert_eq!(code(&csv), 0);
    let direct = qpon(&["run", "--analytic", "--format", "csv"]);
    assert_eq!(stdout(&csv), stdout(&direct));

    let json = std::fs::read_to_string(&path).unwrap();
    let mut v: Value = serde_json::from_str(&json).unwrap();
    v["scenario"]["keyrate"]["beta"] = Value::from(0.5);
    std::fs::write(&path, v.to_string()).unwrap();
    assert_eq!(code(&qpon(&["report", "--input", p])), 2);
}

#[test]
fn sweep_range() {
    let o = qpon(&["sweep", "--axis", "xi", "--range", "0:0.2:5", "--analytic", "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("xi,V_A,qnu,"));
    assert_eq!(text.lines().count(), 1 + 5 * 4);

    let o = qpon(&["sweep", "--axis", "beta", "--values", "0.9,0.95", "--analytic"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(code(&qpon(&["--scenario", "no_such_preset", "run", "--analytic"])), 2);
    assert_eq!(code(&qpon(&["sweep", "--axis", "colour", "--values", "1", "--analytic"])), 2);
    assert_eq!(code(&qpon(&["sweep", "--axis", "xi", "--range", "0:1", "--analytic"])), 2);
    assert_eq!(code(&qpon(&["run", "--format", "xml"])), 2);
    assert_eq!(code(&qpon(&["run", "--analytic", "--frames", "3"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = 1\ncolour = \"blue\"\n").unwrap();
    let o = qpon(&["--scenario", bad.to_str().unwrap(), "run", "--analytic"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn stage_failure_exits_3_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path(), |c| {
        c.channels.iter_mut().for_each(|ch| ch.transmittance_db = -45.0)
    });
    let out = dir.path().join("partial.json");
    let o = qpon(&["--scenario", &scenario, "--out", out.to_str().unwrap(), "run"]);
    assert_eq!(code(&o), 3);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["failure"]["stage"], "dsp");
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpon(&["--out", dir.path().to_str().unwrap(), "dsp"]);
    assert_eq!(code(&o), 3);
}
