use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_centralflow");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// The single run directory created under `parent`.
fn run_dir(parent: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(parent)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn equilibrium_run_stays_put() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--quiet",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dir = run_dir(out_dir.path());
    let summary = read_json(&dir.join("summary.json"));
    assert!(summary["max_displacement"].as_f64().unwrap() <= 1e-10);
    assert_eq!(summary["completed"], Value::Bool(true));
    let manifest = read_json(&dir.join("manifest.json"));
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(
        manifest["files"],
        serde_json::json!(["nodes.csv", "summary.json"])
    );
    let header = std::fs::read_to_string(dir.join("nodes.csv")).unwrap();
    assert!(header.starts_with("t,j,x,y,vx,vy\n"));
}

#[test]
fn non_positive_pressure_is_a_config_error() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--quiet",
        "--out",
        out_dir.path().to_str().unwrap(),
        "--set",
        "sim.rho=0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sim.rho"), "{}", stderr(&out));
    // the manifest is still written
    let manifest = read_json(&run_dir(out_dir.path()).join("manifest.json"));
    assert_eq!(manifest["exit_code"], 1);
    assert_eq!(manifest["status"], "config-error");
    assert!(manifest["error"].as_str().unwrap().contains("sim.rho"));
}

#[test]
fn unknown_keys_are_listed() {
    let out_dir = tempfile::tempdir().unwrap();
    let cfg = out_dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"sim": {"rhoo": 2.0, "initial": {"radius": 1.0, "colour": 3}}, "extra": 1}"#,
    )
    .unwrap();
    let runs = out_dir.path().join("runs");
    let out = run(&[
        "diagnose",
        "--quiet",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        runs.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    for key in ["sim.rhoo", "sim.initial.colour", "extra"] {
        assert!(err.contains(key), "{key} missing from {err}");
    }
    let manifest = read_json(&run_dir(&runs).join("manifest.json"));
    assert_eq!(manifest["config"], Value::Null);
}

#[test]
fn malformed_overrides_are_config_errors() {
    let out_dir = tempfile::tempdir().unwrap();
    let o = out_dir.path().to_str().unwrap();
    for bad in ["sim.rho", "sim.m=\"many\"", "sim..rho=1", "sim.rho.x=1"] {
        let out = run(&["simulate", "--quiet", "--out", o, "--set", bad]);
        assert_eq!(out.status.code(), Some(1), "{bad}: {}", stderr(&out));
    }
    let out = run(&["simulate", "--quiet", "--out", o, "--set", "sim.m=30"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn resolved_config_round_trips_through_the_manifest() {
    let out_dir = tempfile::tempdir().unwrap();
    let runs = out_dir.path().join("runs");
    let out = run(&[
        "diagnose",
        "--quiet",
        "--out",
        runs.to_str().unwrap(),
        "--set",
        "potential.kind=\"power\"",
        "--set",
        "sim.initial.shape=\"ellipse\"",
        "--set",
        "sim.initial.a=1.1",
        "--set",
        "sim.vol0=null",
        "--set",
        "sim.horizon=0.2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dir = run_dir(&runs);
    let manifest = read_json(&dir.join("manifest.json"));
    let echoed = out_dir.path().join("echo.json");
    std::fs::write(&echoed, serde_json::to_string(&manifest["config"]).unwrap()).unwrap();

    let again = out_dir.path().join("again");
    let out = run(&[
        "diagnose",
        "--quiet",
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let second = run_dir(&again);
    let mut first = manifest["config"].clone();
    let mut echo = read_json(&second.join("manifest.json"))["config"].clone();
    // only the parent directory was overridden
    assert_eq!(echo["output"]["dir"], again.to_str().unwrap());
    first["output"]["dir"] = Value::Null;
    echo["output"]["dir"] = Value::Null;
    assert_eq!(echo, first);
    for f in ["conservation.csv", "nodes.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(dir.join(f)).unwrap(),
            std::fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }
    let summary = read_json(&dir.join("summary.json"));
    assert!(
        summary["conservation"]["e_ham_relative_drift"]
            .as_f64()
            .unwrap()
            <= 1e-6
    );
}

#[test]
fn repeated_runs_get_fresh_directories() {
    let out_dir = tempfile::tempdir().unwrap();
    let o = out_dir.path().to_str().unwrap();
    for _ in 0..3 {
        let out = run(&[
            "simulate",
            "--quiet",
            "--out",
            o,
            "--set",
            "sim.horizon=0.01",
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read_dir(out_dir.path()).unwrap().count(), 3);
}

#[test]
fn reference_configs_match_the_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for sub in [
        "simulate",
        "diagnose",
        "linearize-check",
        "nash-moser",
        "stability",
        "lifespan",
        "convergence",
        "smoothing-check",
        "cross-solver",
        "conservation-suite",
    ] {
        let out = run(&[sub, "--print-config"]);
        assert_eq!(out.status.code(), Some(0));
        let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(
            printed,
            read_json(&root.join(format!("{sub}.json"))),
            "{sub}"
        );
    }
}

#[test]
fn nash_moser_default_converges() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "nash-moser",
        "--quiet",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let trace = read_json(&run_dir(out_dir.path()).join("trace.json"));
    assert_eq!(trace["termination"], "converged");
}

#[test]
fn nash_moser_outside_the_small_regime_stops_cleanly() {
    let out_dir = tempfile::tempdir().unwrap();
    let runs = out_dir.path().join("a");
    // unscaled equation, unit circle, long horizon
    let out = run(&[
        "nash-moser",
        "--quiet",
        "--out",
        runs.to_str().unwrap(),
        "--set",
        "sim.epsilon=1",
        "--set",
        "sim.initial.radius=1",
        "--set",
        "sim.horizon=4",
        "--set",
        r#"sim.initial.velocity_modes=[{"k":2,"cos":0.3,"sin":0}]"#,
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("ε too large"), "{}", stderr(&out));
    let dir = run_dir(&runs);
    assert_eq!(
        read_json(&dir.join("trace.json"))["termination"],
        "epsilon_too_large"
    );
    assert_eq!(
        read_json(&dir.join("manifest.json"))["status"],
        "numerical-failure"
    );

    // ε = 1 on the default data terminates one way or the other
    let runs = out_dir.path().join("b");
    let out = run(&[
        "nash-moser",
        "--quiet",
        "--out",
        runs.to_str().unwrap(),
        "--set",
        "sim.epsilon=1",
    ]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 2, "{}", stderr(&out));
}

#[test]
fn collapsing_run_is_a_numerical_failure() {
    // no inner pressure to speak of: the circle shrinks to a point
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--quiet",
        "--out",
        out_dir.path().to_str().unwrap(),
        "--set",
        "sim.rho=1e-3",
        "--set",
        "sim.horizon=10",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let dir = run_dir(out_dir.path());
    let summary = read_json(&dir.join("summary.json"));
    assert_eq!(summary["completed"], Value::Bool(false));
    assert_eq!(read_json(&dir.join("manifest.json"))["exit_code"], 2);
}

#[test]
fn linearize_check_passes() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "linearize-check",
        "--quiet",
        "--out",
        out_dir.path().to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dir = run_dir(out_dir.path());
    let slope = read_json(&dir.join("summary.json"))["slope"]
        .as_f64()
        .unwrap();
    assert!((slope - 2.0).abs() <= 0.2);
    assert_eq!(
        read_json(&dir.join("manifest.json"))["config"]["experiment"]["seed"],
        7
    );
}

#[test]
fn failed_experiment_checks_exit_with_three() {
    let out_dir = tempfile::tempdir().unwrap();
    // an impossible band on the observed order
    let out = run(&[
        "convergence",
        "--quiet",
        "--out",
        out_dir.path().to_str().unwrap(),
        "--set",
        "experiment.tolerances.order_band=1e-9",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let dir = run_dir(out_dir.path());
    assert!(dir.join("convergence_summary.json").exists());
    assert_eq!(
        read_json(&dir.join("manifest.json"))["status"],
        "assertion-failure"
    );
}

#[test]
fn experiments_pass_with_defaults() {
    for sub in ["stability", "smoothing-check", "cross-solver"] {
        let out_dir = tempfile::tempdir().unwrap();
        let out = run(&[sub, "--quiet", "--out", out_dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{sub}: {}", stderr(&out));
    }
}
