use std::fs;
use std::process::{Command, Output};

fn signrr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_signrr")).args(args).output().unwrap()
}

fn small_run(out: &str) -> Vec<String> {
    [
        "run",
        "--preset",
        "rosenbrock_central",
        "--scale",
        "0.05",
        "--seeds",
        "1,2",
        "--out",
        out,
        "--set",
        "algorithms=signrr,signrvm",
        "--set",
        "u_max=10",
        "--set",
        "gamma0=[0.01,0.001]",
        "--set",
        "betas=0.5",
    ]
    .map(String::from)
    .to_vec()
}

#[test]
fn run_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let args = small_run(out.to_str().unwrap());
    let o = signrr(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("signrvm"));
    assert!(stdout.contains("vr_bound"));
    // 2 + 2 cells per seed
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 8);
    assert!(out.join("signrr_u10_lr1e-2_s1.csv").exists());
    assert!(out.join("signrvm_u10_lr1e-3_b0.5_d1e-1_s2.csv").exists());
    let best = fs::read_to_string(out.join("best.csv")).unwrap();
    assert!(best.starts_with("method,u_max,workers,gamma0,beta,d0,mean_metric,seed,metric"));
}

#[test]
fn config_file_layers_over_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"algorithms": ["signsgd"], "gamma0": 0.01, "epochs": 2, "seeds": [4]}"#).unwrap();
    let out = dir.path().join("r");
    let o = signrr(&[
        "run",
        "--preset",
        "rosenbrock_central",
        "--scale",
        "0.05",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    // three U values from the preset
    assert_eq!(cells.lines().count(), 1 + 3);
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let o = signrr(&["run", "--preset", "rosenbrock_central", "--set", "epochz=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epochz"));

    let o = signrr(&["run", "--preset", "rosenbrock_central", "--set", "betas=1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("betas"));

    let o = signrr(&["run", "--preset", "nope"]);
    assert_eq!(o.status.code(), Some(2));

    let o = signrr(&["run", "--config", "/nonexistent/c.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_reads_traces_and_flags_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = signrr(&[
        "run",
        "--preset",
        "rosenbrock_central",
        "--scale",
        "0.05",
        "--seeds",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "algorithms=signrvm",
        "--set",
        "u_max=10",
        "--set",
        "gamma0=0.01",
        "--set",
        "betas=0.5",
        "--set",
        "csv_diagnostics=true",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = out.join("signrvm_u10_lr1e-2_b0.5_d1e-1_s1.csv");
    let t = trace.to_str().unwrap();

    let o = signrr(&["check", "--trace", t, "--beta", "0.5", "--lhat", "1e6,1e6,1e6,1e6,1e6"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for lemma in ["freeze", "anchor_cancellation", "vr_bound", "descent", "momentum_replay"] {
        assert!(stdout.contains(lemma), "{stdout}");
    }

    // Replaying with the wrong momentum constant must fail.
    let o = signrr(&["check", "--trace", t, "--beta", "0.9"]);
    assert_eq!(o.status.code(), Some(3));

    // A trace without diagnostic columns cannot be checked.
    let plain = out.join("plain.csv");
    let text = fs::read_to_string(&trace).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| l.split(',').take(8).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(&plain, stripped).unwrap();
    let o = signrr(&["check", "--trace", plain.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn presets_list_and_show() {
    let o = signrr(&["presets"]);
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8_lossy(&o.stdout);
    for p in ["rosenbrock_central", "rosenbrock_dist", "logistic_central", "logistic_dist"] {
        assert!(s.contains(p));
    }
    let o = signrr(&["presets", "--show", "rosenbrock_dist", "--scale", "0.2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n0"], 200);
    assert_eq!(v["epochs"], 30);
}
