use std::fs;
use std::process::{Command, Output};

fn respricing(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_respricing"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON object")
}

#[test]
fn run_writes_trajectories_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = respricing(&[
        "run", "--seeds", "2", "--horizon", "20", "--sweep", "beta=0,2", "--out", out, "--format", "both",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["runs"], 4);
    for v in ["0", "2"] {
        for k in 0..2 {
            let base = dir.path().join(format!("trajectories/T20/beta_{v}/seed_{k}"));
            assert!(base.with_extension("csv").exists());
            assert!(base.with_extension("json").exists());
        }
    }
    let summary = fs::read_to_string(dir.path().join("summary_T20.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);

    let res = respricing(&["summarize", out]);
    assert!(res.status.success());
    let table = String::from_utf8(res.stdout).unwrap();
    assert!(table.starts_with("sweep_param,value,horizon,n_seeds,mean,std,slope\n"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn config_file_and_seed_flag_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "game": {"quad_bench": {"n_players": 3, "dim": 2, "build_seed": 9, "capacity": 6.6}},
        "horizons": [30, 60],
        "seed": 1,
        "n_seeds": 1,
        "sigma": 0.0,
        "gamma": {"schedule": {"kind": "constant", "value": 0.02}},
        "zeta": "gamma",
        "eta": {"schedule": {"kind": "constant", "value": 0.125}},
        "beta": 2.0
    }"#;
    let path = dir.path().join("cfg.json");
    fs::write(&path, cfg).unwrap();
    let run = |out: &str, seed: &str| {
        respricing(&["run", "--config", path.to_str().unwrap(), "--out", out, "--seed", seed])
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(a.to_str().unwrap(), "5").status.success());
    assert!(run(b.to_str().unwrap(), "5").status.success());
    for rel in ["summary_T30.csv", "summary_T60.csv", "trajectories/T60/none_/seed_0.csv"] {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap());
    }
    // Trackable constant schedule with beta = 2 carries a bound value.
    let summary = fs::read_to_string(a.join("summary_T60.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "true");
    assert!(row[5].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn constants_prints_json() {
    let res = respricing(&["constants"]);
    assert!(res.status.success());
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let c1 = v["constants"]["c1"].as_f64().unwrap();
    assert!((c1 - 4.0 * 20f64.sqrt()).abs() < 1e-9);
    assert!(v["vi_solution"].is_null());
}

#[test]
fn failures_report_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let res = respricing(&["run", "--sweep", "gamma=1", "--out", out]);
    assert!(!res.status.success());
    assert_eq!(stderr_json(&res)["kind"], "invalid_parameter");

    let res = respricing(&["run", "--config", "/nonexistent/cfg.json", "--out", out]);
    assert!(!res.status.success());
    assert_eq!(stderr_json(&res)["kind"], "io");

    let res = respricing(&["summarize", out]);
    assert!(!res.status.success());
    assert_eq!(stderr_json(&res)["kind"], "corrupt_report");

    let res = respricing(&["run", "--bogus"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(stderr_json(&res)["kind"], "usage");
}

#[test]
fn shipped_configs_run() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    for name in ["benchmark.json", "decay.json", "small_bound.json"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = format!("{root}/{name}");
        let res = respricing(&[
            "run", "--config", &cfg, "--seeds", "1", "--horizon", "20", "--out", dir.path().to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{name}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(dir.path().join("summary_T20.csv").exists());
    }
}
