use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adaptive_consensus::sim::scenario::example_config;

fn adcons(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adcons"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn replicate_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rep");
    let o = adcons(&["replicate-paper", "--out", out.to_str().unwrap(), "--horizon", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "config.json",
        "trajectory.csv",
        "errors.csv",
        "rates.csv",
        "leader_states.svg",
        "xhat_errors.svg",
        "what_errors.svg",
        "tracking_errors.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let header = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.starts_with("t,sigma,v[1],v[2],v[3],v[4],x1[1],x1[2]"));
    assert!(header.ends_with(",V"));
    assert!(stdout(&o).contains("final max |vhat_i - v|"));

    // the emitted config reproduces the same trajectory through `run`
    let again = dir.path().join("again");
    let o = adcons(&[
        "run",
        "--config",
        out.join("config.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "--horizon",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(out.join("trajectory.csv")).unwrap(),
        fs::read(again.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn run_falls_back_to_configured_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-config");
    let mut file = example_config();
    file.sim.out_dir = Some(out.to_str().unwrap().to_string());
    let cfg = write_config(dir.path(), "c.json", &file.to_json());
    let o = adcons(&["run", "--config", &cfg, "--horizon", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("trajectory.csv").is_file());
}

#[test]
fn check_graph_reports_witness_windows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &example_config().to_json());
    let o = adcons(&["check-graph", "--config", &cfg, "--epsilon", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("jointly connected: true"), "{text}");
    assert!(text.contains("window 1: [0, 1) graphs 1,2,3,4"), "{text}");

    let mut never = example_config();
    never.graphs = vec![serde_json::from_str(r#"{"nodes": 5, "edges": []}"#).unwrap()];
    never.schedule = serde_json::from_str(r#"{"kind": "periodic", "period": 1.0, "cycle": [1]}"#).unwrap();
    let cfg = write_config(dir.path(), "never.json", &never.to_json());
    let o = adcons(&["check-graph", "--config", &cfg, "--epsilon", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("jointly connected: false"));
}

#[test]
fn fit_recovers_injected_rate() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,norm\n");
    for k in 0..=200 {
        let t = k as f64 * 0.05;
        csv.push_str(&format!("{t},{}\n", 3.0 * (-1.5 * t).exp()));
    }
    let path = dir.path().join("synthetic.csv");
    fs::write(&path, csv).unwrap();
    let o = adcons(&[
        "fit",
        "--csv",
        path.to_str().unwrap(),
        "--column",
        "norm",
        "--from",
        "1",
        "--to",
        "9",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lambda: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("lambda = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((lambda - 1.5).abs() < 1e-9);

    let o = adcons(&[
        "fit",
        "--csv",
        path.to_str().unwrap(),
        "--column",
        "missing",
        "--from",
        "0",
        "--to",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&example_config().to_json()).unwrap();
    value["agents"][0]["theta"] = serde_json::json!([1.0, "two"]);
    let cfg = write_config(dir.path(), "bad.json", &value.to_string());
    let o = adcons(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("agents[0].theta"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "ok.json", &example_config().to_json());
    let o = adcons(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--dt",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sim.dt"), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = example_config();
    file.init.x[0][1] = 1e150;
    let cfg = write_config(dir.path(), "blow.json", &file.to_json());
    let o = adcons(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--horizon",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));

    assert_eq!(adcons(&["run"]).status.code(), Some(1));

    let cfg = write_config(dir.path(), "ok.json", &example_config().to_json());
    let o = adcons(&["run", "--config", &cfg, "--horizon", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sim.out_dir"));
    assert_eq!(adcons(&["--help"]).status.code(), Some(0));
}
