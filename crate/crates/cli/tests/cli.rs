use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "case,N,j_tilde,j_star_est,error,LN_w1,LTV_N,bound_w1,bound_hilbert,rate,qlearn_gap,status";

fn swpomdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swpomdp")).args(args).output().unwrap()
}

fn config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MR1: &str = r#"{"case": "mr1", "model": "machine-repair", "n_list": [0, 1, 2, 3],
    "qlearn_steps": 5000, "qlearn_seeds": 2}"#;

#[test]
fn experiment_writes_stable_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.json", MR1);
    let read = |out: &str| std::fs::read_to_string(dir.path().join(out).join("mr1.csv")).unwrap();
    for (out, jobs) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let o = swpomdp(&["experiment", "--config", &cfg, "--out", dir.path().join(out).to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let csv = read("a");
    assert_eq!(csv, read("b"));
    assert_eq!(csv, read("c"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.starts_with("mr1,") && l.ends_with(",ok")));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/mr1.json")).unwrap()).unwrap();
    assert_eq!(sidecar["results"].as_array().unwrap().len(), 4);
    assert!(sidecar["results"][0]["stability"]["assumptions"].is_array());
}

#[test]
fn seed_flag_overrides_base_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.json", MR1);
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let o = swpomdp(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success());
        let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("mr1.json")).unwrap()).unwrap();
        (std::fs::read_to_string(out.join("mr1.csv")).unwrap(), side["config"]["base_seed"].as_u64())
    };
    let (a, sa) = run("1", "s1");
    let (b, sb) = run("2", "s2");
    assert_eq!((sa, sb), (Some(1), Some(2)));
    assert_ne!(a, b);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (body, key) in [
        (r#"{"model": "machine-repair", "n_list": []}"#, "n_list"),
        (r#"{"model": "machine-repair", "n_list": [1], "colour": 3}"#, "colour"),
        (r#"{"model": "example2", "n_list": [1]}"#, "sigma"),
    ] {
        let cfg = config(dir.path(), "bad.json", body);
        let o = swpomdp(&["experiment", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(stderr(&o).contains(&format!("`{key}`")), "{}", stderr(&o));
    }
    assert_eq!(swpomdp(&["solve"]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(swpomdp(&["solve", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn nonconvergence_exits_3_with_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "c.json",
        r#"{"case": "tight", "model": "machine-repair", "n_list": [0, 1], "max_iter": 2}"#,
    );
    let o = swpomdp(&["experiment", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("tight.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.contains(",,non-convergence: value iteration")), "{csv}");
}

#[test]
fn validate_reports_model_violations() {
    let dir = tempfile::tempdir().unwrap();
    let good = swpomdp::builders::MachineRepair::CASE_1.build().unwrap();
    let good_path = dir.path().join("good.json");
    good.save(&good_path).unwrap();
    let o = swpomdp(&["validate", "--model", good_path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["valid"], true);

    let mut v: serde_json::Value = serde_json::from_str(&good.to_json().unwrap()).unwrap();
    v["observation"][0][0] = serde_json::json!(0.5);
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, v.to_string()).unwrap();
    let o = swpomdp(&["validate", "--model", bad_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["valid"], false);
    assert!(!report["violations"].as_array().unwrap().is_empty());
}

#[test]
fn subcommands_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.json", MR1);
    let out = dir.path().join("out");
    for (cmd, file) in [
        ("solve", "mr1.solve.json"),
        ("qlearn", "mr1.qlearn.json"),
        ("stability", "mr1.stability.csv"),
    ] {
        let o = swpomdp(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        assert!(out.join(file).exists(), "{cmd}");
    }
    let stab = std::fs::read_to_string(out.join("mr1.stability.csv")).unwrap();
    assert_eq!(stab.lines().next(), Some(HEADER));
    assert!(stab.lines().nth(1).unwrap().starts_with("mr1,0,,,,0.42,1.4,0.5,,0.98,,ok"));
    let o = swpomdp(&["validate", "--config", &cfg]);
    assert!(o.status.success());
}
