use swpomdp::experiment::{run_experiment, ExperimentConfig, Prepared, CSV_HEADER};
use swpomdp::Error;

const CASE_2: &str = r#"{
    "case": "mr2", "model": "machine-repair",
    "eps": 0.2, "kappa": 0.4, "theta": 0.4,
    "n_list": [0, 1, 2, 3], "qlearn_steps": 20000, "qlearn_seeds": 3, "base_seed": 5
}"#;

fn run_with_threads(cfg: &str, threads: usize) -> String {
    let prep = Prepared::new(ExperimentConfig::from_json(cfg).unwrap()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_experiment(&prep).csv())
}

fn config_key(text: &str) -> String {
    let err = ExperimentConfig::from_json(text).and_then(|c| Prepared::new(c).map(|_| ()));
    match err {
        Err(Error::Config { key, .. }) => key,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn csv_is_byte_stable_across_runs_and_thread_counts() {
    let one = run_with_threads(CASE_2, 1);
    assert_eq!(one, run_with_threads(CASE_2, 1));
    assert_eq!(one, run_with_threads(CASE_2, 4));
    let mut lines = one.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 4);
}

#[test]
fn case_2_rate_column_is_096() {
    let csv = run_with_threads(CASE_2, 2);
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 12);
        assert_eq!(f[0], "mr2");
        assert_eq!(f[9], "0.96");
        assert_eq!(f[11], "ok");
        let n: i32 = f[1].parse().unwrap();
        let bound: f64 = f[7].parse().unwrap();
        assert!((bound - 0.5 * 0.96f64.powi(n)).abs() < 1e-12);
        assert!(!f[10].is_empty());
    }
}

#[test]
fn config_errors_name_their_key() {
    assert_eq!(config_key(r#"{"model": "machine-repair", "n_list": []}"#), "n_list");
    assert_eq!(config_key(r#"{"model": "machine-repair", "n_list": [2, 1]}"#), "n_list");
    assert_eq!(config_key(r#"{"model": "machine-repair", "n_list": [1], "bogus": 1}"#), "bogus");
    assert_eq!(config_key(r#"{"n_list": [1]}"#), "model");
    assert_eq!(config_key(r#"{"model": "example3", "n_list": [1]}"#), "eps");
    assert_eq!(config_key(r#"{"model": "example3", "eps": 1.5, "n_list": [1]}"#), "eps");
    assert_eq!(config_key(r#"{"model": "machine-repair", "beta": 1.5, "n_list": [1]}"#), "beta");
    assert_eq!(
        config_key(r#"{"model": "file", "model_file": "/nonexistent/m.json", "n_list": [1]}"#),
        "model_file"
    );
    assert_eq!(
        config_key(r#"{"model": "machine-repair", "n_list": [1], "z_star": "fancy"}"#),
        "z_star"
    );
    assert_eq!(
        config_key(r#"{"model": "machine-repair", "n_list": [1], "exploration": [0.9, 0.2]}"#),
        "exploration"
    );
}

#[test]
fn cap_overflow_is_a_row_status() {
    let cfg = r#"{"case": "big", "model": "example3", "eps": 0.3, "n_list": [0, 40]}"#;
    let csv = run_with_threads(cfg, 2);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows[0].ends_with(",ok"));
    assert!(rows[1].starts_with("big,40,,,,,,,,,,\"cap-exceeded"), "{}", rows[1]);
}

#[test]
fn model_file_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let model = swpomdp::builders::MachineRepair::CASE_1.build().unwrap();
    model.save(dir.path().join("m.json")).unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"model": "file", "model_file": "m.json", "n_list": [0, 1]}"#).unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let file_csv = run_experiment(&Prepared::new(cfg).unwrap()).csv();
    let builtin = run_with_threads(r#"{"model": "machine-repair", "n_list": [0, 1]}"#, 1);
    assert_eq!(file_csv, builtin);
}
