use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};
use swpomdp::experiment::{format_g12, run_experiment, ExperimentConfig, Prepared, Row, CSV_HEADER};
use swpomdp::{Error, FinitePomdp};

#[derive(Parser)]
#[command(name = "swpomdp", version, about = "Sliding-window approximations of finite POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (flat JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the config's `base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file, or a config and the model it describes.
    Validate {
        /// Model file to check instead of a config.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Value iteration and exact evaluation for every N.
    Solve,
    /// Q-learning for every N, compared against value iteration.
    Qlearn,
    /// Empirical stability terms and bounds for every N.
    Stability,
    /// The full study: one CSV row per N plus a JSON sidecar.
    Experiment,
}

enum Failure {
    Config(String),
    NonConvergence(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            Error::NonConvergence { .. } => Failure::NonConvergence(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(format!("io: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.jobs {
        if k == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::NonConvergence(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if let Command::Validate { model: Some(path) } = &cli.command {
        return validate_model(path);
    }
    let prep = prepare(cli)?;
    let out = cli
        .out
        .clone()
        .or_else(|| prep.config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Validate { .. } => validate_config(&prep),
        Command::Solve => solve(&prep, &out),
        Command::Qlearn => qlearn(&prep, &out),
        Command::Stability => stability(&prep, &out),
        Command::Experiment => experiment(&prep, &out),
    }
}

fn prepare(cli: &Cli) -> Result<Prepared, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required for this command".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        config.base_seed = s;
    }
    Ok(Prepared::new(config)?)
}

fn write(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> Outcome {
    let mut text = serde_json::to_string_pretty(v).map_err(Error::from)?;
    text.push('\n');
    write(path, &text)
}

/// Per-N results in `n_list` order; the first non-convergence is reported
/// after everything else has been written.
fn first_failure(results: &[Result<Value, Error>]) -> Outcome {
    let mut worst = None;
    for e in results.iter().filter_map(|r| r.as_ref().err()) {
        match e {
            Error::NonConvergence { .. } => return Err(Failure::NonConvergence(e.to_string())),
            _ if worst.is_none() => worst = Some(Failure::Other(e.to_string())),
            _ => {}
        }
    }
    worst.map_or(Ok(()), Err)
}

fn per_n_json(results: &[Result<Value, Error>]) -> Value {
    Value::Array(
        results
            .iter()
            .map(|r| match r {
                Ok(v) => v.clone(),
                Err(e) => json!({ "error": e.to_string() }),
            })
            .collect(),
    )
}

fn validate_model(path: &Path) -> Outcome {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let model = FinitePomdp::from_json_raw(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let violations = model.validate();
    let report = json!({
        "model": model.name(),
        "states": model.n_states(),
        "observations": model.n_obs(),
        "actions": model.n_actions(),
        "valid": violations.is_empty(),
        "violations": violations,
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(format!(
            "{} violation(s), first: {}",
            violations.len(),
            violations[0]
        )))
    }
}

fn validate_config(prep: &Prepared) -> Outcome {
    let m = &prep.model;
    let report = json!({
        "case": prep.config.case,
        "model": m.name(),
        "states": m.n_states(),
        "observations": m.n_obs(),
        "actions": m.n_actions(),
        "beta": m.discount(),
        "constants": m.constants(),
        "z_star": prep.z_star,
        "prior_set": prep.priors.labels,
        "n_list": prep.config.n_list,
        "valid": true,
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    Ok(())
}

fn solve(prep: &Prepared, out: &Path) -> Outcome {
    let results: Vec<Result<Value, Error>> = prep
        .config
        .n_list
        .par_iter()
        .map(|&n| {
            let wm = prep.window_mdp(n)?;
            let sol = prep.solve(&wm)?;
            let j_tilde = prep.evaluate(&wm, &sol)?;
            Ok(json!({
                "n": n,
                "iterations": sol.iterations,
                "residual": sol.residual,
                "j_tilde": j_tilde,
                "policy": sol.policy.to_json(Some(sol.values.as_slice())),
            }))
        })
        .collect();
    for r in results.iter().flatten() {
        println!("N={} j_tilde={}", r["n"], format_g12(r["j_tilde"].as_f64().unwrap_or(f64::NAN)));
    }
    let case = &prep.config.case;
    write_json(&out.join(format!("{case}.solve.json")), &per_n_json(&results))?;
    first_failure(&results)
}

fn qlearn(prep: &Prepared, out: &Path) -> Outcome {
    if prep.config.qlearn_steps == 0 {
        return Err(Failure::Config("config error in `qlearn_steps`: must be positive for qlearn".into()));
    }
    let results: Vec<Result<Value, Error>> = prep
        .config
        .n_list
        .par_iter()
        .map(|&n| {
            let wm = prep.window_mdp(n)?;
            let sol = prep.solve(&wm)?;
            let q_star = wm.q_values(prep.model.discount(), &sol.values);
            let runs = prep.qlearn(&wm, Some(&q_star))?;
            let runs: Vec<Value> = runs
                .iter()
                .map(|r| {
                    json!({
                        "seed": r.table.seed,
                        "policy_matches": r.policy.actions == sol.policy.actions,
                        "diagnostics": r.diagnostics,
                        "table": r.table,
                    })
                })
                .collect();
            Ok(json!({ "n": n, "runs": runs }))
        })
        .collect();
    for r in results.iter().flatten() {
        let gaps: Vec<String> = r["runs"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|run| format_g12(run["diagnostics"]["gap"].as_f64().unwrap_or(f64::NAN)))
            .collect();
        println!("N={} gaps=[{}]", r["n"], gaps.join(", "));
    }
    let case = &prep.config.case;
    write_json(&out.join(format!("{case}.qlearn.json")), &per_n_json(&results))?;
    first_failure(&results)
}

fn stability(prep: &Prepared, out: &Path) -> Outcome {
    let reports: Vec<Result<_, Error>> = prep.config.n_list.par_iter().map(|&n| prep.stability(n)).collect();
    let case = &prep.config.case;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for (r, &n) in reports.iter().zip(&prep.config.n_list) {
        let mut row = Row {
            case: case.clone(),
            n,
            j_tilde: None,
            j_star_est: None,
            error: None,
            ln_w1: None,
            ltv_n: None,
            bound_w1: None,
            bound_hilbert: None,
            rate: None,
            qlearn_gap: None,
            status: "ok".into(),
        };
        match r {
            Ok(s) => {
                row.ln_w1 = Some(s.terms.ln_w1.value);
                row.ltv_n = Some(s.terms.ltv_uniform.value);
                row.bound_w1 = Some(s.w1_bound.bound);
                row.bound_hilbert = s.hilbert_bound;
                row.rate = Some(s.w1_bound.rate);
            }
            Err(e) => row.status = format!("error: {e}"),
        }
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    print!("{csv}");
    let results: Vec<Result<Value, Error>> = reports
        .into_iter()
        .map(|r| r.map(|s| serde_json::to_value(s).expect("serializable")))
        .collect();
    write(&out.join(format!("{case}.stability.csv")), &csv)?;
    write_json(&out.join(format!("{case}.stability.json")), &per_n_json(&results))?;
    first_failure(&results)
}

fn experiment(prep: &Prepared, out: &Path) -> Outcome {
    let output = run_experiment(prep);
    let csv = output.csv();
    print!("{csv}");
    let case = &prep.config.case;
    write(&out.join(format!("{case}.csv")), &csv)?;
    write_json(&out.join(format!("{case}.json")), &output.sidecar)?;
    if output.nonconvergence {
        return Err(Failure::NonConvergence("at least one N did not converge; see the status column".into()));
    }
    match output.rows.iter().find(|r| r.status != "ok") {
        Some(r) => Err(Failure::Other(format!("N={}: {}", r.n, r.status))),
        None => Ok(()),
    }
}
