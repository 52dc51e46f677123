use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use netgame_core::config::{AnRule, Evaluator, ExperimentConfig, Method};
use netgame_core::experiment;
use netgame_core::format::round_sig;
use netgame_core::meanfield::SweepMode;

#[derive(Parser)]
#[command(name = "netgame", version, about = "Treatment allocation for sequential network games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Welfare tables for generated networks, one CSV row per rule and evaluator.
    Simulate,
    /// Choose an allocation for one network and report its bounds.
    Allocate,
    /// Compare mean-field, MCMC and exact welfare and run the consistency checks.
    Validate,
    /// Closed-form guarantee and bound report.
    Bounds,
}

#[derive(Args, Default)]
struct Overrides {
    /// TOML config file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Network size(s) for generated instances.
    #[arg(long, global = true, value_delimiter = ',')]
    n: Vec<usize>,
    /// Edge density(ies) for generated instances.
    #[arg(long, global = true, value_delimiter = ',')]
    density: Vec<f64>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    param_set: Option<u8>,
    /// Capacity as a fraction of N.
    #[arg(long, global = true)]
    kappa_frac: Option<f64>,
    /// Capacity as a unit count; overrides --kappa-frac.
    #[arg(long, global = true)]
    kappa: Option<usize>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; reports go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_evaluator)]
    evaluator: Vec<Evaluator>,
    /// Allocation rules for simulate.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
    /// Allocation rule for allocate.
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<SweepMode>,
    /// Spillover scaling: a positive number or 1/n.
    #[arg(long, global = true)]
    a_n: Option<AnRule>,
    /// Edge-list file (`i,j` per line, 0-based).
    #[arg(long, global = true)]
    network: Option<PathBuf>,
    /// Covariate CSV with a header row, one row per unit.
    #[arg(long, global = true)]
    covariates: Option<PathBuf>,
    /// Treat the loaded network as sparse (a_n defaults to 1).
    #[arg(long, global = true)]
    sparse: bool,
    /// Cross-check the allocation's welfare by MCMC.
    #[arg(long, global = true)]
    mcmc_check: bool,
}

fn parse_evaluator(s: &str) -> Result<Evaluator, String> {
    match s {
        "exact" => Ok(Evaluator::Exact),
        "va" => Ok(Evaluator::Va),
        "mcmc" => Ok(Evaluator::Mcmc),
        _ => Err(format!("unknown evaluator {s:?} (expected exact, va or mcmc)")),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown method {s:?} (expected brute, bfva, greedy, random or none)"))
}

fn parse_mode(s: &str) -> Result<SweepMode, String> {
    match s {
        "gauss-seidel" => Ok(SweepMode::GaussSeidel),
        "jacobi" => Ok(SweepMode::Jacobi),
        _ => Err(format!("unknown mode {s:?} (expected gauss-seidel or jacobi)")),
    }
}

/// Failure classes, mapped to exit codes 2 and 1.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<netgame_core::Error> for Failure {
    fn from(e: netgame_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn load_config(o: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| Failure::Validation(format!("invalid config {}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if !o.n.is_empty() {
        cfg.n = o.n.clone();
    }
    if !o.density.is_empty() {
        cfg.density = o.density.clone();
    }
    if let Some(p) = o.param_set {
        cfg.param_set = p;
        cfg.theta = None;
    }
    if let Some(f) = o.kappa_frac {
        cfg.kappa_frac = f;
        cfg.kappa = None;
    }
    if o.kappa.is_some() {
        cfg.kappa = o.kappa;
    }
    if let Some(r) = o.reps {
        cfg.replications = r;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if o.out.is_some() {
        cfg.out = o.out.clone();
    }
    if !o.evaluator.is_empty() {
        cfg.evaluators = o.evaluator.clone();
    }
    if !o.methods.is_empty() {
        cfg.methods = o.methods.clone();
    }
    if let Some(m) = o.method {
        cfg.method = m;
    }
    if let Some(m) = o.mode {
        cfg.solver.mode = m;
    }
    if o.a_n.is_some() {
        cfg.a_n = o.a_n;
    }
    if o.network.is_some() {
        cfg.network = o.network.clone();
    }
    if o.covariates.is_some() {
        cfg.covariates = o.covariates.clone();
    }
    cfg.sparse |= o.sparse;
    cfg.mcmc_check |= o.mcmc_check;
    cfg.validate()?;
    Ok(cfg)
}

/// Rounds every float in a JSON tree to six significant digits.
fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig(x))) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report serialises");
    round_floats(&mut v);
    let mut text = serde_json::to_string_pretty(&v).expect("json value serialises");
    text.push('\n');
    text
}

fn emit(out: Option<&Path>, file: &str, content: &[u8]) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
            let path = dir.join(file);
            fs::write(&path, content).map_err(|e| io_failure(&path, e))
        }
        None => io::stdout().write_all(content).map_err(|e| io_failure(Path::new("<stdout>"), e)),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.overrides)?;
    let out = cfg.out.as_deref();
    match cli.command {
        Command::Simulate => {
            let cells = experiment::simulate(&cfg)?;
            let mut buf = Vec::new();
            experiment::write_welfare_csv(&cells, &mut buf)?;
            emit(out, "welfare.csv", &buf)
        }
        Command::Allocate => {
            let (allocation, report) = experiment::allocate(&cfg)?;
            if out.is_some() {
                emit(out, "allocation.json", to_json(&allocation).as_bytes())?;
                emit(out, "bounds.json", to_json(&report).as_bytes())
            } else {
                let both = serde_json::json!({ "allocation": allocation, "bounds": report });
                emit(None, "", to_json(&both).as_bytes())
            }
        }
        Command::Validate => {
            let rows = experiment::validate(&cfg)?;
            let mut buf = Vec::new();
            experiment::write_validation_csv(&rows, &mut buf)?;
            emit(out, "validation.csv", &buf)?;
            let failed = rows.iter().filter(|r| !r.passed()).count();
            let worst = rows.iter().map(|r| r.va_mcmc_gap()).fold(0.0, f64::max);
            eprintln!(
                "validate: {} rows, {failed} with failed checks, max |va - mcmc| = {}",
                rows.len(),
                netgame_core::format::fmt_sig(worst)
            );
            if failed > 0 {
                return Err(Failure::Validation(format!("{failed} validation rows failed")));
            }
            Ok(())
        }
        Command::Bounds => {
            let entries = experiment::bounds(&cfg)?;
            emit(out, "bounds.json", to_json(&entries).as_bytes())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
