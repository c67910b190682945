use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};

use hyperzero::harness::{
    compare, run, ConfigError, ExperimentConfig, ExperimentKind, FieldError, Prediction, ResultRecord,
};
use hyperzero::DiskPoint;

const EXIT_CONFIG: u8 = 1;
const EXIT_TRIAL: u8 = 2;
const EXIT_COMPARISON: u8 = 3;

#[derive(Parser)]
#[command(name = "hyperzero", version, about = "Zero statistics of random power series pushed to the disk boundary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form covariance and α-sum identities on a |u| grid.
    VerifyIdentities(RunArgs),
    /// Law of a real linear statistic against its normal limit.
    Clt(RunArgs),
    /// Radial first intensity of the zeros.
    Intensity(RunArgs),
    /// ε^{-2n}-scaled joint ball-hit probabilities and their ε → 0 limit.
    Correlations(RunArgs),
    /// Dependence between zero sets at two Möbius parameters.
    Independence(RunArgs),
    /// Residual certificates and count agreement of the root finders.
    RootsBench(RunArgs),
    /// Compare a record with a kernel prediction or a baseline record.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    law: Option<String>,
    /// Law parameter, e.g. `p=0.2` for the sparse law.
    #[arg(long = "law-param", value_name = "K=V")]
    law_param: Vec<String>,
    /// Möbius parameter, `RE` or `RE,IM`; repeat for a grid.
    #[arg(long, allow_hyphen_values = true)]
    u: Vec<String>,
    /// Ball center or evaluation point, `RE,IM`.
    #[arg(long, allow_hyphen_values = true)]
    center: Vec<String>,
    #[arg(long)]
    epsilon: Vec<f64>,
    /// Weight of the linear statistic, `RE,IM`.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Vec<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quadrature_nodes: Option<usize>,
    /// JSON record path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat CSV of the cells.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Worker threads (default: HYPERZERO_THREADS, else all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    record: PathBuf,
    /// Baseline record with the same geometry.
    #[arg(long, conflicts_with = "kernel", required_unless_present = "kernel")]
    baseline: Option<PathBuf>,
    /// Compare against det[c/(1 − z_i z̄_j)²].
    #[arg(long)]
    kernel: bool,
    #[arg(long, default_value_t = 1.0)]
    calibration: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(vec![FieldError { field: field.into(), message: message.into() }])
}

fn parse_pair(field: &str, text: &str) -> Result<[f64; 2], ConfigError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| invalid(field, format!("`{text}` is not RE or RE,IM")));
    match parts.as_slice() {
        [re] => Ok([num(re)?, 0.0]),
        [re, im] => Ok([num(re)?, num(im)?]),
        _ => Err(invalid(field, format!("`{text}` is not RE or RE,IM"))),
    }
}

fn parse_point(field: &str, text: &str) -> Result<DiskPoint, ConfigError> {
    let [re, im] = parse_pair(field, text)?;
    DiskPoint::new(re, im).map_err(|e| invalid(field, e.to_string()))
}

fn build_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.experiment != kind {
                return Err(invalid("experiment", format!("file describes `{}`, not `{kind}`", cfg.experiment)));
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(law) = &args.law {
        cfg.law = law.clone();
    }
    for kv in &args.law_param {
        let (k, v) = kv.split_once('=').ok_or_else(|| invalid("law_params", format!("`{kv}` is not K=V")))?;
        let v: f64 = v.trim().parse().map_err(|_| invalid("law_params", format!("`{kv}` has a non-numeric value")))?;
        cfg.law_params.insert(k.trim().to_string(), v);
    }
    if !args.u.is_empty() {
        cfg.u = args.u.iter().map(|s| parse_point("u", s)).collect::<Result<_, _>>()?;
    }
    if !args.center.is_empty() {
        cfg.centers = args.center.iter().map(|s| parse_point("centers", s)).collect::<Result<_, _>>()?;
    }
    if !args.epsilon.is_empty() {
        cfg.epsilons = args.epsilon.clone();
    }
    if !args.lambda.is_empty() {
        cfg.lambdas = args.lambda.iter().map(|s| parse_pair("lambdas", s)).collect::<Result<_, _>>()?;
    }
    cfg.radius = args.radius.or(cfg.radius);
    cfg.bins = args.bins.unwrap_or(cfg.bins);
    cfg.trials = args.trials.or(cfg.trials);
    cfg.master_seed = args.seed.unwrap_or(cfg.master_seed);
    cfg.roots.quadrature_nodes = args.quadrature_nodes.or(cfg.roots.quadrature_nodes);
    cfg.output = args.out.clone().or(cfg.output);
    cfg.csv = args.csv.clone().or(cfg.csv);
    Ok(cfg)
}

fn init_threads(requested: Option<usize>) -> Result<(), ConfigError> {
    let from_env = std::env::var("HYPERZERO_THREADS").ok();
    let threads = match (requested, from_env) {
        (Some(n), _) => Some(n),
        (None, Some(s)) => {
            Some(s.trim().parse().map_err(|_| invalid("HYPERZERO_THREADS", format!("`{s}` is not a count")))?)
        }
        (None, None) => None,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(invalid("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| invalid("threads", e.to_string()))?;
    }
    Ok(())
}

fn write_outputs(record: &ResultRecord) -> std::io::Result<()> {
    match &record.config.output {
        Some(path) => record.write_json(path)?,
        None => println!("{}", record.to_json()),
    }
    if let Some(path) = &record.config.csv {
        record.write_csv(std::fs::File::create(path)?).map_err(std::io::Error::other)?;
    }
    Ok(())
}

fn run_experiment(kind: ExperimentKind, args: &RunArgs) -> ExitCode {
    let record = match init_threads(args.threads).and_then(|_| build_config(kind, args)).and_then(|c| run(&c)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = write_outputs(&record) {
        eprintln!("cannot write results: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if !record.is_complete() {
        eprintln!("run incomplete: {}", record.meta.failure.as_deref().unwrap_or("unknown failure"));
        return ExitCode::from(EXIT_TRIAL);
    }
    // Deterministic checks have exact verdicts; Monte Carlo verdicts are
    // left to `compare`.
    if kind == ExperimentKind::VerifyIdentities && !record.summary.passed {
        eprintln!("identity checks failed");
        return ExitCode::from(EXIT_COMPARISON);
    }
    ExitCode::SUCCESS
}

fn run_compare(args: &CompareArgs) -> ExitCode {
    let load = |p: &PathBuf| {
        ResultRecord::read_json(p).map_err(|e| {
            eprintln!("cannot read {}: {e}", p.display());
            ExitCode::from(EXIT_CONFIG)
        })
    };
    let record = match load(&args.record) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let baseline = match args.baseline.as_ref().map(load).transpose() {
        Ok(b) => b,
        Err(code) => return code,
    };
    let prediction = match &baseline {
        Some(b) => Prediction::Baseline(b),
        None => Prediction::KernelDeterminant { calibration: args.calibration },
    };
    let report = match compare(&record, &prediction) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    match &args.out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, json + "\n") {
                eprintln!("cannot write {}: {e}", p.display());
                return ExitCode::from(EXIT_CONFIG);
            }
        }
        None => println!("{json}"),
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_COMPARISON)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    match &cli.command {
        Command::VerifyIdentities(a) => run_experiment(ExperimentKind::VerifyIdentities, a),
        Command::Clt(a) => run_experiment(ExperimentKind::Clt, a),
        Command::Intensity(a) => run_experiment(ExperimentKind::Intensity, a),
        Command::Correlations(a) => run_experiment(ExperimentKind::Correlations, a),
        Command::Independence(a) => run_experiment(ExperimentKind::Independence, a),
        Command::RootsBench(a) => run_experiment(ExperimentKind::RootsBench, a),
        Command::Compare(a) => run_compare(a),
    }
}
