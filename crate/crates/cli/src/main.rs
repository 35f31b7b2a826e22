use std::path::PathBuf;
use std::process::ExitCode;

use asymre::harness::config::{ExperimentConfig, ExperimentKind};
use asymre::harness::{execute, generate};
use asymre::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Expected and sampled AsymRE on tabular softmax bandits.
#[derive(Parser, Debug)]
#[command(name = "asymre", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a bandit instance and write it to <out>/instance.json
    Gen(Common),
    /// One expected-dynamics run at a fixed baseline
    Run(Common),
    /// Closed-form limit policy at a fixed baseline
    Limit(Common),
    /// Repeated policy improvement with refreshed behavior policies
    Improve(Common),
    /// Final supports and rewards across a grid of baselines
    Sweep(Common),
    /// Limit vertex for each initial policy on a 3-arm simplex grid
    Basin(Common),
    /// Multi-context sampled training with group-mean baselines
    Contextual(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Support threshold
    #[arg(long)]
    eps: Option<f64>,
    /// Baseline for run, limit and basin
    #[arg(long)]
    v: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn load(kind: ExperimentKind, path: Option<&PathBuf>, strict_kind: bool) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::new(kind));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("{}: expected a JSON object", path.display())))?;
    let wanted = serde_json::to_value(kind).expect("kind serializes");
    match obj.get("kind") {
        Some(k) if strict_kind && *k != wanted => {
            return Err(Error::Config(format!("config is for {k}, not {wanted}")));
        }
        _ => {
            obj.insert("kind".into(), wanted);
        }
    }
    ExperimentConfig::from_json(&value.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let (kind, args, gen) = match cli.command {
        Command::Gen(a) => (ExperimentKind::Run, a, true),
        Command::Run(a) => (ExperimentKind::Run, a, false),
        Command::Limit(a) => (ExperimentKind::Limit, a, false),
        Command::Improve(a) => (ExperimentKind::Improve, a, false),
        Command::Sweep(a) => (ExperimentKind::Sweep, a, false),
        Command::Basin(a) => (ExperimentKind::Basin, a, false),
        Command::Contextual(a) => (ExperimentKind::Contextual, a, false),
    };
    let mut cfg = load(kind, args.config.as_ref(), !gen)?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(eps) = args.eps {
        cfg.eps = eps;
    }
    if let Some(v) = args.v {
        cfg.v = Some(v);
    }
    if args.threads == Some(0) {
        return Err(Error::Config("--threads must be positive".into()));
    }
    let files = if gen { generate(&cfg)? } else { execute(&cfg, args.threads)? };
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
