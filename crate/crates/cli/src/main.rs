//! `respricing`: run pricing experiments, summarize reports, print constants.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use respricing::experiment::{run_experiment, summarize, Emit, ExperimentConfig, Sweep, SweepParam};
use respricing::theory::GameConstants;
use respricing::{compute_constants, solve_constrained_vi, NoiseModel, Regularizer};
use serde_json::json;

#[derive(Parser)]
#[command(name = "respricing", version, about = "Congestion pricing for mirror-descent populations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its report directory.
    Run(RunArgs),
    /// Aggregate the summary files of a report directory.
    Summarize {
        dir: PathBuf,
        /// Print JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Print the game constants of a configuration as JSON.
    Constants {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also solve the constrained VI and fill in the multiplier bound.
        #[arg(long)]
        solve: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; the benchmark defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds per cell.
    #[arg(long)]
    seeds: Option<usize>,
    /// `name=v1,v2,...` with name one of beta, alpha, gamma_scale, sigma.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, json or both.
    #[arg(long)]
    format: Option<String>,
    /// Single horizon replacing the configured list.
    #[arg(long)]
    horizon: Option<usize>,
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ExperimentConfig::from_json(&text)?)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_sweep(spec: &str) -> Result<Sweep> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| respricing::Error::InvalidParameter {
            name: "sweep".into(),
            reason: format!("expected name=v1,v2,..., got {spec:?}"),
        })?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| respricing::Error::InvalidParameter {
                name: "sweep".into(),
                reason: format!("not a number: {v:?}"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sweep {
        param: name.trim().parse::<SweepParam>()?,
        values,
    })
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_ref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.seeds {
        cfg.n_seeds = n;
    }
    if let Some(spec) = &args.sweep {
        cfg.sweep = Some(parse_sweep(spec)?);
    }
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    if let Some(f) = &args.format {
        cfg.emit = f.parse::<Emit>()?;
    }
    if let Some(t) = args.horizon {
        cfg.horizons = vec![t];
    }
    let out = cfg.output.clone().ok_or_else(|| respricing::Error::InvalidParameter {
        name: "out".into(),
        reason: "no output directory; pass --out or set \"output\"".into(),
    })?;
    let report = run_experiment(&cfg)?;
    let tc = report.trackability.iter().filter(|t| t.tc_satisfied).count();
    println!(
        "{}",
        json!({
            "output": out,
            "runs": report.cells.len(),
            "files": report.files.len(),
            "trackable_schedules": tc,
            "schedules": report.trackability.len(),
        })
    );
    Ok(())
}

fn constants(config: Option<PathBuf>, solve: bool) -> Result<()> {
    let cfg = load_config(config.as_ref())?;
    let noise = if cfg.sigma == 0.0 {
        NoiseModel::none()
    } else {
        NoiseModel::gaussian(cfg.sigma)?
    };
    let game = cfg.game.build()?.with_noise(noise);
    let regs: Vec<Regularizer> = game.action_sets().iter().map(Regularizer::for_action_set).collect();
    let mut consts: GameConstants = compute_constants(&game, &regs)?;
    let mut solution = None;
    if solve {
        let sol = solve_constrained_vi(&game, 1e-8, 2_000_000)?;
        consts = consts.with_multipliers(&sol);
        solution = Some(sol);
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "constants": consts, "vi_solution": solution }))?
    );
    Ok(())
}

fn error_json(err: &anyhow::Error) -> serde_json::Value {
    let kind = if let Some(e) = err.downcast_ref::<respricing::Error>() {
        e.kind()
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "other"
    };
    json!({ "error": format!("{err:#}"), "kind": kind })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string().trim_end(), "kind": "usage" }));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Summarize { dir, json } => summarize(&dir).map_err(Into::into).and_then(|table| {
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.to_csv()?);
            }
            Ok(())
        }),
        Command::Constants { config, solve } => constants(config, solve),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
