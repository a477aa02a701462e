use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use latentroute::scenario::{builtin, builtin_names};
use latentroute_cli::commands::{self, DATASET_STEM, MODEL_FILE, ROADMAP_FILE};
use latentroute_cli::config::default_file;
use latentroute_cli::{CliError, OutDir, RunConfig};

/// Latent-manifold obstacle avoidance pipeline.
///
/// Exit codes: 0 success, 2 config error, 3 input error, 4 planning
/// failure, 5 verification mismatch.
#[derive(Parser)]
#[command(name = "latentroute", version)]
struct Cli {
    /// Key-value config file (see `latentroute config`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set vae.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Shorthand for `--set out_dir=DIR`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample and label configurations, write dataset.csv and dataset.meta.
    Generate,
    /// Train the autoencoder, write model.bin and train_report.json.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Build the latent roadmap, write roadmap.txt and embedding_report.json.
    BuildGraph {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run a scenario and write one JSONL trace per seed.
    Simulate {
        /// Scenario file or builtin name.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        roadmap: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<u64>,
    },
    /// Replay a trace through the closed-form clearance oracle.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        /// Scenario file or builtin name.
        #[arg(long)]
        scenario: String,
        /// Robot description file (defaults to the configured robot).
        #[arg(long)]
        robot: Option<PathBuf>,
    },
    /// Print a config file with every key at its default.
    Config,
    /// List builtin scenarios.
    Scenarios,
}

fn run(cli: Cli) -> Result<Option<Value>, CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(o) = &cli.out {
        overrides.push(format!("out_dir={}", o.display()));
    }
    match &cli.command {
        Command::Config => {
            print!("{}", default_file());
            return Ok(None);
        }
        Command::Scenarios => {
            for name in builtin_names() {
                let s = builtin(name).map_err(|e| CliError::Internal(e.to_string()))?;
                println!("{name}\t{}\t{}", s.category.name(), s.description);
            }
            return Ok(None);
        }
        Command::Simulate { seed, runs, .. } => {
            if let Some(s) = seed {
                overrides.push(format!("simulate.seed={s}"));
            }
            if let Some(r) = runs {
                overrides.push(format!("simulate.runs={r}"));
            }
        }
        Command::Verify { robot: Some(r), .. } => overrides.push(format!("robot={}", r.display())),
        _ => {}
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let out = OutDir::create(&cfg.out_dir)?;
    let default = |p: &Option<PathBuf>, name: &str| p.clone().unwrap_or_else(|| cfg.out_dir.join(name));
    let dataset_default = format!("{DATASET_STEM}.csv");
    let summary = match &cli.command {
        Command::Generate => commands::generate(&cfg, &out)?,
        Command::Train { dataset } => commands::train_model(&cfg, &out, &default(dataset, &dataset_default))?,
        Command::BuildGraph { model, dataset } => commands::build_graph(
            &cfg,
            &out,
            &default(model, MODEL_FILE),
            &default(dataset, &dataset_default),
        )?,
        Command::Simulate {
            scenario,
            roadmap,
            model,
            ..
        } => commands::simulate(
            &cfg,
            &out,
            &default(roadmap, ROADMAP_FILE),
            &default(model, MODEL_FILE),
            scenario,
        )?,
        Command::Verify { trace, scenario, .. } => commands::verify(&cfg, &out, trace, scenario)?,
        Command::Config | Command::Scenarios => unreachable!(),
    };
    Ok(Some(summary))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(summary) => {
            if let Some(s) = summary {
                println!("{s}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("latentroute: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
