use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use oqkd_cli::commands::{self, Command, Inputs};
use oqkd_cli::config::{Overrides, RunConfig};
use oqkd_cli::output;

/// Seeded Monte-Carlo simulator for opportunistic QKD over WDM links.
///
/// Settings are layered: built-in defaults, then `--config`, then flags.
/// Every artifact starts with a provenance comment; passing any artifact
/// back as `--config` replays the run.
#[derive(Debug, Parser)]
#[command(name = "oqkd", version)]
struct Cli {
    /// Subcommand to run.
    #[arg(value_enum)]
    command: Command,

    /// INI config file, or an artifact carrying a provenance line.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Traffic category preset (1, 2 or 3).
    #[arg(long)]
    category: Option<String>,

    /// Simulated duration in days.
    #[arg(long)]
    days: Option<String>,

    /// Time step in minutes.
    #[arg(long = "dt-min")]
    dt_min: Option<String>,

    #[arg(long)]
    seed: Option<String>,

    #[arg(long)]
    trials: Option<String>,

    /// Worker threads; defaults to available processors capped by trials.
    #[arg(long)]
    workers: Option<String>,

    /// Buffer threshold in DKU.
    #[arg(long = "b0-dku")]
    b0_dku: Option<String>,

    /// instant-balance, constant-mean or fixed:RATE.
    #[arg(long)]
    mode: Option<String>,

    /// discrete, cont-lower or cont-upper.
    #[arg(long = "channel-model")]
    channel_model: Option<String>,

    /// Output directory.
    #[arg(long)]
    out: Option<String>,

    /// Density CSV (`t_hours,density`) to fit instead of a fresh ensemble.
    #[arg(long)]
    density: Option<PathBuf>,

    /// Any config key, e.g. `--set traffic.hurst=0.7`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

impl Cli {
    fn overrides(&self) -> Result<Overrides> {
        let mut o = match &self.config {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        let flags = [
            ("traffic.category", &self.category),
            ("simulation.days", &self.days),
            ("simulation.dt_minutes", &self.dt_min),
            ("simulation.seed", &self.seed),
            ("simulation.trials", &self.trials),
            ("simulation.workers", &self.workers),
            ("buffer.b0_dku", &self.b0_dku),
            ("buffer.consumption_mode", &self.mode),
            ("buffer.channel_model", &self.channel_model),
            ("output.directory", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                o.set(key, v.as_str())?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects SECTION.KEY=VALUE, got {kv:?}"))?;
            o.set(k.trim(), v.trim())?;
        }
        Ok(o)
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = RunConfig::resolve(&cli.overrides()?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers())
        .build()
        .context("starting worker pool")?;
    let inputs = Inputs {
        density: cli.density.as_deref(),
    };
    let outcome = pool.install(|| commands::run(cli.command, &config, &inputs))?;
    let header = config.provenance(cli.command.name())?;
    output::write_all(
        &config.output.directory,
        &header,
        &outcome.artifacts(cli.command, &config),
    )?;
    print!("{}", outcome.report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
