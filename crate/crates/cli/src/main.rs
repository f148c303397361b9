//! `stochan`: flux paths, basic fields, stochastic Galerkin runs and their checks.
//!
//! Exit codes: 0 success, 1 a verification failed, 2 bad or missing input,
//! 3 numerical fault.

mod config;
mod output;
mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochan_core::{Error, Result};

use config::{parse_pairs, Overrides, RunConfig};
use run::Check;

#[derive(Debug, Parser)]
#[command(name = "stochan", version, about = "Flux-driven stochastic channel flow toolkit")]
struct Cli {
    /// Master seed; falls back to the config file, then `STOCHAN_SEED`, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte-Carlo ensembles (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// `key=value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: `stochan-out`, or the `--dir` of `verify`].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a flux path and write `flux.csv`.
    Flux(#[command(flatten)] Overrides),
    /// Invert the flux, solve the outlet profile and build the basic field.
    Basicfield(#[command(flatten)] Overrides),
    /// Monte-Carlo Galerkin ensemble with energy ledgers.
    Simulate {
        /// Also write every coefficient vector to `states.bin`.
        #[arg(long)]
        binary: bool,
        #[command(flatten)]
        params: Overrides,
    },
    /// Run a check and write JSON reports.
    Verify {
        #[arg(value_enum, default_value = "all")]
        check: Check,
        /// Output of `simulate`; its `config.json` becomes the base configuration.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[command(flatten)]
        params: Overrides,
    },
    /// Rerun the command recorded in a `manifest.json`.
    Replay {
        manifest: PathBuf,
    },
}

fn load_config(cli: &Cli, base_dir: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seed_set = false;
    if let Some(dir) = base_dir {
        let path = dir.join("config.json");
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}; run `simulate` first", path.display()))
        })?;
        cfg = serde_json::from_str(&text)?;
        seed_set = true;
    }
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        for (k, v) in parse_pairs(&text)? {
            seed_set |= k == "seed";
            cfg.set(&k, &v)?;
        }
    }
    overrides.apply(&mut cfg);
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    } else if !seed_set {
        if let Ok(v) = std::env::var("STOCHAN_SEED") {
            cfg.seed = v
                .parse()
                .map_err(|_| Error::Config(format!("STOCHAN_SEED={v:?} is not an integer")))?;
        }
    }
    Ok(cfg)
}

fn default_out() -> PathBuf {
    PathBuf::from("stochan-out")
}

fn dispatch(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let out = cli.out.clone().unwrap_or_else(default_out);
    match &cli.command {
        Command::Flux(p) => run::flux(&load_config(cli, None, p)?, &out),
        Command::Basicfield(p) => run::basicfield(&load_config(cli, None, p)?, &out),
        Command::Simulate { binary, params } => {
            run::simulate(&load_config(cli, None, params)?, &out, *binary)
        }
        Command::Verify { check, dir, params } => {
            let cfg = load_config(cli, dir.as_ref(), params)?;
            let out = cli.out.clone().or_else(|| dir.clone()).unwrap_or_else(default_out);
            run::verify(*check, &cfg, dir.as_deref(), &out)
        }
        Command::Replay { manifest } => run::replay(manifest, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("stochan: verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("stochan: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
