mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::value::{Error as ValueError, StrDeserializer};
use serde::Deserialize;

use sae_core::model::WeightTransform;

use crate::config::RunConfig;
use crate::error::CliError;

/// Small-area proportion estimation with a hierarchical Bayes logistic model.
#[derive(Debug, Parser)]
#[command(name = "sae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the inputs and configuration without fitting.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Survey-weighted direct estimates per area.
    Direct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the posterior and write draws, diagnostics and log-likelihoods.
    Fit(FitArgs),
    /// Area proportions from a finished fit.
    Estimate {
        /// Fit output directory.
        #[arg(long)]
        fit: PathBuf,
        /// Defaults to the fit directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        allow_nonconverged: bool,
    },
    /// PSIS-LOO comparison of fits to the same dataset.
    Compare {
        #[arg(required = true, num_args = 2..)]
        fits: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        allow_nonconverged: bool,
    },
    /// Synthetic populations, informative samples and a recovery study.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Write the replicate datasets and truths without fitting.
        #[arg(long)]
        datasets_only: bool,
    },
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    config: PathBuf,
    /// Preset name, M1 to M4.
    #[arg(long)]
    model: Option<String>,
    /// id, log, inv or none.
    #[arg(long)]
    weight_transform: Option<String>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    allow_nonconverged: bool,
}

fn parse_transform(s: &str) -> Result<WeightTransform, CliError> {
    WeightTransform::deserialize(StrDeserializer::<ValueError>::new(&s.to_lowercase()))
        .map_err(|_| CliError::Config(format!("unknown weight transform `{s}`")))
}

impl FitArgs {
    fn apply(self, cfg: &mut RunConfig) -> Result<Option<PathBuf>, CliError> {
        if let Some(m) = self.model {
            cfg.model.preset = Some(m);
            cfg.model.area_covariates = None;
        }
        if let Some(t) = self.weight_transform {
            cfg.model.weight_transform = Some(parse_transform(&t)?);
        }
        let s = &mut cfg.sampler;
        s.chains = self.chains.unwrap_or(s.chains);
        s.iterations = self.iters.unwrap_or(s.iterations);
        s.warmup = self.warmup.unwrap_or(s.warmup);
        s.seed = self.seed.unwrap_or(s.seed);
        cfg.allow_nonconverged |= self.allow_nonconverged;
        Ok(self.out)
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SAE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| CliError::Config(format!("SAE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Validate { config } => commands::validate(&RunConfig::load(&config)?),
        Command::Direct { config, out } => commands::direct(&RunConfig::load(&config)?, out),
        Command::Fit(args) => {
            let mut cfg = RunConfig::load(&args.config)?;
            let out = args.apply(&mut cfg)?.or_else(|| cfg.output.clone()).ok_or_else(|| {
                CliError::Config("no output directory (use --out or `output`)".into())
            })?;
            let m = commands::fit_cmd(&cfg, &out)?;
            println!(
                "{}: {} draws, max R-hat {}, {} divergences -> {}",
                m.label,
                m.draws,
                m.max_rhat.map_or("NA".into(), |r| format!("{r:.3}")),
                m.divergences,
                out.display()
            );
            Ok(())
        }
        Command::Estimate {
            fit,
            out,
            allow_nonconverged,
        } => commands::estimate(&fit, out, allow_nonconverged),
        Command::Compare {
            fits,
            out,
            allow_nonconverged,
        } => commands::compare_cmd(&fits, &out, allow_nonconverged),
        Command::Simulate {
            config,
            reps,
            seed,
            out,
            datasets_only,
        } => {
            let mut file = match config {
                Some(p) => commands::SimFile::load(&p)?,
                None => commands::SimFile::default(),
            };
            if let Some(r) = reps {
                file.sim.replicates = r;
            }
            if let Some(s) = seed {
                file.sim.seed = s;
            }
            commands::simulate(&file, &out, datasets_only)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
