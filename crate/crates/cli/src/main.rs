use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relaylift_cli::{cmd_bounds, cmd_pipeline, cmd_quantize, CliError, ExperimentConfig, MethodName, Seeds};

/// Lift superposition-network codes to Gaussian relay networks.
///
/// Exit codes: 0 success, 1 I/O or internal failure, 2 invalid input,
/// 3 no base code found, 4 empty lifted code.
#[derive(Parser)]
#[command(name = "relaylift", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the bit depth and quantized gain table of a network.
    Quantize {
        #[arg(long)]
        network: PathBuf,
        /// Also write quantized_gains.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full lifting pipeline described by a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; replaces all stage seeds of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Samples for the bound check (overrides the config).
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        kappa_override: Option<f64>,
        #[arg(long, value_enum)]
        method: Option<MethodName>,
    },
    /// Estimate the genie entropy terms at every node and compare with kappa.
    Bounds {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Quantize { network, out } => Ok(cmd_quantize(&network, out.as_deref())?.summary()),
        Command::Pipeline { config, out, seed, samples, kappa_override, method } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            if let Some(seed) = seed {
                cfg.seeds = Seeds::from_master(seed);
            }
            if let Some(samples) = samples {
                cfg.bound_samples = samples;
            }
            if kappa_override.is_some() {
                cfg.kappa_override = kappa_override;
            }
            if let Some(method) = method {
                cfg.method = method;
            }
            Ok(cmd_pipeline(&cfg)?.summary())
        }
        Command::Bounds { network, samples, seed, out } => Ok(cmd_bounds(&network, samples, seed, &out)?.summary()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
