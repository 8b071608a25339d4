mod commands;
mod config;
mod error;
mod lock;
mod png;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{PropagateOptions, ReconstructOptions};
use error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(name = "psm", version, about = "Simulate, reconstruct and refocus structured-modulation microscopy data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render ground truth from a TOML config and write a measurement set.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Recover wavefront and diffuser from a measurement set.
    Reconstruct {
        #[arg(short, long)]
        dataset: PathBuf,
        /// Use only the first K measurements.
        #[arg(long)]
        first_k: Option<usize>,
        /// Number of sweeps.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        no_momentum: bool,
        /// Defaults to `<dataset>/reconstruction`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Propagate a recovered wavefront to a list of planes.
    Propagate {
        #[arg(short, long)]
        result: PathBuf,
        /// Comma-separated distances in meters, strictly increasing.
        /// Defaults to `analysis.z_list` of the dataset config.
        #[arg(long, allow_hyphen_values = true)]
        z: Option<String>,
        /// Detect particles as intensity minima of the stack. Implied when
        /// the dataset config has an `analysis.localization` section.
        #[arg(long)]
        localize: bool,
        /// Meters; defaults to the config value or five pixels.
        #[arg(long)]
        min_separation: Option<f64>,
        /// Fraction of the stack median intensity; defaults to 0.5.
        #[arg(long)]
        threshold: Option<f64>,
        /// Defaults to `<result>/stack`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Aggregate completed runs into report.json and a PNG panel.
    Report {
        dirs: Vec<PathBuf>,
        #[arg(short, long, default_value = "report")]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("PSM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("PSM_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot configure thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { config, out } => {
            let (dir, sha) = commands::simulate(&config, out)?;
            println!("{sha}  {}", dir.join(psm_core::io::MANIFEST_FILE).display());
        }
        Command::Reconstruct {
            dataset,
            first_k,
            iters,
            no_momentum,
            out,
        } => {
            let opts = ReconstructOptions {
                first_k,
                iterations: iters,
                no_momentum,
                out,
            };
            println!("{}", commands::reconstruct(&dataset, &opts)?.display());
        }
        Command::Propagate {
            result,
            z,
            localize,
            min_separation,
            threshold,
            out,
        } => {
            let opts = PropagateOptions {
                z_list: z.as_deref().map(commands::parse_z_list).transpose()?,
                localize,
                min_separation,
                threshold,
                out,
            };
            println!("{}", commands::propagate(&result, &opts)?.display());
        }
        Command::Report { dirs, out } => {
            println!("{}", commands::report(&dirs, &out)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
