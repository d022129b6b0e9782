//! `indireg`: phantoms, forward simulation, indirect registration, baselines
//! and suite runs from the command line.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 I/O or file
//! format failure, 4 numerical failure during registration.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Global;
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "indireg",
    version,
    about = "Indirect diffeomorphic registration against tomographic data"
)]
struct Cli {
    /// Output directory (default `out`, or `out/suiteN` for suites).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Noise seed when the config does not set one.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads. Computation is sequential; the value is validated and recorded.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Write the per-iteration progress log as CSV.
    #[arg(long = "log-csv", global = true)]
    log_csv: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterize a phantom to IGRD and PGM.
    Phantom {
        /// One of: shepp-logan, shepp-logan-missing, shepp-logan-extra, shepp-logan-deformed,
        /// single-star-template, single-star-target, six-stars-template, six-stars-target.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        size: usize,
    },
    /// Ray transform of an IGRD image.
    Project {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        angles: usize,
        #[arg(long)]
        detectors: usize,
    },
    /// Add white Gaussian noise at an exact SNR.
    Noise {
        #[arg(long)]
        input: PathBuf,
        /// Target SNR in dB.
        #[arg(long)]
        snr: f64,
    },
    /// Run an experiment described by a TOML config.
    Register { config: PathBuf },
    /// Filtered back projection with a Hamming filter.
    Fbp {
        #[arg(long)]
        input: PathBuf,
        /// Image size in pixels per side.
        #[arg(long)]
        size: usize,
        #[arg(long = "freq-scaling", default_value_t = 0.4)]
        freq_scaling: f64,
    },
    /// Total-variation reconstruction.
    Tv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
    },
    /// SSIM and PSNR of an image against a reference.
    Evaluate {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Run test suite 1, 2, 3 or 4.
    Suite {
        id: u32,
        /// Full resolutions instead of the downscaled defaults.
        #[arg(long)]
        full: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let global = Global {
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads,
        log_csv: cli.log_csv,
    };
    match cli.command {
        Command::Phantom { kind, size } => commands::phantom(&kind, size, &global),
        Command::Project {
            input,
            angles,
            detectors,
        } => commands::project(&input, angles, detectors, &global),
        Command::Noise { input, snr } => commands::noise(&input, snr, &global),
        Command::Register { config } => commands::register(&config, &global),
        Command::Fbp {
            input,
            size,
            freq_scaling,
        } => commands::fbp_cmd(&input, size, freq_scaling, &global),
        Command::Tv { input, size, mu, iters } => commands::tv_cmd(&input, size, mu, iters, &global),
        Command::Evaluate {
            result,
            reference,
            gamma,
            sigma,
        } => commands::evaluate(&result, &reference, gamma, sigma, &global),
        Command::Suite { id, full } => commands::suite(id, full, &global),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
