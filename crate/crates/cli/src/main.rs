use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qre_cli::commands::{cmd_gen_data, cmd_report, cmd_sweep, cmd_train, TrainMode};

/// Quality-resilient snapshot ensembles: train distortion experts in one run
/// and sweep their accuracy across noise and blur severities.
#[derive(Parser)]
#[command(name = "qre", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic shape dataset and save it as a QRDS file.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Output QRDS path (its directory must exist).
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train an ensemble and write snapshots, a manifest, and a training log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate ensembles across the distortion grid and write a CSV report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path (its directory must exist).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// One or more ensemble manifest files; each file stem becomes the
        /// model tag in the report.
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Render a sweep CSV as an SVG line chart (one chart per family).
    Report {
        /// Output SVG path (its directory must exist).
        #[arg(long)]
        out: PathBuf,
        /// Input sweep CSV.
        csv: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gspecialist,
    Baseline,
}

/// THREADS=N pins the rayon pool size; THREADS=1 forces the fully
/// deterministic single-threaded mode. Unset leaves the default pool.
fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| format!("THREADS must be a positive integer, got {value:?}"))?;
    if n == 0 {
        return Err("THREADS must be >= 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot configure thread pool: {e}"))
}

fn main() -> ExitCode {
    if let Err(message) = init_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, out, seed } => cmd_gen_data(&config, &out, seed),
        Command::Train {
            config,
            mode,
            out,
            seed,
        } => {
            let mode = match mode {
                ModeArg::Gspecialist => TrainMode::Gspecialist,
                ModeArg::Baseline => TrainMode::Baseline,
            };
            cmd_train(&config, mode, &out, seed)
        }
        Command::Sweep {
            config,
            out,
            seed,
            manifests,
        } => cmd_sweep(&config, &manifests, &out, seed),
        Command::Report { out, csv } => cmd_report(&csv, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
