//! `conflictwatch`: command-line front end for the tracking and conflict engine.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "conflictwatch",
    version,
    about = "Road-user tracking and traffic conflict detection"
)]
struct Cli {
    /// Log filter, e.g. `info` or `conflictwatch=debug` (RUST_LOG also works).
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML pipeline configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop detections below this confidence.
    #[arg(long)]
    pub min_confidence: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track a detection stream and write a CSV track dump.
    Track {
        #[command(flatten)]
        common: Common,
        /// Detection stream (JSON lines); `-` or absent reads stdin.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Track dump path; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the full pipeline and write conflict events as JSON lines.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Calibration file: `{"H": [9 values]}` or `{"points": [...]}`.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score detections against ground truth.
    ///
    /// Either runs scenarios (builtin or files) end to end, or evaluates a
    /// recorded stream against its truth manifest.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Builtin scenario name or scenario file; repeatable. Defaults to the builtin suite.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Recorded detection stream (requires --truth and --calibration).
        #[arg(long, requires_all = ["truth", "calibration"], conflicts_with = "scenarios")]
        input: Option<PathBuf>,
        /// Truth manifest written by `simulate`.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Frames a detection may fall outside a labelled range.
        #[arg(long, default_value_t = conflictwatch::evaluation::DEFAULT_TOLERANCE)]
        tolerance: u64,
        /// JSON report path; the human summary always goes to stderr.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render scenarios to detection streams plus truth manifests.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Builtin scenario name or scenario file; repeatable. Defaults to the builtin suite.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate a parameter grid on scenarios and write a ranked CSV table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// TOML grid: lists for tau_d, proximity, min_angle, min_speed, drop_ratio.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[arg(long, default_value_t = conflictwatch::evaluation::DEFAULT_TOLERANCE)]
        tolerance: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut logger =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if let Some(filter) = &cli.log {
        logger.parse_filters(filter);
    }
    logger.init();

    let result = match cli.command {
        Command::Track {
            common,
            input,
            output,
        } => commands::track(&common, input, output),
        Command::Detect {
            common,
            input,
            calibration,
            output,
        } => commands::detect(&common, input, calibration, output),
        Command::Evaluate {
            common,
            scenarios,
            input,
            truth,
            calibration,
            tolerance,
            output,
        } => match input {
            Some(input) => commands::evaluate_stream(
                &common,
                input,
                truth.expect("clap enforces --truth"),
                calibration.expect("clap enforces --calibration"),
                tolerance,
                output,
            ),
            None => commands::evaluate_scenarios(&common, &scenarios, tolerance, output),
        },
        Command::Simulate {
            common,
            scenarios,
            output,
        } => commands::simulate(&common, &scenarios, output),
        Command::Sweep {
            common,
            grid,
            scenarios,
            tolerance,
            output,
        } => commands::sweep(&common, grid, &scenarios, tolerance, output),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
