//! `epiwave` command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure
//! (non-convergence), 3 configuration error.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ConfigLayer, RunConfig, OUT_DIR_ENV};

#[derive(Parser, Debug)]
#[command(
    name = "epiwave",
    version,
    about = "Endemic/epidemic transition detection from daily case counts"
)]
struct Cli {
    /// JSON file of run settings; its values override the flags
    #[arg(long = "config", global = true, value_name = "JSON")]
    config_file: Option<PathBuf>,

    #[command(flatten)]
    flags: ConfigLayer,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize --input into cases.csv (date,value)
    Ingest,
    /// Trailing-window indicators of --input into indicators.csv
    Indicators,
    /// Fit the PCA on an indicator CSV into pca_model.json
    Pca {
        #[arg(long, value_name = "CSV")]
        indicators: PathBuf,
    },
    /// First-component score of an indicator CSV into score.csv
    Score {
        #[arg(long, value_name = "CSV")]
        indicators: PathBuf,
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
    },
    /// Threshold events of a score CSV, scored against --breakpoints
    Detect {
        #[arg(long, value_name = "CSV")]
        score: PathBuf,
    },
    /// Piecewise endemic/epidemic fit of --input over --breakpoints
    Fit {
        /// Move interior breakpoints by up to this many days to lower the SSR
        #[arg(long, value_name = "DAYS")]
        refine: Option<usize>,
    },
    /// Synthetic series from a JSON spec into cases.csv and truth files
    Synth {
        #[arg(long, value_name = "JSON")]
        spec: PathBuf,
    },
    /// All stages from --input
    Pipeline,
}

#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Numerical(anyhow::Error),
    Config(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Config(_) => 3,
        }
    }

    pub(crate) fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Numerical(e) | Failure::Config(e) => e,
        }
    }
}

impl From<epiwave::Error> for Failure {
    fn from(e: epiwave::Error) -> Self {
        use epiwave::Error as E;
        let numerical = match &e {
            E::NotSymmetric(_) | E::InvalidParameters(_) => true,
            E::Segment { source, .. } => {
                matches!(**source, E::NotSymmetric(_) | E::InvalidParameters(_))
            }
            _ => false,
        };
        if numerical {
            Failure::Numerical(e.into())
        } else {
            Failure::Input(e.into())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.into())
    }
}

pub type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let cfg = match RunConfig::resolve(cli.flags, cli.config_file.as_deref(), env_out) {
        Ok(cfg) => cfg,
        Err(e) => return report(Failure::Config(e)),
    };
    let result = match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Indicators => commands::indicators(&cfg),
        Command::Pca { indicators } => commands::pca(&cfg, &indicators),
        Command::Score { indicators, model } => commands::score(&cfg, &indicators, &model),
        Command::Detect { score } => commands::detect(&cfg, &score),
        Command::Fit { refine } => commands::fit(&cfg, refine),
        Command::Synth { spec } => commands::synth(&cfg, &spec),
        Command::Pipeline => commands::pipeline(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    eprintln!("error: {:#}", f.error());
    ExitCode::from(f.code())
}
