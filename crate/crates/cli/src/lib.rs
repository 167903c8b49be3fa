//! `gaitrisk` command line: synthetic cohorts, preprocessing, subject-wise
//! evaluation, model export and attribution maps, all driven by one root seed.

mod commands;
pub mod config;
pub mod error;
mod rundir;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ExplainSettings, RunConfig};
pub use commands::{load_network, SavedModel};
pub use error::{CliError, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "gaitrisk", version, about = "Running-injury risk from stance-phase gait kinematics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort (angle CSVs, manifest, ground-truth sidecar)
    Synth {
        #[command(flatten)]
        common: Common,
        /// Healthy subjects
        #[arg(long)]
        healthy: Option<usize>,
        /// PFPS subjects
        #[arg(long)]
        pfps: Option<usize>,
        /// ITBS subjects
        #[arg(long)]
        itbs: Option<usize>,
        #[arg(long)]
        records_per_subject: Option<usize>,
        /// Observation noise in degrees
        #[arg(long)]
        noise: Option<f64>,
        /// Give every class the healthy gait profile
        #[arg(long)]
        no_effects: bool,
    },
    /// Load and validate a dataset; writes ingest.json
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Detect gait events and cut stance phases; writes segments.json
    Segment {
        #[command(flatten)]
        common: Common,
    },
    /// Extract point-value features; writes features.csv and feature_schema.json
    Features {
        #[command(flatten)]
        common: Common,
    },
    /// Fit each model on every subject of a task; writes models/*.json (+.bin)
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Subject-wise k-fold evaluation; writes report.json and report.csv
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Attribution maps on one test fold; writes maps/*.csv and maps/*.svg
    Explain {
        #[command(flatten)]
        common: Common,
    },
    /// Merge report.json files of earlier runs into one table
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories or report.json files
        #[arg(long = "from", required = true, num_args = 1..)]
        from: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file; its values override flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset manifest.json (synthetic data when omitted)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// PFPS, ITBS or PFPS_ITBS (comma-separated)
    #[arg(long, value_delimiter = ',')]
    task: Vec<String>,
    /// time_series, ts_plus_points or points (comma-separated)
    #[arg(long, value_delimiter = ',')]
    regime: Vec<String>,
    /// knn, svm_l, svm_p, gp, dt, adb, rf, mlp, cnn, lstm (comma-separated)
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    /// Nested grid search instead of the shipped defaults
    #[arg(long)]
    grid: bool,
    #[arg(long)]
    folds: Option<usize>,
    /// Training epochs of the deep models
    #[arg(long)]
    epochs: Option<usize>,
    /// Worker threads for independent fits
    #[arg(long)]
    workers: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Common {
    fn overrides(&self) -> error::Result<config::Overrides> {
        let mut o = config::Overrides::new();
        if let Some(v) = &self.out {
            config::set(&mut o, "out", v);
        }
        if let Some(v) = &self.manifest {
            config::set(&mut o, "manifest", v);
        }
        if let Some(v) = self.seed {
            config::set(&mut o, "seed", v);
        }
        if !self.task.is_empty() {
            let t = self.task.iter().map(|s| config::parse_task(s)).collect::<error::Result<Vec<_>>>()?;
            config::set(&mut o, "tasks", t);
        }
        if !self.regime.is_empty() {
            let r = self.regime.iter().map(|s| config::parse_regime(s)).collect::<error::Result<Vec<_>>>()?;
            config::set(&mut o, "regimes", r);
        }
        if !self.models.is_empty() {
            let m = self.models.iter().map(|s| config::parse_model(s)).collect::<error::Result<Vec<_>>>()?;
            config::set(&mut o, "models", m);
        }
        if self.grid {
            config::set(&mut o, "grid", true);
        }
        if let Some(v) = self.folds {
            config::set(&mut o, "folds", v);
        }
        if let Some(v) = self.epochs {
            config::set(&mut o, "deep.epochs", v);
        }
        if let Some(v) = self.workers {
            config::set(&mut o, "workers", v);
        }
        Ok(o)
    }

    fn resolve(&self, extra: config::Overrides) -> error::Result<RunConfig> {
        let mut o = self.overrides()?;
        o.extend(extra);
        config::resolve(o, self.config.as_deref())
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

fn dispatch(cmd: Command) -> error::Result<()> {
    match cmd {
        Command::Synth { common, healthy, pfps, itbs, records_per_subject, noise, no_effects } => {
            init_logging(common.verbose);
            let mut o = config::Overrides::new();
            let mut synth = serde_json::Map::new();
            for (key, v) in [("healthy_subjects", healthy), ("pfps_subjects", pfps), ("itbs_subjects", itbs), ("records_per_subject", records_per_subject)] {
                if let Some(v) = v {
                    synth.insert(key.into(), v.into());
                }
            }
            if let Some(n) = noise {
                synth.insert("noise_sigma".into(), n.into());
            }
            if !synth.is_empty() {
                o.insert("synth".into(), synth.into());
            }
            let cfg = common.resolve(o)?;
            commands::synth(&cfg, no_effects)
        }
        Command::Ingest { common } => run_with(&common, commands::ingest),
        Command::Segment { common } => run_with(&common, commands::segment),
        Command::Features { common } => run_with(&common, commands::features),
        Command::Train { common } => run_with(&common, commands::train),
        Command::Evaluate { common } => run_with(&common, commands::evaluate),
        Command::Explain { common } => run_with(&common, commands::explain),
        Command::Report { common, from } => {
            init_logging(common.verbose);
            let cfg = common.resolve(config::Overrides::new())?;
            commands::report(&cfg, &from)
        }
    }
}

fn run_with(common: &Common, f: fn(&RunConfig) -> error::Result<()>) -> error::Result<()> {
    init_logging(common.verbose);
    f(&common.resolve(config::Overrides::new())?)
}

/// Parses `args` (program name first) and runs the subcommand; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{}", e.render());
            eprintln!("{}", CliError::usage(e.kind().to_string()).to_json());
            return ErrorKind::UsageError.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.kind.exit_code()
        }
    }
}
