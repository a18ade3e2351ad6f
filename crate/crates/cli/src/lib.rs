//! Operator-facing command line for the guiding pipeline: data generation,
//! training, evaluation, one-shot planning, and closed-loop simulation.
//!
//! One binary, five subcommands, shared flags. Parameters come from a named
//! profile or a TOML file, then `--set key=value` overrides individual
//! leaves; unknown keys are rejected. Every run writes its files through a
//! manifest so that (inputs, seed) reproduce outputs hash for hash.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad flags,
//! malformed files, invalid parameters), 3 for runtime failures (missing
//! inputs, planner or training errors).

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use guide_core::config::ConfigError;
use guide_core::predictors::DatasetKind;
use guide_core::sim::CollectionMode;
use guide_core::Params;

pub mod commands;
pub mod outdir;
pub mod plots;
pub mod snapshot;

/// Golden-ratio stride separating derived seed streams.
pub const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, malformed configuration or snapshot files, invalid
    /// parameter values. Exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failures while doing the work: missing inputs, solver or training
    /// errors, unwritable outputs. Exit code 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

macro_rules! runtime_from {
    ($($ty:ty),+ $(,)?) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )+};
}

runtime_from!(
    std::io::Error,
    guide_core::base::BaseError,
    guide_core::nn::NnError,
    guide_core::mpc::MpcError,
    guide_core::pathsmooth::PathError,
    guide_core::predictors::PredictError,
    guide_core::sim::SimError,
    guide_core::worldmap::MapError,
    guide_core::worldmap::PlanError,
);

/// Which side of the interaction a data command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Human motion: scripted leader episodes, 4-channel windows.
    Human,
    /// Robot dynamics: random command and pulse episodes, 7-channel windows.
    Robot,
}

impl Mode {
    pub fn tag(&self) -> &'static str {
        match self {
            Mode::Human => "human",
            Mode::Robot => "robot",
        }
    }

    /// Table label prefix: human motion predictor or robot dynamics model.
    pub fn model_label(&self) -> &'static str {
        match self {
            Mode::Human => "HMP",
            Mode::Robot => "RDM",
        }
    }

    pub fn dataset_kind(&self) -> DatasetKind {
        match self {
            Mode::Human => DatasetKind::Human,
            Mode::Robot => DatasetKind::Robot,
        }
    }

    pub fn collection(&self) -> CollectionMode {
        match self {
            Mode::Human => CollectionMode::HumanData,
            Mode::Robot => CollectionMode::RobotData,
        }
    }

    fn seed_salt(&self) -> u64 {
        match self {
            Mode::Human => 0x6875_6d61_6e00_0001,
            Mode::Robot => 0x726f_626f_7400_0002,
        }
    }
}

/// Seed for one subject's collection episode, separated by mode so human
/// and robot logs of the same subject do not share random streams.
pub fn subject_seed(seed: u64, subject: usize, mode: Mode) -> u64 {
    seed ^ (subject as u64 + 1).wrapping_mul(SEED_STRIDE) ^ mode.seed_salt()
}

#[derive(Debug, Parser)]
#[command(name = "guide", version, about = "Data-driven guiding pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Parameter profile: nominal or fast.
    #[arg(long, global = true, default_value = "nominal", conflicts_with = "config")]
    pub profile: String,

    /// Parameter file (TOML, may be partial); replaces the profile.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one parameter leaf, e.g. --set train.epochs=30. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,

    /// Master seed; every derived stream is a documented function of it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output directory; receives files plus manifest.json.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run scripted data-collection episodes and write raw logs.
    Generate {
        /// Which collection protocol to run.
        #[arg(long, value_enum, default_value_t = Mode::Human)]
        mode: Mode,
        /// Occupancy grid file shaping the leader's course; needs --goal.
        #[arg(long, value_name = "FILE")]
        map: Option<PathBuf>,
        /// Start position "x,y" in meters.
        #[arg(long, default_value = "0,0")]
        start: String,
        /// Course goal "x,y"; defaults to straight ahead, sized so the
        /// leader never runs out of path.
        #[arg(long, value_name = "X,Y")]
        goal: Option<String>,
    },
    /// Train sequence models on collected logs.
    Train {
        /// Directory of raw logs (or a single log file).
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Human)]
        mode: Mode,
    },
    /// K-fold cross-validation of models against baselines.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Human)]
        mode: Mode,
    },
    /// Closed-loop guided episodes with summary and plots.
    Simulate {
        /// Occupancy grid file; omitted means open ground.
        #[arg(long, value_name = "FILE")]
        map: Option<PathBuf>,
        /// Start position "x,y" in meters.
        #[arg(long, default_value = "0,0")]
        start: String,
        /// Goal position "x,y" in meters.
        #[arg(long, default_value = "10,0")]
        goal: String,
        /// Directory of trained weight files; omitted means reference
        /// models matched to the synthetic plants.
        #[arg(long, value_name = "DIR")]
        weights: Option<PathBuf>,
    },
    /// One-shot waypoint selection and planning from a state snapshot.
    Plan {
        /// Snapshot file (TOML) with positions, velocities, and goal.
        #[arg(long, value_name = "FILE")]
        snapshot: PathBuf,
        #[arg(long, value_name = "DIR")]
        weights: Option<PathBuf>,
    },
}

/// Resolves profile, file, and overrides into the final parameter tree.
pub fn load_params(cli: &Cli) -> Result<Params, CliError> {
    let mut params = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "config file {} does not exist",
                    path.display()
                )));
            }
            Params::load(path).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => Params::profile(&cli.profile)?,
    };
    for pair in &cli.sets {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            CliError::Config(format!("--set expects KEY=VALUE, got '{pair}'"))
        })?;
        params.set(key.trim(), value.trim())?;
    }
    Ok(params)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let params = load_params(cli)?;
    match &cli.command {
        Command::Generate { mode, map, start, goal } => commands::generate::run(
            &params,
            cli.seed,
            &cli.out,
            *mode,
            map.as_deref(),
            start,
            goal.as_deref(),
        ),
        Command::Train { data, mode } => {
            commands::train::run(&params, cli.seed, &cli.out, *mode, data)
        }
        Command::Evaluate { data, mode } => {
            commands::evaluate::run(&params, cli.seed, &cli.out, *mode, data)
        }
        Command::Simulate { map, start, goal, weights } => commands::simulate::run(
            &params,
            cli.seed,
            &cli.out,
            map.as_deref(),
            start,
            goal,
            weights.as_deref(),
        ),
        Command::Plan { snapshot, weights } => {
            commands::plan::run(&params, cli.seed, &cli.out, snapshot, weights.as_deref())
        }
    }
}
