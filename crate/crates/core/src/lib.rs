//! Building blocks for a leash-guided walking assistant: a wheeled or legged
//! robot leads a person by a tensioned leash, predicts how both bodies will
//! respond to tension and drive commands, and plans tension and velocity
//! commands that keep the pair synchronized along a planned route.
//!
//! The crate is organized as a pipeline:
//!
//! * [`base`] - planar state/tension types, timebase, finite differences
//! * [`worldmap`] - occupancy grids and deterministic grid planning
//! * [`pathsmooth`] - path pruning, spline smoothing, speed-adaptive waypoints
//! * [`nn`] - small sequence regressors (CNN / LSTM / TCN) with exact
//!   backpropagation, Adam, and binary weight serialization
//! * [`predictors`] - interaction logs, windowed datasets, training and
//!   k-fold evaluation against analytic baselines
//! * [`mpc`] - sampling-based receding-horizon planners for leash tension
//!   and robot velocity commands
//! * [`sim`] - synthetic human/robot plants, leash coupling, data-collection
//!   protocols and closed-loop guided episodes
//! * [`config`] - the documented parameter schema shared by all stages

pub mod base;
pub mod config;
pub mod mpc;
pub mod nn;
pub mod pathsmooth;
pub mod predictors;
pub mod sim;
pub mod worldmap;

pub use base::{PlanarState, TensionSample, Timebase, UnitVecYaw, Vec3};
pub use config::{ConfigError, Params};
pub use mpc::{
    HumanPlanProblem, HumanPlanSolution, LeashPlan, LeashState, RobotPlanProblem,
    RobotPlanSolution, ShootingConfig,
};
pub use nn::{Architecture, ModelSpec, SeqModel, Tensor2};
pub use pathsmooth::{AnalyticPath, WaypointPlan};
pub use predictors::{Dataset, DatasetKind, InteractionLog};
pub use sim::{
    EpisodeTrace, GuidedConfig, HumanAgentModel, LeashModel, RobotResponseModel, ScenarioSpec,
};
pub use worldmap::{DiscretePath, GridMap};
