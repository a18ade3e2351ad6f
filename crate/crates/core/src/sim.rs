//! Closed-loop world model replacing hardware and human subjects: synthetic
//! human agents with individual comfortable speeds, a lagged robot velocity
//! plant, the leash coupling between them, the scripted data-collection
//! protocols the predictors train on, and the full guided episode loop that
//! chains speed prediction, waypoint selection, and both planners every
//! control cycle.
//!
//! Both plants are first-order lag systems, the simplest dynamics in which
//! past tensions integrate into the current velocity. The leash is massless
//! and inextensible: commanded tension is realized instantly while the
//! separation exceeds the slack length and drops to zero below it.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::base::{
    stream_rng, BaseError, LeashEnd, PlanarState, TensionSample, Timebase, Vec3,
};
use crate::mpc::{
    robot_tension_forecast, shifted_commands, solve_human_plan, solve_robot_plan,
    HumanPlanProblem, LeashPlan, LeashState, MpcError, RobotPlanProblem, ShootingConfig,
};
use crate::nn::{NnError, SeqModel, Tensor2};
use crate::pathsmooth::{
    plan_smooth_path, select_waypoints, spline_interpolate, AnalyticPath, ArcLengthPath,
    PathError,
};
use crate::predictors::{human_row, robot_row, DatasetKind, InteractionLog, LogRecord, PredictError};
use crate::worldmap::{plan_dijkstra, GridMap, MapError, PlanError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Base(#[from] BaseError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Log(#[from] PredictError),
}

/// A synthetic walker. Speed saturates at the agent's comfortable speed no
/// matter how hard the leash pulls, which is what makes subjects differ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanAgentModel {
    /// Saturation speed in m/s. Zero models a person refusing to move.
    pub comfortable_speed: f64,
    /// Speed gained per newton of pull, (m/s)/N.
    pub responsiveness: f64,
    /// First-order lag constant in seconds.
    pub time_constant: f64,
    /// 0 keeps the current heading, 1 turns fully into the pull each step.
    pub heading_compliance: f64,
    /// Velocity noise standard deviation in m/s (0 disables sampling).
    pub noise_std: f64,
}

impl HumanAgentModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.comfortable_speed.is_finite() && self.comfortable_speed >= 0.0) {
            return Err(SimError::Scenario(format!(
                "comfortable speed {} must be finite and >= 0",
                self.comfortable_speed
            )));
        }
        if !(self.responsiveness.is_finite() && self.responsiveness >= 0.0) {
            return Err(SimError::Scenario("responsiveness must be >= 0".into()));
        }
        if !(self.time_constant.is_finite() && self.time_constant > 0.0) {
            return Err(SimError::Scenario("time constant must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.heading_compliance) {
            return Err(SimError::Scenario("heading compliance must be in [0, 1]".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(SimError::Scenario("noise std must be >= 0".into()));
        }
        Ok(())
    }
}

/// The robot plant: commanded velocity tracked through a first-order lag,
/// with leash tension bleeding speed off through a diagonal discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotResponseModel {
    /// Command tracking lag in seconds.
    pub time_constant: f64,
    /// Velocity lost per newton of leash tension, per axis, (m/s)/N.
    pub tension_discount: [f64; 2],
    /// Per-component command magnitude limits (x, y, yaw rate).
    pub command_bounds: [f64; 3],
    /// Velocity noise standard deviation in m/s (0 disables sampling).
    pub noise_std: f64,
}

impl RobotResponseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.time_constant.is_finite() && self.time_constant > 0.0) {
            return Err(SimError::Scenario("time constant must be > 0".into()));
        }
        if self.tension_discount.iter().any(|d| !d.is_finite()) {
            return Err(SimError::Scenario("tension discount must be finite".into()));
        }
        if self.command_bounds.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(SimError::Scenario("command bounds must be > 0".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(SimError::Scenario("noise std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Massless leash: realizes the commanded tension instantly when taut and
/// transmits nothing when the pair is closer than the slack length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeashModel {
    pub slack_length: f64,
}

impl LeashModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.slack_length.is_finite() && self.slack_length > 0.0) {
            return Err(SimError::Scenario("slack length must be > 0".into()));
        }
        Ok(())
    }
}

/// Instantaneous leash geometry and the tension it actually transmits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeashCoupling {
    pub length: f64,
    /// Unit leash direction from the robot toward the human, matching the
    /// shared tension convention.
    pub direction: Vec3,
    pub tension: f64,
}

impl LeashModel {
    /// Couples the two bodies. `fallback_direction` (unit) covers the
    /// degenerate coincident case where the axis is undefined.
    pub fn couple(
        &self,
        human: Vec3,
        robot: Vec3,
        commanded_tension: f64,
        fallback_direction: Vec3,
    ) -> LeashCoupling {
        let delta = human - robot;
        let length = delta.norm();
        let direction = if length > 1e-9 { delta / length } else { fallback_direction };
        let tension = if length >= self.slack_length { commanded_tension.max(0.0) } else { 0.0 };
        LeashCoupling { length, direction, tension }
    }
}

/// Advances the human plant one control period under the pulling force.
pub fn step_human(
    agent: &HumanAgentModel,
    state: &PlanarState,
    force: Vec3,
    timebase: &Timebase,
    rng: &mut impl Rng,
) -> PlanarState {
    let t = timebase.period();
    let alpha = (t / agent.time_constant).min(1.0);
    let magnitude = force.norm();
    let speed = (agent.responsiveness * magnitude).clamp(0.0, agent.comfortable_speed);
    let desired = if speed > 0.0 && magnitude > 1e-12 {
        let pull = force / magnitude;
        let heading = if state.v.norm() > 1e-9 { state.v / state.v.norm() } else { pull };
        let mut dir = heading + agent.heading_compliance * (pull - heading);
        let n = dir.norm();
        if n < 1e-9 {
            dir = pull;
        } else {
            dir /= n;
        }
        dir * speed
    } else {
        Vec3::zeros()
    };
    let mut v = state.v + (desired - state.v) * alpha;
    if agent.noise_std > 0.0 {
        v.x += agent.noise_std * rng.sample::<f64, _>(StandardNormal);
        v.y += agent.noise_std * rng.sample::<f64, _>(StandardNormal);
    }
    let x = state.x + v * t;
    let theta = if v.norm() > 1e-9 { v.y.atan2(v.x) } else { state.theta };
    PlanarState::new(x, v, theta)
}

/// Advances the robot plant one control period under a velocity command and
/// the leash tension acting on it.
pub fn step_robot(
    model: &RobotResponseModel,
    state: &PlanarState,
    command: [f64; 3],
    force: Vec3,
    timebase: &Timebase,
    rng: &mut impl Rng,
) -> PlanarState {
    let t = timebase.period();
    let alpha = (t / model.time_constant).min(1.0);
    let b = model.command_bounds;
    let u = [
        command[0].clamp(-b[0], b[0]),
        command[1].clamp(-b[1], b[1]),
        command[2].clamp(-b[2], b[2]),
    ];
    let desired = Vec3::new(
        u[0] - model.tension_discount[0] * force.x,
        u[1] - model.tension_discount[1] * force.y,
        0.0,
    );
    let mut v = state.v + (desired - state.v) * alpha;
    if model.noise_std > 0.0 {
        v.x += model.noise_std * rng.sample::<f64, _>(StandardNormal);
        v.y += model.noise_std * rng.sample::<f64, _>(StandardNormal);
    }
    let x = state.x + v * t;
    PlanarState::new(x, v, state.theta + u[2] * t)
}

/// A complete simulated setting: world geometry, the pair of plants, and
/// the episode clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Occupancy grid as text; absent means an open plane.
    pub map_text: Option<String>,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub episode_seconds: f64,
    pub seed: u64,
    /// Separation the pair starts at and the protocols try to hold.
    pub nominal_separation: f64,
    pub agent: HumanAgentModel,
    pub robot: RobotResponseModel,
    pub leash: LeashModel,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.episode_seconds.is_finite() && self.episode_seconds > 0.0) {
            return Err(SimError::Scenario("episode length must be > 0".into()));
        }
        let finite2 = |p: &[f64; 2]| p.iter().all(|v| v.is_finite());
        if !finite2(&self.start) || !finite2(&self.goal) {
            return Err(SimError::Scenario("start and goal must be finite".into()));
        }
        let d = ((self.goal[0] - self.start[0]).powi(2) + (self.goal[1] - self.start[1]).powi(2))
            .sqrt();
        if d < 1e-9 {
            return Err(SimError::Scenario("goal coincides with start".into()));
        }
        if !(self.nominal_separation.is_finite()
            && self.nominal_separation >= self.leash.slack_length)
        {
            return Err(SimError::Scenario(
                "nominal separation must be at least the slack length".into(),
            ));
        }
        self.agent.validate()?;
        self.robot.validate()?;
        self.leash.validate()?;
        if let Some(text) = &self.map_text {
            GridMap::parse(text)?;
        }
        Ok(())
    }
}

/// The geometric course for a scenario: the smoothed path from start to
/// goal plus the obstacle points the planners must clear.
#[derive(Debug, Clone)]
pub struct Course {
    pub path: AnalyticPath,
    pub obstacles: Vec<[f64; 2]>,
}

/// Plans the course. With a map the grid path is pruned and splined after
/// inflating obstacles by `inflation_radius`; without one the course is the
/// straight segment from start to goal.
pub fn plan_course(
    scenario: &ScenarioSpec,
    inflation_radius: f64,
    wrps_threshold: f64,
) -> Result<Course, SimError> {
    scenario.validate()?;
    let start = Vec3::new(scenario.start[0], scenario.start[1], 0.0);
    let goal = Vec3::new(scenario.goal[0], scenario.goal[1], 0.0);
    match &scenario.map_text {
        Some(text) => {
            let map = GridMap::parse(text)?;
            let inflated = map.inflate_obstacles(inflation_radius)?;
            let discrete = plan_dijkstra(&inflated, start, goal)?;
            let path = plan_smooth_path(&inflated, &discrete, wrps_threshold)?;
            let obstacles =
                map.extract_obstacle_points().iter().map(|p| [p.x, p.y]).collect();
            Ok(Course { path, obstacles })
        }
        None => {
            let path = spline_interpolate(&[start, goal])?;
            Ok(Course { path, obstacles: Vec::new() })
        }
    }
}

fn path_start_tangent(path: &AnalyticPath) -> Vec3 {
    let len = path.total_length();
    let probe = (0.05f64).min(len);
    let a = path.point_at(0.0).expect("arclength 0 is always valid");
    let b = path.point_at(probe).expect("probe clamped to path length");
    let d = b - a;
    let n = d.norm();
    if n > 1e-9 {
        d / n
    } else {
        Vec3::new(1.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectionMode {
    /// A scripted leader walks the course while tension resamples every
    /// 10 s; the human plant follows. Trains the human motion model.
    HumanData,
    /// Random constant velocity commands with randomized force pulses.
    /// Trains the robot dynamics model.
    RobotData,
}

/// Tension resample interval for the human protocol, in seconds.
pub const TENSION_RESAMPLE_SECONDS: f64 = 10.0;
/// Tension magnitude range sampled by both protocols, in newtons.
pub const PROTOCOL_TENSION_RANGE: (f64, f64) = (2.0, 20.0);

/// Runs one scripted data-collection episode and returns the raw log.
pub fn run_collection_protocol(
    scenario: &ScenarioSpec,
    mode: CollectionMode,
    subject_id: &str,
    timebase: &Timebase,
    smoothing_window: usize,
) -> Result<InteractionLog, SimError> {
    scenario.validate()?;
    let steps = timebase.steps_for(scenario.episode_seconds);
    if steps < 2 {
        return Err(SimError::Scenario("episode too short to log".into()));
    }
    let records = match mode {
        CollectionMode::HumanData => collect_human_data(scenario, timebase, steps)?,
        CollectionMode::RobotData => collect_robot_data(scenario, timebase, steps),
    };
    Ok(InteractionLog::new(subject_id, *timebase, records, smoothing_window)?)
}

fn collect_human_data(
    scenario: &ScenarioSpec,
    timebase: &Timebase,
    steps: usize,
) -> Result<Vec<LogRecord>, SimError> {
    let course = plan_course(scenario, 0.0, 0.05)?;
    let path = &course.path;
    let period = timebase.period();
    let tangent = path_start_tangent(path);
    let start = Vec3::new(scenario.start[0], scenario.start[1], 0.0);
    let mut human = PlanarState::new(start, Vec3::zeros(), tangent.y.atan2(tangent.x));
    let mut s = scenario.nominal_separation.min(path.total_length());
    let mut robot_pos = path.point_at(s).expect("arclength within path");
    let mut rng_tension = stream_rng(scenario.seed, "sim.protocol.tension");
    let mut rng_noise = stream_rng(scenario.seed, "sim.human.noise");
    let resample_every = timebase.steps_for(TENSION_RESAMPLE_SECONDS).max(1);
    let (f_lo, f_hi) = PROTOCOL_TENSION_RANGE;
    // The leader holds the nominal separation with a proportional speed
    // correction so the leash never goes slack while tension varies.
    let leader_gain = 1.5;
    let cruise = scenario.agent.comfortable_speed.max(0.3);
    let mut commanded = 0.0;
    let mut last_dir = -tangent;
    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        if k % resample_every == 0 {
            commanded = rng_tension.gen_range(f_lo..=f_hi);
        }
        let coupling = scenario.leash.couple(human.x, robot_pos, commanded, last_dir);
        last_dir = coupling.direction;
        let sample = TensionSample::new(coupling.tension, coupling.direction)?;
        let lead_speed = (cruise
            + leader_gain * (scenario.nominal_separation - coupling.length))
            .clamp(0.0, 2.0);
        let lead_velocity = path_tangent_at(path, s) * lead_speed;
        records.push(LogRecord {
            t: k as f64 * period,
            robot_position: robot_pos,
            command: [lead_velocity.x, lead_velocity.y, 0.0],
            tension: coupling.tension,
            leash_dir: coupling.direction,
            leash_len: coupling.length,
        });
        human = step_human(
            &scenario.agent,
            &human,
            sample.force_on(LeashEnd::Human),
            timebase,
            &mut rng_noise,
        );
        s = (s + lead_speed * period).min(path.total_length());
        robot_pos = path.point_at(s).expect("arclength within path");
    }
    Ok(records)
}

fn path_tangent_at(path: &AnalyticPath, s: f64) -> Vec3 {
    let len = path.total_length();
    let h = 0.02f64.min(len * 0.5);
    let a = path.point_at((s - h).max(0.0)).expect("clamped");
    let b = path.point_at((s + h).min(len)).expect("clamped");
    let d = b - a;
    let n = d.norm();
    if n > 1e-9 {
        d / n
    } else {
        Vec3::new(1.0, 0.0, 0.0)
    }
}

fn collect_robot_data(
    scenario: &ScenarioSpec,
    timebase: &Timebase,
    steps: usize,
) -> Vec<LogRecord> {
    let period = timebase.period();
    let mut robot = PlanarState::new(
        Vec3::new(scenario.start[0], scenario.start[1], 0.0),
        Vec3::zeros(),
        0.0,
    );
    let mut rng_cmd = stream_rng(scenario.seed, "sim.protocol.command");
    let mut rng_pulse = stream_rng(scenario.seed, "sim.protocol.pulse");
    let mut rng_noise = stream_rng(scenario.seed, "sim.robot.noise");
    let command_every = timebase.steps_for(8.0).max(1);
    let (f_lo, f_hi) = PROTOCOL_TENSION_RANGE;
    let b = scenario.robot.command_bounds;
    let mut command = [0.0; 3];
    let mut pulse_active = false;
    let mut phase_left = 0usize;
    let mut magnitude = 0.0;
    let mut direction = Vec3::new(1.0, 0.0, 0.0);
    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        if k % command_every == 0 {
            let hi = b[0].min(1.0);
            command = [
                rng_cmd.gen_range(hi.min(0.2)..=hi),
                rng_cmd.gen_range(-0.3..=0.3f64).clamp(-b[1], b[1]),
                rng_cmd.gen_range(-0.3..=0.3f64).clamp(-b[2], b[2]),
            ];
        }
        if phase_left == 0 {
            // Alternate gaps and pulses of randomized force magnitude,
            // duration, and direction.
            pulse_active = !pulse_active;
            if pulse_active {
                magnitude = rng_pulse.gen_range(f_lo..=f_hi);
                let angle = rng_pulse.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                direction = Vec3::new(angle.cos(), angle.sin(), 0.0);
                phase_left = timebase.steps_for(rng_pulse.gen_range(0.5..=2.5)).max(1);
            } else {
                phase_left = timebase.steps_for(rng_pulse.gen_range(1.0..=4.0)).max(1);
            }
        }
        phase_left -= 1;
        let tension = if pulse_active { magnitude } else { 0.0 };
        let sample =
            TensionSample::new(tension, direction).expect("protocol directions are unit");
        records.push(LogRecord {
            t: k as f64 * period,
            robot_position: robot.x,
            command,
            tension,
            leash_dir: direction,
            leash_len: scenario.nominal_separation,
        });
        robot = step_robot(
            &scenario.robot,
            &robot,
            command,
            sample.force_on(LeashEnd::Robot),
            timebase,
            &mut rng_noise,
        );
    }
    records
}

/// Controller knobs for a guided episode: planner horizons, cost weights,
/// constraint bounds, and the shooting solver budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedConfig {
    pub human_horizon: usize,
    pub robot_horizon: usize,
    pub waypoint_weight: f64,
    pub force_step_weight: f64,
    pub magnitude_step_weight: f64,
    pub bearing_step_weight: f64,
    pub length_step_weight: f64,
    pub tension_bounds: (f64, f64),
    pub length_bounds: (f64, f64),
    pub max_force_turn: f64,
    pub max_leash_skew: f64,
    pub clearance: f64,
    pub tracking_weight: f64,
    pub effort_weight: f64,
    pub command_bounds: [f64; 3],
    pub solver: ShootingConfig,
    pub goal_radius: f64,
}

impl Default for GuidedConfig {
    fn default() -> Self {
        Self {
            human_horizon: 10,
            robot_horizon: 10,
            waypoint_weight: 20.0,
            force_step_weight: 0.02,
            magnitude_step_weight: 0.01,
            bearing_step_weight: 0.5,
            length_step_weight: 2.0,
            tension_bounds: (2.0, 20.0),
            length_bounds: (0.8, 1.2),
            max_force_turn: 0.6,
            max_leash_skew: 0.7,
            clearance: 0.3,
            tracking_weight: 10.0,
            effort_weight: 0.05,
            command_bounds: [1.0, 1.0, 1.0],
            solver: ShootingConfig {
                population: 24,
                iterations: 8,
                refine_steps: 2,
                ..ShootingConfig::default()
            },
            goal_radius: 0.3,
        }
    }
}

impl GuidedConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.human_horizon == 0 || self.robot_horizon == 0 {
            return Err(SimError::Scenario("planner horizons must be >= 1".into()));
        }
        if self.robot_horizon > self.human_horizon {
            return Err(SimError::Scenario(
                "robot horizon cannot exceed the human horizon that feeds it".into(),
            ));
        }
        if !(self.goal_radius > 0.0) {
            return Err(SimError::Scenario("goal radius must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeOutcome {
    GoalReached { steps: usize },
    Timeout,
}

/// One control cycle of a guided episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub human_position: [f64; 2],
    pub human_velocity: [f64; 2],
    pub robot_position: [f64; 2],
    pub robot_velocity: [f64; 2],
    /// Realized leash tension in newtons.
    pub tension: f64,
    pub separation: f64,
    /// Bearing from the human toward the robot.
    pub bearing: f64,
    pub command: [f64; 3],
    pub human_cost: f64,
    pub robot_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub timebase: Timebase,
    pub outcome: EpisodeOutcome,
    pub rows: Vec<TraceRow>,
}

pub const TRACE_CSV_HEADER: &str =
    "t,xh_x,xh_y,vh_x,vh_y,xr_x,xr_y,vr_x,vr_y,F,l,theta,u_x,u_y,u_w,Jh,Jr";

impl EpisodeTrace {
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.human_position[0],
                r.human_position[1],
                r.human_velocity[0],
                r.human_velocity[1],
                r.robot_position[0],
                r.robot_position[1],
                r.robot_velocity[0],
                r.robot_velocity[1],
                r.tension,
                r.separation,
                r.bearing,
                r.command[0],
                r.command[1],
                r.command[2],
                r.human_cost,
                r.robot_cost
            );
        }
        out
    }

    fn rows_from(&self, from_t: f64) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.t >= from_t)
    }

    /// Mean human speed over rows at or after `from_t`.
    pub fn mean_human_speed(&self, from_t: f64) -> f64 {
        mean(self.rows_from(from_t).map(|r| norm2(r.human_velocity)))
    }

    pub fn mean_robot_speed(&self, from_t: f64) -> f64 {
        mean(self.rows_from(from_t).map(|r| norm2(r.robot_velocity)))
    }

    /// Population standard deviation of the separation after `from_t`.
    pub fn separation_std(&self, from_t: f64) -> f64 {
        let vals: Vec<f64> = self.rows_from(from_t).map(|r| r.separation).collect();
        if vals.is_empty() {
            return 0.0;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
    }

    pub fn separation_range(&self, from_t: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in self.rows_from(from_t) {
            lo = lo.min(r.separation);
            hi = hi.max(r.separation);
        }
        (lo, hi)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|r| {
            [
                r.t,
                r.human_position[0],
                r.human_position[1],
                r.human_velocity[0],
                r.human_velocity[1],
                r.robot_position[0],
                r.robot_position[1],
                r.robot_velocity[0],
                r.robot_velocity[1],
                r.tension,
                r.separation,
                r.bearing,
                r.command[0],
                r.command[1],
                r.command[2],
                r.human_cost,
                r.robot_cost,
            ]
            .iter()
            .all(|v| v.is_finite())
        })
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn norm2(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Runs the full guiding loop: each cycle predicts the human's speed with
/// tension held, places waypoints along the course at that speed, solves
/// the leash plan, derives robot targets and the tension forecast, solves
/// the command plan, and applies the first step of both to the plants.
pub fn run_guided_episode(
    scenario: &ScenarioSpec,
    course: &Course,
    human_model: &SeqModel,
    robot_model: &SeqModel,
    cfg: &GuidedConfig,
    timebase: &Timebase,
) -> Result<EpisodeTrace, SimError> {
    scenario.validate()?;
    cfg.validate()?;
    if human_model.spec().input_channels != DatasetKind::Human.channels() {
        return Err(SimError::Scenario("human model must take 4 input channels".into()));
    }
    if robot_model.spec().input_channels != DatasetKind::Robot.channels() {
        return Err(SimError::Scenario("robot model must take 7 input channels".into()));
    }
    let period = timebase.period();
    let path = &course.path;
    let goal = Vec3::new(scenario.goal[0], scenario.goal[1], 0.0);
    let tangent = path_start_tangent(path);
    let start = Vec3::new(scenario.start[0], scenario.start[1], 0.0);
    let mut human = PlanarState::new(start, Vec3::zeros(), tangent.y.atan2(tangent.x));
    let mut robot = PlanarState::new(
        start + tangent * scenario.nominal_separation,
        Vec3::zeros(),
        tangent.y.atan2(tangent.x),
    );
    let mut rng_h = stream_rng(scenario.seed, "sim.episode.human");
    let mut rng_r = stream_rng(scenario.seed, "sim.episode.robot");

    let (f_lo, f_hi) = cfg.tension_bounds;
    let (l_lo, l_hi) = cfg.length_bounds;
    let mut commanded_tension = 0.5 * (f_lo + f_hi);
    let mut prev_command = [0.0; 3];
    let mut prev_dir = -tangent;

    // History windows start as standing rows under the initial taut pull.
    let init_coupling =
        scenario.leash.couple(human.x, robot.x, commanded_tension, prev_dir);
    let init_sample = TensionSample::new(init_coupling.tension, init_coupling.direction)?;
    let w_h = human_model.spec().window;
    let w_r = robot_model.spec().window;
    let hrow = human_row(Vec3::zeros(), init_sample.force_on(LeashEnd::Human));
    let rrow = robot_row(Vec3::zeros(), [0.0; 3], init_sample.force_on(LeashEnd::Robot));
    let mut human_window =
        Tensor2::from_rows(&vec![hrow; w_h]).expect("uniform rows are rectangular");
    let mut robot_window =
        Tensor2::from_rows(&vec![rrow; w_r]).expect("uniform rows are rectangular");

    let mut human_warm: Option<LeashPlan> = None;
    let mut robot_warm: Option<Vec<[f64; 3]>> = None;
    let mut prev_s = 0.0;
    let steps = timebase.steps_for(scenario.episode_seconds);
    let mut rows = Vec::with_capacity(steps);
    let mut outcome = EpisodeOutcome::Timeout;

    for k in 0..steps {
        if (human.x - goal).norm() < cfg.goal_radius {
            outcome = EpisodeOutcome::GoalReached { steps: k };
            break;
        }
        let coupling = scenario.leash.couple(human.x, robot.x, commanded_tension, prev_dir);
        prev_dir = coupling.direction;
        let bearing_vec = -coupling.direction;
        let bearing = bearing_vec.y.atan2(bearing_vec.x);

        // Speed prediction with the tension held at its current value.
        let held_sample = TensionSample::new(coupling.tension, coupling.direction)?;
        let held_force = held_sample.force_on(LeashEnd::Human);
        let probe_window = human_window.advanced(&human_row(human.v, held_force))?;
        let predicted = human_model.forward(&probe_window)?;
        let speed = (predicted[0] * predicted[0] + predicted[1] * predicted[1]).sqrt();

        let s0 = path.project(human.x, Some(prev_s));
        prev_s = s0;
        let plan =
            select_waypoints(path, s0, speed, cfg.human_horizon, timebase)?;
        let waypoints: Vec<[f64; 2]> = plan.points.iter().map(|p| [p.x, p.y]).collect();

        let mut solver = cfg.solver;
        solver.seed = cfg.solver.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let problem = HumanPlanProblem {
            horizon: cfg.human_horizon,
            waypoints,
            window: probe_window,
            start_position: [human.x.x, human.x.y],
            current: LeashState {
                tension: commanded_tension.clamp(f_lo, f_hi),
                length: coupling.length.clamp(l_lo, l_hi),
                bearing,
            },
            waypoint_weight: cfg.waypoint_weight,
            force_step_weight: cfg.force_step_weight,
            magnitude_step_weight: cfg.magnitude_step_weight,
            bearing_step_weight: cfg.bearing_step_weight,
            length_step_weight: cfg.length_step_weight,
            tension_bounds: cfg.tension_bounds,
            length_bounds: cfg.length_bounds,
            max_force_turn: cfg.max_force_turn,
            max_leash_skew: cfg.max_leash_skew,
            obstacles: course.obstacles.clone(),
            clearance: cfg.clearance,
            timebase: *timebase,
        };
        let hsol = solve_human_plan(&problem, human_model, &solver, human_warm.as_ref())?;

        let forecast = robot_tension_forecast(&hsol);
        let probe_robot =
            robot_window.advanced(&robot_row(robot.v, prev_command, held_sample.force_on(LeashEnd::Robot)))?;
        let rproblem = RobotPlanProblem {
            horizon: cfg.robot_horizon,
            targets: hsol.robot_targets[..cfg.robot_horizon].to_vec(),
            window: probe_robot,
            start_position: [robot.x.x, robot.x.y],
            tension_forecast: forecast[..cfg.robot_horizon].to_vec(),
            tracking_weight: cfg.tracking_weight,
            effort_weight: cfg.effort_weight,
            command_bounds: cfg.command_bounds,
            timebase: *timebase,
        };
        let rsol = solve_robot_plan(&rproblem, robot_model, &solver, robot_warm.as_deref())?;

        // Apply the first step of both plans to the plants.
        commanded_tension = hsol.plan.force_mag[0];
        let command = rsol.commands[0];
        let applied = scenario.leash.couple(human.x, robot.x, commanded_tension, prev_dir);
        let applied_sample = TensionSample::new(applied.tension, applied.direction)?;
        let human_force = applied_sample.force_on(LeashEnd::Human);
        let robot_force = applied_sample.force_on(LeashEnd::Robot);

        human_window = human_window.advanced(&human_row(human.v, human_force))?;
        robot_window = robot_window.advanced(&robot_row(robot.v, command, robot_force))?;

        rows.push(TraceRow {
            t: k as f64 * period,
            human_position: [human.x.x, human.x.y],
            human_velocity: [human.v.x, human.v.y],
            robot_position: [robot.x.x, robot.x.y],
            robot_velocity: [robot.v.x, robot.v.y],
            tension: applied.tension,
            separation: applied.length,
            bearing,
            command,
            human_cost: hsol.cost,
            robot_cost: rsol.cost,
        });

        human = step_human(&scenario.agent, &human, human_force, timebase, &mut rng_h);
        robot = step_robot(&scenario.robot, &robot, command, robot_force, timebase, &mut rng_r);
        prev_command = command;
        human_warm = Some(hsol.plan.shifted());
        robot_warm = Some(shifted_commands(&rsol.commands));
    }

    Ok(EpisodeTrace { timebase: *timebase, outcome, rows })
}

/// Draws a panel of synthetic subjects with documented parameter ranges:
/// comfortable speed 0.5 to 1.2 m/s and responsiveness 0.05 to
/// 0.15 (m/s)/N, plus mild spread in lag and compliance.
pub fn synthetic_subjects(count: usize, seed: u64) -> Vec<HumanAgentModel> {
    let mut rng = stream_rng(seed, "sim.subjects");
    (0..count)
        .map(|_| HumanAgentModel {
            comfortable_speed: rng.gen_range(0.5..=1.2),
            responsiveness: rng.gen_range(0.05..=0.15),
            time_constant: rng.gen_range(0.25..=0.5),
            heading_compliance: rng.gen_range(0.8..=1.0),
            noise_std: rng.gen_range(0.0..=0.01),
        })
        .collect()
}
