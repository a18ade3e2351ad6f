//! The two receding-horizon planners at the heart of the guiding loop. The
//! leash planner chooses a tension sequence (magnitude and pull direction)
//! plus the leash length and bearing that make the predicted human track the
//! selected waypoints; the command planner then chooses robot velocity
//! commands that carry the robot to the matching target positions.
//!
//! Both planners share a cross-entropy shooting solver: sample candidate
//! plans from a per-variable Gaussian, project them into the feasible box
//! and angle windows, score them by rolling the learned model forward, and
//! refit the distribution to the elite fraction. Box and angle constraints
//! hold by construction; obstacle clearance enters as a quadratic penalty
//! and is verified on the returned plan. An optional refinement stage walks
//! the best plan downhill along exact cost gradients obtained by
//! backpropagating through the model.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::base::{normalize_angle, stream_rng, Timebase, Vec3};
use crate::nn::{NnError, SeqModel, Tensor2};
use crate::predictors::{human_row, robot_row, DatasetKind};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("bad problem: {0}")]
    BadProblem(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

/// Tolerance below which a constraint residual counts as satisfied.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// The leash state at the moment of planning: tension magnitude, length,
/// and bearing. The bearing is the angle of the unit vector from the human
/// toward the robot, which is also the direction the leash pulls the human.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeashState {
    pub tension: f64,
    pub length: f64,
    pub bearing: f64,
}

/// A candidate decision sequence for the leash planner. Forces are stored
/// as (magnitude, angle of the pull on the human); bearings are kept
/// unnormalized so consecutive values stay numerically continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct LeashPlan {
    pub force_mag: Vec<f64>,
    pub force_angle: Vec<f64>,
    pub length: Vec<f64>,
    pub bearing: Vec<f64>,
}

impl LeashPlan {
    /// The do-nothing plan: hold the current leash state for every step.
    pub fn hold(state: &LeashState, horizon: usize) -> Self {
        Self {
            force_mag: vec![state.tension; horizon],
            force_angle: vec![state.bearing; horizon],
            length: vec![state.length; horizon],
            bearing: vec![state.bearing; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.force_mag.len()
    }

    /// Receding-horizon shift: drop the executed first step and repeat the
    /// last one, for warm-starting the next solve.
    pub fn shifted(&self) -> Self {
        let shift = |v: &[f64]| {
            let mut out: Vec<f64> = v[1..].to_vec();
            out.push(*v.last().expect("non-empty plan"));
            out
        };
        Self {
            force_mag: shift(&self.force_mag),
            force_angle: shift(&self.force_angle),
            length: shift(&self.length),
            bearing: shift(&self.bearing),
        }
    }

    /// Planned pull-force vectors on the human.
    pub fn force_vectors(&self) -> Vec<[f64; 2]> {
        self.force_mag
            .iter()
            .zip(&self.force_angle)
            .map(|(f, a)| [f * a.cos(), f * a.sin()])
            .collect()
    }
}

/// Receding-horizon shift for a command plan.
pub fn shifted_commands(commands: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = commands[1..].to_vec();
    out.push(*commands.last().expect("non-empty plan"));
    out
}

#[derive(Debug, Clone)]
pub struct HumanPlanProblem {
    pub horizon: usize,
    /// Expected human positions, one per step.
    pub waypoints: Vec<[f64; 2]>,
    /// Measured history window in the human layout.
    pub window: Tensor2,
    pub start_position: [f64; 2],
    pub current: LeashState,
    /// Weight on distance to the waypoints.
    pub waypoint_weight: f64,
    /// Weight on the change of the force vector between steps.
    pub force_step_weight: f64,
    /// Weight on the change of the force magnitude between steps.
    pub magnitude_step_weight: f64,
    /// Weight on the change of the leash bearing between steps.
    pub bearing_step_weight: f64,
    /// Weight on the change of the leash length between steps.
    pub length_step_weight: f64,
    /// Allowed tension magnitudes (min, max) in newtons.
    pub tension_bounds: (f64, f64),
    /// Allowed leash lengths (min, max) in meters.
    pub length_bounds: (f64, f64),
    /// Largest allowed angle between consecutive force vectors.
    pub max_force_turn: f64,
    /// Largest allowed angle between the force and the leash bearing.
    pub max_leash_skew: f64,
    pub obstacles: Vec<[f64; 2]>,
    /// Required clearance from every obstacle point.
    pub clearance: f64,
    pub timebase: Timebase,
}

impl HumanPlanProblem {
    fn validate(&self) -> Result<(), MpcError> {
        if self.horizon == 0 {
            return Err(MpcError::BadProblem("horizon must be >= 1".into()));
        }
        if self.waypoints.len() != self.horizon {
            return Err(MpcError::BadProblem(format!(
                "{} waypoints for horizon {}",
                self.waypoints.len(),
                self.horizon
            )));
        }
        let (f_lo, f_hi) = self.tension_bounds;
        let (l_lo, l_hi) = self.length_bounds;
        if !(f_lo.is_finite() && f_hi.is_finite() && f_lo >= 0.0 && f_lo < f_hi) {
            return Err(MpcError::BadProblem(format!("tension bounds ({f_lo}, {f_hi})")));
        }
        if !(l_lo.is_finite() && l_hi.is_finite() && l_lo > 0.0 && l_lo < l_hi) {
            return Err(MpcError::BadProblem(format!("length bounds ({l_lo}, {l_hi})")));
        }
        if !(self.max_force_turn > 0.0 && self.max_leash_skew > 0.0) {
            return Err(MpcError::BadProblem("angle limits must be positive".into()));
        }
        let weights = [
            self.waypoint_weight,
            self.force_step_weight,
            self.magnitude_step_weight,
            self.bearing_step_weight,
            self.length_step_weight,
        ];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MpcError::BadProblem("weights must be finite and >= 0".into()));
        }
        if self.clearance < 0.0 {
            return Err(MpcError::BadProblem("clearance must be >= 0".into()));
        }
        let finite2 = |p: &[f64; 2]| p.iter().all(|v| v.is_finite());
        if !finite2(&self.start_position)
            || self.waypoints.iter().any(|p| !finite2(p))
            || self.obstacles.iter().any(|p| !finite2(p))
        {
            return Err(MpcError::BadProblem("non-finite positions".into()));
        }
        if self.window.cols() != DatasetKind::Human.channels() {
            return Err(MpcError::BadProblem(format!(
                "human window must have {} channels, got {}",
                DatasetKind::Human.channels(),
                self.window.cols()
            )));
        }
        Ok(())
    }

    /// Whether the hold-current-state plan satisfies the hard box bounds.
    fn hold_plan_feasible(&self) -> bool {
        let (f_lo, f_hi) = self.tension_bounds;
        let (l_lo, l_hi) = self.length_bounds;
        self.current.tension >= f_lo
            && self.current.tension <= f_hi
            && self.current.length >= l_lo
            && self.current.length <= l_hi
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HumanCostBreakdown {
    pub tracking: f64,
    pub force_step: f64,
    pub magnitude_step: f64,
    pub bearing_step: f64,
    pub length_step: f64,
}

impl HumanCostBreakdown {
    pub fn total(&self) -> f64 {
        self.tracking
            + self.force_step
            + self.magnitude_step
            + self.bearing_step
            + self.length_step
    }
}

#[derive(Debug, Clone)]
pub struct HumanPlanSolution {
    pub plan: LeashPlan,
    /// Predicted human positions under the plan.
    pub predicted: Vec<[f64; 2]>,
    /// Robot target positions: waypoint + length * bearing unit vector.
    pub robot_targets: Vec<[f64; 2]>,
    /// The waypoints the plan was solved against.
    pub waypoints: Vec<[f64; 2]>,
    pub cost: f64,
    pub breakdown: HumanCostBreakdown,
    pub penalized_cost: f64,
    pub max_residual: f64,
    pub feasible: bool,
    /// Best penalized cost after each shooting iteration.
    pub cost_trace: Vec<f64>,
}

/// Robot target positions per the leash geometry: the robot stands one
/// leash length from the waypoint along the planned bearing.
pub fn robot_targets_from(waypoints: &[[f64; 2]], plan: &LeashPlan) -> Vec<[f64; 2]> {
    waypoints
        .iter()
        .zip(plan.length.iter().zip(&plan.bearing))
        .map(|(w, (l, th))| [w[0] + l * th.cos(), w[1] + l * th.sin()])
        .collect()
}

/// Replaces the decision channels of the window's last row. The measured
/// velocity is kept; the planned values take effect for the step being
/// predicted, mirroring how logged data stores the force that acted during
/// each step.
fn replace_last_row(window: &Tensor2, row: &[f64]) -> Tensor2 {
    let mut out = window.clone();
    let last = window.rows() - 1;
    for (c, v) in row.iter().enumerate() {
        out.set(last, c, *v);
    }
    out
}

fn last_row_velocity(window: &Tensor2) -> Vec3 {
    let last = window.rows() - 1;
    Vec3::new(window.get(last, 0), window.get(last, 1), 0.0)
}

/// Rolls the human model forward under a planned tension sequence. The
/// first planned force replaces the last window row's force channels; each
/// predicted velocity then re-enters the window alongside the next planned
/// force, and positions integrate as x_{k+1} = x_k + v_{k+1} T.
pub fn rollout_human(
    model: &SeqModel,
    window: &Tensor2,
    forces: &[[f64; 2]],
    start: [f64; 2],
    period: f64,
) -> Result<Vec<[f64; 2]>, MpcError> {
    if forces.is_empty() {
        return Err(MpcError::BadProblem("empty tension plan".into()));
    }
    let f0 = Vec3::new(forces[0][0], forces[0][1], 0.0);
    let mut win = replace_last_row(window, &human_row(last_row_velocity(window), f0));
    let mut x = start;
    let mut out = Vec::with_capacity(forces.len());
    for k in 0..forces.len() {
        let v = model.forward(&win)?;
        x = [x[0] + v[0] * period, x[1] + v[1] * period];
        out.push(x);
        if k + 1 < forces.len() {
            let f = Vec3::new(forces[k + 1][0], forces[k + 1][1], 0.0);
            win = win.advanced(&human_row(Vec3::new(v[0], v[1], 0.0), f))?;
        }
    }
    Ok(out)
}

/// Rolls the robot model forward under a command plan and a tension
/// forecast, with the same last-row replacement convention.
pub fn rollout_robot(
    model: &SeqModel,
    window: &Tensor2,
    commands: &[[f64; 3]],
    tension_forecast: &[[f64; 2]],
    start: [f64; 2],
    period: f64,
) -> Result<Vec<[f64; 2]>, MpcError> {
    if commands.is_empty() || commands.len() != tension_forecast.len() {
        return Err(MpcError::BadProblem(format!(
            "command plan ({}) and tension forecast ({}) must be equal and non-empty",
            commands.len(),
            tension_forecast.len()
        )));
    }
    let f0 = Vec3::new(tension_forecast[0][0], tension_forecast[0][1], 0.0);
    let mut win =
        replace_last_row(window, &robot_row(last_row_velocity(window), commands[0], f0));
    let mut x = start;
    let mut out = Vec::with_capacity(commands.len());
    for k in 0..commands.len() {
        let v = model.forward(&win)?;
        x = [x[0] + v[0] * period, x[1] + v[1] * period];
        out.push(x);
        if k + 1 < commands.len() {
            let f = Vec3::new(tension_forecast[k + 1][0], tension_forecast[k + 1][1], 0.0);
            win = win.advanced(&robot_row(Vec3::new(v[0], v[1], 0.0), commands[k + 1], f))?;
        }
    }
    Ok(out)
}

/// The leash planner's cost: waypoint tracking plus smoothness of the force
/// vector, force magnitude, bearing, and length, each transition anchored
/// at the current leash state. Quadratic terms use the half-weighted norm
/// (1/2) w |x|^2.
pub fn human_cost(
    problem: &HumanPlanProblem,
    plan: &LeashPlan,
    positions: &[[f64; 2]],
) -> (f64, HumanCostBreakdown) {
    let mut b = HumanCostBreakdown::default();
    let forces = plan.force_vectors();
    let cur = &problem.current;
    let mut prev_force = [cur.tension * cur.bearing.cos(), cur.tension * cur.bearing.sin()];
    let mut prev_mag = cur.tension;
    let mut prev_bearing = cur.bearing;
    let mut prev_length = cur.length;
    for k in 0..plan.horizon() {
        let dx = positions[k][0] - problem.waypoints[k][0];
        let dy = positions[k][1] - problem.waypoints[k][1];
        b.tracking += 0.5 * problem.waypoint_weight * (dx * dx + dy * dy);
        let df = [forces[k][0] - prev_force[0], forces[k][1] - prev_force[1]];
        b.force_step += 0.5 * problem.force_step_weight * (df[0] * df[0] + df[1] * df[1]);
        let dm = plan.force_mag[k] - prev_mag;
        b.magnitude_step += problem.magnitude_step_weight * dm * dm;
        let dth = normalize_angle(plan.bearing[k] - prev_bearing);
        b.bearing_step += problem.bearing_step_weight * (1.0 - dth.cos());
        let dl = plan.length[k] - prev_length;
        b.length_step += problem.length_step_weight * dl * dl;
        prev_force = forces[k];
        prev_mag = plan.force_mag[k];
        prev_bearing = plan.bearing[k];
        prev_length = plan.length[k];
    }
    (b.total(), b)
}

/// Worst violation and the sum of squared violations for every constraint
/// family: tension box, length box, force turn rate, force/bearing skew,
/// and obstacle clearance of the predicted human and robot positions.
fn human_residuals(
    problem: &HumanPlanProblem,
    plan: &LeashPlan,
    positions: &[[f64; 2]],
) -> (f64, f64) {
    let mut worst: f64 = 0.0;
    let mut sum_sq = 0.0;
    let mut add = |r: f64| {
        if r > 0.0 {
            worst = worst.max(r);
            sum_sq += r * r;
        }
    };
    let (f_lo, f_hi) = problem.tension_bounds;
    let (l_lo, l_hi) = problem.length_bounds;
    let mut prev_angle = problem.current.bearing;
    for k in 0..plan.horizon() {
        add(f_lo - plan.force_mag[k]);
        add(plan.force_mag[k] - f_hi);
        add(l_lo - plan.length[k]);
        add(plan.length[k] - l_hi);
        add(normalize_angle(plan.force_angle[k] - prev_angle).abs() - problem.max_force_turn);
        add(
            normalize_angle(plan.force_angle[k] - plan.bearing[k]).abs()
                - problem.max_leash_skew,
        );
        prev_angle = plan.force_angle[k];
        let robot = [
            positions[k][0] + plan.length[k] * plan.bearing[k].cos(),
            positions[k][1] + plan.length[k] * plan.bearing[k].sin(),
        ];
        for obs in &problem.obstacles {
            for p in [&positions[k], &robot] {
                let d = ((p[0] - obs[0]).powi(2) + (p[1] - obs[1]).powi(2)).sqrt();
                add(problem.clearance - d);
            }
        }
    }
    (worst, sum_sq)
}

/// Full evaluation of a candidate leash plan: model rollout, cost
/// breakdown, constraint residuals, and the penalized objective the solver
/// ranks by.
#[derive(Debug, Clone)]
pub struct HumanPlanEval {
    pub positions: Vec<[f64; 2]>,
    pub cost: f64,
    pub breakdown: HumanCostBreakdown,
    pub max_residual: f64,
    pub penalized_cost: f64,
}

pub fn evaluate_human_plan(
    problem: &HumanPlanProblem,
    model: &SeqModel,
    plan: &LeashPlan,
    penalty_weight: f64,
) -> Result<HumanPlanEval, MpcError> {
    let positions = rollout_human(
        model,
        &problem.window,
        &plan.force_vectors(),
        problem.start_position,
        problem.timebase.period(),
    )?;
    let (cost, breakdown) = human_cost(problem, plan, &positions);
    let (max_residual, sum_sq) = human_residuals(problem, plan, &positions);
    Ok(HumanPlanEval {
        positions,
        cost,
        breakdown,
        max_residual,
        penalized_cost: cost + penalty_weight * sum_sq,
    })
}

#[derive(Debug, Clone)]
pub struct RobotPlanProblem {
    pub horizon: usize,
    /// Robot target positions from the leash planner, one per step.
    pub targets: Vec<[f64; 2]>,
    /// Measured history window in the robot layout.
    pub window: Tensor2,
    pub start_position: [f64; 2],
    /// Forecast tension on the robot over the horizon (the leash planner's
    /// solved pull on the human, sign-flipped).
    pub tension_forecast: Vec<[f64; 2]>,
    pub tracking_weight: f64,
    pub effort_weight: f64,
    /// Per-component command bounds (x, y, yaw rate), all > 0.
    pub command_bounds: [f64; 3],
    pub timebase: Timebase,
}

impl RobotPlanProblem {
    fn validate(&self) -> Result<(), MpcError> {
        if self.horizon == 0 {
            return Err(MpcError::BadProblem("horizon must be >= 1".into()));
        }
        if self.targets.len() != self.horizon || self.tension_forecast.len() != self.horizon {
            return Err(MpcError::BadProblem(format!(
                "{} targets and {} forecast entries for horizon {}",
                self.targets.len(),
                self.tension_forecast.len(),
                self.horizon
            )));
        }
        if self.command_bounds.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(MpcError::BadProblem("command bounds must be > 0".into()));
        }
        if !(self.tracking_weight >= 0.0 && self.effort_weight >= 0.0) {
            return Err(MpcError::BadProblem("weights must be >= 0".into()));
        }
        if self.window.cols() != DatasetKind::Robot.channels() {
            return Err(MpcError::BadProblem(format!(
                "robot window must have {} channels, got {}",
                DatasetKind::Robot.channels(),
                self.window.cols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RobotPlanSolution {
    pub commands: Vec<[f64; 3]>,
    pub predicted: Vec<[f64; 2]>,
    pub cost: f64,
    pub tracking_cost: f64,
    pub effort_cost: f64,
    pub cost_trace: Vec<f64>,
}

/// Tracking plus effort cost for a command plan, as half-weighted norms.
pub fn robot_cost(
    problem: &RobotPlanProblem,
    commands: &[[f64; 3]],
    positions: &[[f64; 2]],
) -> (f64, f64, f64) {
    let mut tracking = 0.0;
    let mut effort = 0.0;
    for k in 0..commands.len() {
        let dx = positions[k][0] - problem.targets[k][0];
        let dy = positions[k][1] - problem.targets[k][1];
        tracking += 0.5 * problem.tracking_weight * (dx * dx + dy * dy);
        let u = &commands[k];
        effort += 0.5 * problem.effort_weight * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    }
    (tracking + effort, tracking, effort)
}

/// Solver settings shared by both planners.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShootingConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    /// Initial sampling spread per decision family.
    pub force_std: f64,
    pub angle_std: f64,
    pub length_std: f64,
    pub command_std: f64,
    /// Floor keeping the sampling spread from collapsing early.
    pub min_std: f64,
    pub penalty_weight: f64,
    /// Gradient refinement steps applied to the best plan (0 disables).
    pub refine_steps: usize,
    pub refine_step_size: f64,
    pub seed: u64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            population: 64,
            elite_fraction: 0.125,
            iterations: 24,
            force_std: 3.0,
            angle_std: 0.4,
            length_std: 0.1,
            command_std: 0.3,
            min_std: 1e-3,
            penalty_weight: 1e4,
            refine_steps: 0,
            refine_step_size: 1e-2,
            seed: 0,
        }
    }
}

impl ShootingConfig {
    fn validate(&self) -> Result<usize, MpcError> {
        if self.population == 0 || self.iterations == 0 {
            return Err(MpcError::BadProblem(
                "population and iterations must be >= 1".into(),
            ));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(MpcError::BadProblem("elite fraction must be in (0, 1]".into()));
        }
        let stds = [self.force_std, self.angle_std, self.length_std, self.command_std];
        if stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) || self.min_std < 0.0 {
            return Err(MpcError::BadProblem("sampling spreads must be > 0".into()));
        }
        if self.penalty_weight < 0.0 {
            return Err(MpcError::BadProblem("penalty weight must be >= 0".into()));
        }
        if self.refine_steps > 0 && !(self.refine_step_size > 0.0) {
            return Err(MpcError::BadProblem("refine step size must be > 0".into()));
        }
        let elites = ((self.population as f64 * self.elite_fraction).ceil() as usize)
            .clamp(1, self.population);
        Ok(elites)
    }
}

/// Clamps `angle` into the window `center +- half_width`, measured on the
/// circle but returned without renormalization so sequences stay
/// continuous.
fn project_angle(angle: f64, center: f64, half_width: f64) -> f64 {
    let d = normalize_angle(angle - center).clamp(-half_width, half_width);
    center + d
}

/// Projects a raw decision vector (magnitudes, force angles, lengths,
/// bearings, each a contiguous run of `horizon` values) into a plan
/// satisfying the box and angle constraints by construction.
pub fn project_leash_plan(problem: &HumanPlanProblem, raw: &[f64]) -> LeashPlan {
    let m = problem.horizon;
    let (f_lo, f_hi) = problem.tension_bounds;
    let (l_lo, l_hi) = problem.length_bounds;
    let mut plan = LeashPlan {
        force_mag: Vec::with_capacity(m),
        force_angle: Vec::with_capacity(m),
        length: Vec::with_capacity(m),
        bearing: Vec::with_capacity(m),
    };
    let mut prev_angle = problem.current.bearing;
    for k in 0..m {
        plan.force_mag.push(raw[k].clamp(f_lo, f_hi));
        let a = project_angle(raw[m + k], prev_angle, problem.max_force_turn);
        plan.force_angle.push(a);
        prev_angle = a;
        plan.length.push(raw[2 * m + k].clamp(l_lo, l_hi));
        plan.bearing.push(project_angle(raw[3 * m + k], a, problem.max_leash_skew));
    }
    plan
}

fn encode_human(plan: &LeashPlan) -> Vec<f64> {
    let mut raw = Vec::with_capacity(4 * plan.horizon());
    raw.extend_from_slice(&plan.force_mag);
    raw.extend_from_slice(&plan.force_angle);
    raw.extend_from_slice(&plan.length);
    raw.extend_from_slice(&plan.bearing);
    raw
}

struct CemOutcome {
    best_raw: Vec<f64>,
    trace: Vec<f64>,
}

/// Generic cross-entropy loop over raw decision vectors. `evaluate` must
/// project the raw vector itself and return the penalized cost alongside
/// the projected (re-encoded) vector that the elite statistics use.
fn cem_minimize(
    mean0: Vec<f64>,
    std0: Vec<f64>,
    cfg: &ShootingConfig,
    elites: usize,
    rng_label: &str,
    mut evaluate: impl FnMut(&[f64]) -> Result<(Vec<f64>, f64), MpcError>,
) -> Result<CemOutcome, MpcError> {
    let dims = mean0.len();
    let mut rng = stream_rng(cfg.seed, rng_label);
    let mut mean = mean0;
    let mut std = std0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut scored: Vec<(Vec<f64>, f64)> = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.iterations {
        scored.clear();
        for i in 0..cfg.population {
            let raw: Vec<f64> = if i == 0 {
                mean.clone()
            } else if i == 1 && best.is_some() {
                best.as_ref().expect("just checked").0.clone()
            } else {
                (0..dims)
                    .map(|d| mean[d] + std[d] * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            scored.push(evaluate(&raw)?);
        }
        scored.sort_by(|a, b| a.1.total_cmp(&b.1));
        if best.as_ref().map_or(true, |(_, c)| scored[0].1 < *c) {
            best = Some(scored[0].clone());
        }
        trace.push(best.as_ref().expect("set above").1);
        for d in 0..dims {
            let mut m = 0.0;
            for e in &scored[..elites] {
                m += e.0[d];
            }
            m /= elites as f64;
            let mut var = 0.0;
            for e in &scored[..elites] {
                var += (e.0[d] - m).powi(2);
            }
            mean[d] = m;
            std[d] = (var / elites as f64).sqrt().max(cfg.min_std);
        }
    }
    Ok(CemOutcome { best_raw: best.expect("at least one iteration").0, trace })
}

/// Per-variable gradient of the penalized leash-plan objective.
#[derive(Debug, Clone)]
pub struct LeashPlanGradient {
    pub force_mag: Vec<f64>,
    pub force_angle: Vec<f64>,
    pub length: Vec<f64>,
    pub bearing: Vec<f64>,
}

/// Backpropagates the penalized objective through the model rollout and the
/// analytic cost terms. Returns the evaluation alongside the gradient.
pub fn human_plan_gradient(
    problem: &HumanPlanProblem,
    model: &SeqModel,
    plan: &LeashPlan,
    penalty_weight: f64,
) -> Result<(HumanPlanEval, LeashPlanGradient), MpcError> {
    let eval = evaluate_human_plan(problem, model, plan, penalty_weight)?;
    let m = plan.horizon();
    let forces = plan.force_vectors();
    let positions = &eval.positions;
    let period = problem.timebase.period();

    // d penalized / d position, from tracking and the obstacle penalty.
    let mut dpos = vec![[0.0; 2]; m];
    let mut dlen = vec![0.0; m];
    let mut dbear = vec![0.0; m];
    for k in 0..m {
        dpos[k][0] += problem.waypoint_weight * (positions[k][0] - problem.waypoints[k][0]);
        dpos[k][1] += problem.waypoint_weight * (positions[k][1] - problem.waypoints[k][1]);
        let (sin_t, cos_t) = plan.bearing[k].sin_cos();
        let robot = [
            positions[k][0] + plan.length[k] * cos_t,
            positions[k][1] + plan.length[k] * sin_t,
        ];
        for obs in &problem.obstacles {
            for (p, is_robot) in [(&positions[k], false), (&robot, true)] {
                let dx = p[0] - obs[0];
                let dy = p[1] - obs[1];
                let d = (dx * dx + dy * dy).sqrt().max(1e-12);
                let r = problem.clearance - d;
                if r > 0.0 {
                    // d(penalty r^2)/dp = -2 r (p - obs)/d, scaled by weight.
                    let s = -2.0 * penalty_weight * r / d;
                    dpos[k][0] += s * dx;
                    dpos[k][1] += s * dy;
                    if is_robot {
                        dlen[k] += s * (dx * cos_t + dy * sin_t);
                        dbear[k] += s * plan.length[k] * (-dx * sin_t + dy * cos_t);
                    }
                }
            }
        }
    }

    // Direct smoothness terms on the decision variables.
    let cur = &problem.current;
    let cur_force = [cur.tension * cur.bearing.cos(), cur.tension * cur.bearing.sin()];
    let mut dforce = vec![[0.0; 2]; m];
    let mut dmag = vec![0.0; m];
    let mut dangle = vec![0.0; m];
    for k in 0..m {
        let prev = if k == 0 { cur_force } else { forces[k - 1] };
        let df = [forces[k][0] - prev[0], forces[k][1] - prev[1]];
        dforce[k][0] += problem.force_step_weight * df[0];
        dforce[k][1] += problem.force_step_weight * df[1];
        if k > 0 {
            dforce[k - 1][0] -= problem.force_step_weight * df[0];
            dforce[k - 1][1] -= problem.force_step_weight * df[1];
        }
        let prev_mag = if k == 0 { cur.tension } else { plan.force_mag[k - 1] };
        let dm = 2.0 * problem.magnitude_step_weight * (plan.force_mag[k] - prev_mag);
        dmag[k] += dm;
        if k > 0 {
            dmag[k - 1] -= dm;
        }
        let prev_b = if k == 0 { cur.bearing } else { plan.bearing[k - 1] };
        let db = problem.bearing_step_weight * normalize_angle(plan.bearing[k] - prev_b).sin();
        dbear[k] += db;
        if k > 0 {
            dbear[k - 1] -= db;
        }
        let prev_l = if k == 0 { cur.length } else { plan.length[k - 1] };
        let dl = 2.0 * problem.length_step_weight * (plan.length[k] - prev_l);
        dlen[k] += dl;
        if k > 0 {
            dlen[k - 1] -= dl;
        }
    }

    // Box and angle-window penalty terms (zero for projected plans, kept so
    // the gradient matches the evaluated objective everywhere).
    let (f_lo, f_hi) = problem.tension_bounds;
    let (l_lo, l_hi) = problem.length_bounds;
    let mut prev_angle = cur.bearing;
    for k in 0..m {
        if plan.force_mag[k] < f_lo {
            dmag[k] -= 2.0 * penalty_weight * (f_lo - plan.force_mag[k]);
        }
        if plan.force_mag[k] > f_hi {
            dmag[k] += 2.0 * penalty_weight * (plan.force_mag[k] - f_hi);
        }
        if plan.length[k] < l_lo {
            dlen[k] -= 2.0 * penalty_weight * (l_lo - plan.length[k]);
        }
        if plan.length[k] > l_hi {
            dlen[k] += 2.0 * penalty_weight * (plan.length[k] - l_hi);
        }
        let turn = normalize_angle(plan.force_angle[k] - prev_angle);
        let turn_excess = turn.abs() - problem.max_force_turn;
        if turn_excess > 0.0 {
            let g = 2.0 * penalty_weight * turn_excess * turn.signum();
            dangle[k] += g;
            if k > 0 {
                dangle[k - 1] -= g;
            }
        }
        prev_angle = plan.force_angle[k];
        let skew = normalize_angle(plan.force_angle[k] - plan.bearing[k]);
        let skew_excess = skew.abs() - problem.max_leash_skew;
        if skew_excess > 0.0 {
            let g = 2.0 * penalty_weight * skew_excess * skew.signum();
            dangle[k] += g;
            dbear[k] -= g;
        }
    }

    // Backward sweep through the rollout, mirroring the forward window
    // bookkeeping: planned force k sits in the last original row (k = 0) or
    // in appended row k-1 of later windows.
    let w = problem.window.rows();
    let (fx_col, fy_col) = DatasetKind::Human.force_cols();
    let f0 = Vec3::new(forces[0][0], forces[0][1], 0.0);
    let mut win =
        replace_last_row(&problem.window, &human_row(last_row_velocity(&problem.window), f0));
    let mut windows = Vec::with_capacity(m);
    let mut velocities = Vec::with_capacity(m);
    for k in 0..m {
        let v = model.forward(&win)?;
        velocities.push(v.clone());
        windows.push(win.clone());
        if k + 1 < m {
            let f = Vec3::new(forces[k + 1][0], forces[k + 1][1], 0.0);
            win = win.advanced(&human_row(Vec3::new(v[0], v[1], 0.0), f))?;
        }
    }
    // dv[j]: gradient w.r.t. the velocity predicted at step j. Position
    // integration contributes period * (sum of dpos from step j onward).
    let mut dv = vec![[0.0; 2]; m];
    let mut acc = [0.0; 2];
    for j in (0..m).rev() {
        acc[0] += dpos[j][0];
        acc[1] += dpos[j][1];
        dv[j][0] = period * acc[0];
        dv[j][1] = period * acc[1];
    }
    for j in (0..m).rev() {
        let (_, grads) = model.forward_backward(&windows[j], &dv[j])?;
        for r in 0..w {
            let gfx = grads.input.get(r, fx_col);
            let gfy = grads.input.get(r, fy_col);
            if r + j >= w {
                // Appended row carrying prediction s and planned force s+1.
                let s = r + j - w;
                dv[s][0] += grads.input.get(r, 0);
                dv[s][1] += grads.input.get(r, 1);
                dforce[s + 1][0] += gfx;
                dforce[s + 1][1] += gfy;
            } else if r + j == w - 1 {
                // The original last row carries the first planned force.
                dforce[0][0] += gfx;
                dforce[0][1] += gfy;
            }
        }
    }

    // Chain force-vector gradients into (magnitude, angle) coordinates.
    for k in 0..m {
        let (sin_a, cos_a) = plan.force_angle[k].sin_cos();
        dmag[k] += cos_a * dforce[k][0] + sin_a * dforce[k][1];
        dangle[k] += plan.force_mag[k] * (-sin_a * dforce[k][0] + cos_a * dforce[k][1]);
    }
    Ok((
        eval,
        LeashPlanGradient {
            force_mag: dmag,
            force_angle: dangle,
            length: dlen,
            bearing: dbear,
        },
    ))
}

/// Gradient of the robot objective with respect to the command plan.
pub fn robot_plan_gradient(
    problem: &RobotPlanProblem,
    model: &SeqModel,
    commands: &[[f64; 3]],
) -> Result<(Vec<[f64; 2]>, f64, Vec<[f64; 3]>), MpcError> {
    let period = problem.timebase.period();
    let positions = rollout_robot(
        model,
        &problem.window,
        commands,
        &problem.tension_forecast,
        problem.start_position,
        period,
    )?;
    let (cost, _, _) = robot_cost(problem, commands, &positions);
    let m = commands.len();
    let mut du = vec![[0.0; 3]; m];
    for k in 0..m {
        for c in 0..3 {
            du[k][c] += problem.effort_weight * commands[k][c];
        }
    }
    let mut dpos = vec![[0.0; 2]; m];
    for k in 0..m {
        dpos[k][0] = problem.tracking_weight * (positions[k][0] - problem.targets[k][0]);
        dpos[k][1] = problem.tracking_weight * (positions[k][1] - problem.targets[k][1]);
    }
    let w = problem.window.rows();
    let f0 = Vec3::new(problem.tension_forecast[0][0], problem.tension_forecast[0][1], 0.0);
    let mut win = replace_last_row(
        &problem.window,
        &robot_row(last_row_velocity(&problem.window), commands[0], f0),
    );
    let mut windows = Vec::with_capacity(m);
    for k in 0..m {
        let v = model.forward(&win)?;
        windows.push(win.clone());
        if k + 1 < m {
            let f = Vec3::new(
                problem.tension_forecast[k + 1][0],
                problem.tension_forecast[k + 1][1],
                0.0,
            );
            win = win.advanced(&robot_row(Vec3::new(v[0], v[1], 0.0), commands[k + 1], f))?;
        }
    }
    let mut dv = vec![[0.0; 2]; m];
    let mut acc = [0.0; 2];
    for j in (0..m).rev() {
        acc[0] += dpos[j][0];
        acc[1] += dpos[j][1];
        dv[j][0] = period * acc[0];
        dv[j][1] = period * acc[1];
    }
    // Command channels sit between the velocity pair and the force pair.
    let cmd0 = 2;
    for j in (0..m).rev() {
        let (_, grads) = model.forward_backward(&windows[j], &dv[j])?;
        for r in 0..w {
            let gu = [
                grads.input.get(r, cmd0),
                grads.input.get(r, cmd0 + 1),
                grads.input.get(r, cmd0 + 2),
            ];
            if r + j >= w {
                let s = r + j - w;
                dv[s][0] += grads.input.get(r, 0);
                dv[s][1] += grads.input.get(r, 1);
                for c in 0..3 {
                    du[s + 1][c] += gu[c];
                }
            } else if r + j == w - 1 {
                for c in 0..3 {
                    du[0][c] += gu[c];
                }
            }
        }
    }
    Ok((positions, cost, du))
}

/// Solves the leash planning problem by cross-entropy shooting with
/// optional gradient refinement. Deterministic for a fixed seed. The
/// population is seeded with the hold-current-state plan (or the warm-start
/// plan when given), so the returned penalized cost never exceeds the
/// incumbent's.
pub fn solve_human_plan(
    problem: &HumanPlanProblem,
    model: &SeqModel,
    config: &ShootingConfig,
    warm_start: Option<&LeashPlan>,
) -> Result<HumanPlanSolution, MpcError> {
    problem.validate()?;
    let elites = config.validate()?;
    if !problem.hold_plan_feasible() {
        return Err(MpcError::Infeasible(format!(
            "current leash state (F = {} N, l = {} m) violates the bounds",
            problem.current.tension, problem.current.length
        )));
    }
    let m = problem.horizon;
    let mut incumbent = LeashPlan::hold(&problem.current, m);
    if let Some(warm) = warm_start {
        if warm.horizon() != m {
            return Err(MpcError::BadProblem(format!(
                "warm start has horizon {}, problem wants {m}",
                warm.horizon()
            )));
        }
        incumbent = project_leash_plan(problem, &encode_human(warm));
    }
    let mut std0 = Vec::with_capacity(4 * m);
    std0.extend(std::iter::repeat(config.force_std).take(m));
    std0.extend(std::iter::repeat(config.angle_std).take(m));
    std0.extend(std::iter::repeat(config.length_std).take(m));
    std0.extend(std::iter::repeat(config.angle_std).take(m));

    // Track the best feasible candidate separately: a plan that clears all
    // constraints wins over a lower-penalized one that does not.
    let mut best_feasible: Option<(LeashPlan, HumanPlanEval)> = None;
    let outcome = {
        let feasible = &mut best_feasible;
        cem_minimize(
            encode_human(&incumbent),
            std0,
            config,
            elites,
            "shoot.human",
            |raw| {
                let plan = project_leash_plan(problem, raw);
                let eval = evaluate_human_plan(problem, model, &plan, config.penalty_weight)?;
                if eval.max_residual <= FEASIBILITY_TOL
                    && feasible
                        .as_ref()
                        .map_or(true, |(_, e)| eval.penalized_cost < e.penalized_cost)
                {
                    *feasible = Some((plan.clone(), eval.clone()));
                }
                Ok((encode_human(&plan), eval.penalized_cost))
            },
        )?
    };

    let (mut plan, mut eval) = match best_feasible {
        Some(pair) => pair,
        None => {
            let plan = project_leash_plan(problem, &outcome.best_raw);
            let eval = evaluate_human_plan(problem, model, &plan, config.penalty_weight)?;
            (plan, eval)
        }
    };

    let mut step = config.refine_step_size;
    for _ in 0..config.refine_steps {
        let (_, grad) = human_plan_gradient(problem, model, &plan, config.penalty_weight)?;
        let mut improved = false;
        for _ in 0..6 {
            let mut raw = encode_human(&plan);
            for k in 0..m {
                raw[k] -= step * grad.force_mag[k];
                raw[m + k] -= step * grad.force_angle[k];
                raw[2 * m + k] -= step * grad.length[k];
                raw[3 * m + k] -= step * grad.bearing[k];
            }
            let candidate = project_leash_plan(problem, &raw);
            let cand_eval =
                evaluate_human_plan(problem, model, &candidate, config.penalty_weight)?;
            let acceptable = cand_eval.penalized_cost < eval.penalized_cost
                && (eval.max_residual > FEASIBILITY_TOL
                    || cand_eval.max_residual <= FEASIBILITY_TOL);
            if acceptable {
                plan = candidate;
                eval = cand_eval;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }

    let robot_targets = robot_targets_from(&problem.waypoints, &plan);
    Ok(HumanPlanSolution {
        predicted: eval.positions,
        robot_targets,
        waypoints: problem.waypoints.clone(),
        cost: eval.cost,
        breakdown: eval.breakdown,
        penalized_cost: eval.penalized_cost,
        max_residual: eval.max_residual,
        feasible: eval.max_residual <= FEASIBILITY_TOL,
        cost_trace: outcome.trace,
        plan,
    })
}

fn clamp_commands(raw: &[f64], bounds: [f64; 3], m: usize) -> Vec<[f64; 3]> {
    (0..m)
        .map(|k| {
            [
                raw[k].clamp(-bounds[0], bounds[0]),
                raw[m + k].clamp(-bounds[1], bounds[1]),
                raw[2 * m + k].clamp(-bounds[2], bounds[2]),
            ]
        })
        .collect()
}

fn encode_commands(commands: &[[f64; 3]]) -> Vec<f64> {
    let m = commands.len();
    let mut raw = Vec::with_capacity(3 * m);
    for c in 0..3 {
        raw.extend(commands.iter().take(m).map(|u| u[c]));
    }
    raw
}

/// Solves the robot command problem. Commands are clamped into the bounds
/// inside the sampler, so every candidate (and the returned plan) satisfies
/// the per-component limits exactly. The zero-command plan (or the warm
/// start) seeds the population.
pub fn solve_robot_plan(
    problem: &RobotPlanProblem,
    model: &SeqModel,
    config: &ShootingConfig,
    warm_start: Option<&[[f64; 3]]>,
) -> Result<RobotPlanSolution, MpcError> {
    problem.validate()?;
    let elites = config.validate()?;
    let m = problem.horizon;
    let incumbent: Vec<[f64; 3]> = match warm_start {
        Some(w) if w.len() != m => {
            return Err(MpcError::BadProblem(format!(
                "warm start has horizon {}, problem wants {m}",
                w.len()
            )))
        }
        Some(w) => clamp_commands(&encode_commands(w), problem.command_bounds, m),
        None => vec![[0.0; 3]; m],
    };
    let std0 = vec![config.command_std; 3 * m];
    let period = problem.timebase.period();

    let rollout = |commands: &[[f64; 3]]| -> Result<(Vec<[f64; 2]>, f64), MpcError> {
        let positions = rollout_robot(
            model,
            &problem.window,
            commands,
            &problem.tension_forecast,
            problem.start_position,
            period,
        )?;
        let (cost, _, _) = robot_cost(problem, commands, &positions);
        Ok((positions, cost))
    };

    let outcome = cem_minimize(
        encode_commands(&incumbent),
        std0,
        config,
        elites,
        "shoot.robot",
        |raw| {
            let commands = clamp_commands(raw, problem.command_bounds, m);
            let (_, cost) = rollout(&commands)?;
            Ok((encode_commands(&commands), cost))
        },
    )?;

    let mut commands = clamp_commands(&outcome.best_raw, problem.command_bounds, m);
    let (mut positions, mut cost) = rollout(&commands)?;
    let mut step = config.refine_step_size;
    for _ in 0..config.refine_steps {
        let (_, _, du) = robot_plan_gradient(problem, model, &commands)?;
        let mut improved = false;
        for _ in 0..6 {
            let mut raw = encode_commands(&commands);
            for k in 0..m {
                raw[k] -= step * du[k][0];
                raw[m + k] -= step * du[k][1];
                raw[2 * m + k] -= step * du[k][2];
            }
            let candidate = clamp_commands(&raw, problem.command_bounds, m);
            let (cand_pos, cand_cost) = rollout(&candidate)?;
            if cand_cost < cost {
                commands = candidate;
                positions = cand_pos;
                cost = cand_cost;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }

    let (total, tracking, effort) = robot_cost(problem, &commands, &positions);
    debug_assert!((total - cost).abs() <= 1e-9 * cost.abs().max(1.0));
    Ok(RobotPlanSolution {
        commands,
        predicted: positions,
        cost: total,
        tracking_cost: tracking,
        effort_cost: effort,
        cost_trace: outcome.trace,
    })
}

/// Sign-flips the planned pull on the human into the tension the robot
/// feels, for feeding the leash planner's solution to the command planner.
pub fn robot_tension_forecast(solution: &HumanPlanSolution) -> Vec<[f64; 2]> {
    solution.plan.force_vectors().iter().map(|f| [-f[0], -f[1]]).collect()
}

/// Joint plan export: one row per step with the leash decisions, waypoint,
/// robot target, and command. Horizons may differ; missing fields stay
/// empty.
pub fn plan_csv(human: &HumanPlanSolution, robot: &RobotPlanSolution) -> String {
    use std::fmt::Write as _;
    let mut out =
        String::from("k,F,F_x,F_y,l,theta,xh_x,xh_y,xr_x,xr_y,u_x,u_y,u_w\n");
    let forces = human.plan.force_vectors();
    let rows = human.plan.horizon().max(robot.commands.len());
    for k in 0..rows {
        let _ = write!(out, "{k}");
        if k < human.plan.horizon() {
            let _ = write!(
                out,
                ",{},{},{},{},{},{},{},{},{}",
                human.plan.force_mag[k],
                forces[k][0],
                forces[k][1],
                human.plan.length[k],
                normalize_angle(human.plan.bearing[k]),
                human.waypoints[k][0],
                human.waypoints[k][1],
                human.robot_targets[k][0],
                human.robot_targets[k][1]
            );
        } else {
            out.push_str(",,,,,,,,,");
        }
        if k < robot.commands.len() {
            let u = &robot.commands[k];
            let _ = write!(out, ",{},{},{}", u[0], u[1], u[2]);
        } else {
            out.push_str(",,,");
        }
        out.push('\n');
    }
    out
}

/// A model with exactly linear dynamics v_{k+1} = gain * F_k, depending
/// only on the last window row. Built for validating the planners against
/// closed-form optima; the identity residual path of a single block with
/// zeroed convolutions passes the inputs straight to the linear head.
pub fn linear_human_reference(window: usize, gain: f64) -> SeqModel {
    use crate::nn::{Architecture, Layout, ModelSpec};
    let channels = DatasetKind::Human.channels();
    let spec = ModelSpec {
        input_channels: channels,
        window,
        output_dim: 2,
        layout: Layout::Tcn { blocks: 1, channels, kernel: 2 },
    };
    let mut model = SeqModel::new(spec, 0).expect("valid spec");
    assert_eq!(model.arch(), Architecture::Tcn);
    let (fx, fy) = DatasetKind::Human.force_cols();
    let mut blocks = model.param_blocks_mut();
    for b in blocks.iter_mut() {
        b.iter_mut().for_each(|v| *v = 0.0);
    }
    // Head weight is output_dim x channels, row-major.
    let head = blocks.len() - 2;
    blocks[head][fx] = gain;
    blocks[head][channels + fy] = gain;
    model
}

/// A model with exactly linear robot dynamics v_{k+1} = u_k - discount * F_k.
pub fn linear_robot_reference(window: usize, discount: f64) -> SeqModel {
    use crate::nn::{Layout, ModelSpec};
    let channels = DatasetKind::Robot.channels();
    let spec = ModelSpec {
        input_channels: channels,
        window,
        output_dim: 2,
        layout: Layout::Tcn { blocks: 1, channels, kernel: 2 },
    };
    let mut model = SeqModel::new(spec, 0).expect("valid spec");
    let (fx, fy) = DatasetKind::Robot.force_cols();
    let mut blocks = model.param_blocks_mut();
    for b in blocks.iter_mut() {
        b.iter_mut().for_each(|v| *v = 0.0);
    }
    let head = blocks.len() - 2;
    blocks[head][2] = 1.0;
    blocks[head][fx] = -discount;
    blocks[head][channels + 3] = 1.0;
    blocks[head][channels + fy] = -discount;
    model
}

/// A model that predicts the same velocity regardless of input.
pub fn constant_velocity_reference(
    kind: DatasetKind,
    window: usize,
    velocity: [f64; 2],
) -> SeqModel {
    use crate::nn::{Layout, ModelSpec};
    let channels = kind.channels();
    let spec = ModelSpec {
        input_channels: channels,
        window,
        output_dim: 2,
        layout: Layout::Tcn { blocks: 1, channels, kernel: 2 },
    };
    let mut model = SeqModel::new(spec, 0).expect("valid spec");
    let mut blocks = model.param_blocks_mut();
    for b in blocks.iter_mut() {
        b.iter_mut().for_each(|v| *v = 0.0);
    }
    let bias = blocks.len() - 1;
    blocks[bias][0] = velocity[0];
    blocks[bias][1] = velocity[1];
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tb(period: f64) -> Timebase {
        Timebase::new(period).unwrap()
    }

    fn human_window(rows: usize) -> Tensor2 {
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|r| {
                let t = r as f64;
                human_row(
                    Vec3::new(0.05 * (0.3 * t).sin(), 0.04 * (0.2 * t).cos(), 0.0),
                    Vec3::new(1.0 + 0.1 * t, -0.5 + 0.05 * t, 0.0),
                )
            })
            .collect();
        Tensor2::from_rows(&data).unwrap()
    }

    fn robot_window(rows: usize) -> Tensor2 {
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|r| {
                let t = r as f64;
                robot_row(
                    Vec3::new(0.03 * (0.4 * t).cos(), -0.02 * (0.3 * t).sin(), 0.0),
                    [0.2, -0.1 + 0.02 * t, 0.05],
                    Vec3::new(-0.8 - 0.1 * t, 0.4, 0.0),
                )
            })
            .collect();
        Tensor2::from_rows(&data).unwrap()
    }

    fn basic_problem(m: usize) -> HumanPlanProblem {
        HumanPlanProblem {
            horizon: m,
            waypoints: vec![[0.0; 2]; m],
            window: human_window(6),
            start_position: [0.0, 0.0],
            current: LeashState { tension: 10.0, length: 1.0, bearing: 0.0 },
            waypoint_weight: 1.0,
            force_step_weight: 0.0,
            magnitude_step_weight: 0.0,
            bearing_step_weight: 0.0,
            length_step_weight: 0.0,
            tension_bounds: (2.0, 20.0),
            length_bounds: (0.8, 1.2),
            max_force_turn: PI,
            max_leash_skew: 0.8,
            obstacles: vec![],
            clearance: 0.0,
            timebase: tb(0.02),
        }
    }

    fn basic_robot_problem(m: usize) -> RobotPlanProblem {
        RobotPlanProblem {
            horizon: m,
            targets: vec![[0.0; 2]; m],
            window: robot_window(6),
            start_position: [0.0, 0.0],
            tension_forecast: vec![[0.0; 2]; m],
            tracking_weight: 1.0,
            effort_weight: 1e-6,
            command_bounds: [1.0, 1.0, 1.0],
            timebase: tb(0.1),
        }
    }

    #[test]
    fn hold_and_shift_helpers_repeat_the_edges() {
        let state = LeashState { tension: 7.0, length: 1.1, bearing: 0.3 };
        let hold = LeashPlan::hold(&state, 3);
        assert_eq!(hold.force_mag, vec![7.0; 3]);
        assert_eq!(hold.force_angle, vec![0.3; 3]);
        assert_eq!(hold.length, vec![1.1; 3]);
        assert_eq!(hold.bearing, vec![0.3; 3]);
        let plan = LeashPlan {
            force_mag: vec![1.0, 2.0, 3.0],
            force_angle: vec![0.1, 0.2, 0.3],
            length: vec![1.0, 1.1, 1.2],
            bearing: vec![0.4, 0.5, 0.6],
        };
        let s = plan.shifted();
        assert_eq!(s.force_mag, vec![2.0, 3.0, 3.0]);
        assert_eq!(s.bearing, vec![0.5, 0.6, 0.6]);
        let u = shifted_commands(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(u, vec![[4.0, 5.0, 6.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn project_angle_clamps_on_the_circle() {
        assert_eq!(project_angle(0.3, 0.0, 0.5), 0.3);
        assert_eq!(project_angle(0.9, 0.0, 0.5), 0.5);
        assert_eq!(project_angle(-0.9, 0.0, 0.5), -0.5);
        // Window straddling the wrap seam: 3.0 is 0.2832 rad clockwise of
        // -3.0, so it stays put (expressed relative to the center).
        let a = project_angle(3.0, -3.0, 0.5);
        assert!((normalize_angle(a - 3.0)).abs() < 1e-12);
        // A point on the far side of the circle clamps to the lower edge.
        let b = project_angle(0.0, PI - 0.1, 0.2);
        assert!((b - (PI - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn rollout_integrates_a_constant_velocity_model() {
        let model = constant_velocity_reference(DatasetKind::Human, 6, [0.5, -0.25]);
        let forces = vec![[3.0, 0.0]; 4];
        let got =
            rollout_human(&model, &human_window(6), &forces, [1.0, 2.0], 0.02).unwrap();
        for (k, p) in got.iter().enumerate() {
            let t = (k + 1) as f64 * 0.02;
            assert!((p[0] - (1.0 + 0.5 * t)).abs() < 1e-12);
            assert!((p[1] - (2.0 - 0.25 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn rollout_reproduces_a_linear_force_law_by_hand() {
        let gain = 0.05;
        let model = linear_human_reference(6, gain);
        let forces = vec![[4.0, 1.0], [-2.0, 3.0], [6.0, -5.0]];
        let got = rollout_human(&model, &human_window(6), &forces, [0.0, 0.0], 0.1).unwrap();
        let mut x = [0.0, 0.0];
        for (k, f) in forces.iter().enumerate() {
            x[0] += gain * f[0] * 0.1;
            x[1] += gain * f[1] * 0.1;
            assert!((got[k][0] - x[0]).abs() < 1e-12, "step {k}");
            assert!((got[k][1] - x[1]).abs() < 1e-12, "step {k}");
        }
    }

    #[test]
    fn robot_rollout_mixes_commands_and_tension() {
        let d = 0.1;
        let model = linear_robot_reference(6, d);
        let commands = vec![[0.5, -0.2, 0.3], [0.1, 0.4, -0.2]];
        let forecast = vec![[-2.0, 1.0], [3.0, -1.5]];
        let got =
            rollout_robot(&model, &robot_window(6), &commands, &forecast, [0.0, 0.0], 0.1)
                .unwrap();
        let mut x = [0.0, 0.0];
        for k in 0..commands.len() {
            let v = [
                commands[k][0] - d * forecast[k][0],
                commands[k][1] - d * forecast[k][1],
            ];
            x[0] += v[0] * 0.1;
            x[1] += v[1] * 0.1;
            assert!((got[k][0] - x[0]).abs() < 1e-12, "step {k}");
            assert!((got[k][1] - x[1]).abs() < 1e-12, "step {k}");
        }
    }

    #[test]
    fn holding_on_the_waypoints_costs_nothing() {
        let model = constant_velocity_reference(DatasetKind::Human, 6, [0.5, 0.0]);
        let mut problem = basic_problem(4);
        problem.force_step_weight = 2.0;
        problem.magnitude_step_weight = 3.0;
        problem.bearing_step_weight = 4.0;
        problem.length_step_weight = 5.0;
        let plan = LeashPlan::hold(&problem.current, 4);
        let predicted = rollout_human(
            &model,
            &problem.window,
            &plan.force_vectors(),
            problem.start_position,
            0.02,
        )
        .unwrap();
        problem.waypoints = predicted.clone();
        let eval = evaluate_human_plan(&problem, &model, &plan, 1e4).unwrap();
        assert_eq!(eval.cost, 0.0);
        assert_eq!(eval.breakdown, HumanCostBreakdown::default());
        assert_eq!(eval.max_residual, 0.0);
    }

    #[test]
    fn unit_tracking_offsets_sum_with_the_half_weight_rule() {
        let mut problem = basic_problem(4);
        problem.waypoint_weight = 3.0;
        let plan = LeashPlan::hold(&problem.current, 4);
        let positions: Vec<[f64; 2]> =
            problem.waypoints.iter().map(|w| [w[0], w[1] + 1.0]).collect();
        let (cost, b) = human_cost(&problem, &plan, &positions);
        assert!((cost - 6.0).abs() < 1e-12);
        assert!((b.tracking - 6.0).abs() < 1e-12);
        assert_eq!(b.force_step, 0.0);
    }

    #[test]
    fn cost_breakdown_matches_a_naive_reimplementation() {
        let mut problem = basic_problem(3);
        problem.waypoints = vec![[0.1, 0.0], [0.2, 0.1], [0.3, 0.1]];
        problem.waypoint_weight = 1.3;
        problem.force_step_weight = 0.7;
        problem.magnitude_step_weight = 0.9;
        problem.bearing_step_weight = 1.1;
        problem.length_step_weight = 0.4;
        let plan = LeashPlan {
            force_mag: vec![9.0, 11.0, 10.5],
            force_angle: vec![0.1, 0.25, 0.2],
            length: vec![0.95, 1.0, 1.1],
            bearing: vec![0.2, 0.3, 0.1],
        };
        let positions = vec![[0.12, 0.01], [0.19, 0.12], [0.31, 0.08]];
        let (cost, b) = human_cost(&problem, &plan, &positions);
        assert!((b.total() - cost).abs() <= 1e-12 * cost.abs());

        // Independent accumulation over padded sequences.
        let cur = problem.current;
        let mags: Vec<f64> = std::iter::once(cur.tension)
            .chain(plan.force_mag.iter().copied())
            .collect();
        let angles: Vec<f64> = std::iter::once(cur.bearing)
            .chain(plan.force_angle.iter().copied())
            .collect();
        let lens: Vec<f64> =
            std::iter::once(cur.length).chain(plan.length.iter().copied()).collect();
        let bears: Vec<f64> =
            std::iter::once(cur.bearing).chain(plan.bearing.iter().copied()).collect();
        let mut want = 0.0;
        for k in 0..3 {
            let dx = positions[k][0] - problem.waypoints[k][0];
            let dy = positions[k][1] - problem.waypoints[k][1];
            want += 0.5 * 1.3 * (dx * dx + dy * dy);
            let f0 = [mags[k] * angles[k].cos(), mags[k] * angles[k].sin()];
            let f1 = [mags[k + 1] * angles[k + 1].cos(), mags[k + 1] * angles[k + 1].sin()];
            want += 0.5 * 0.7 * ((f1[0] - f0[0]).powi(2) + (f1[1] - f0[1]).powi(2));
            want += 0.9 * (mags[k + 1] - mags[k]).powi(2);
            want += 1.1 * (1.0 - (bears[k + 1] - bears[k]).cos());
            want += 0.4 * (lens[k + 1] - lens[k]).powi(2);
        }
        assert!((cost - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    fn bump(plan: &LeashPlan, family: usize, k: usize, delta: f64) -> LeashPlan {
        let mut out = plan.clone();
        match family {
            0 => out.force_mag[k] += delta,
            1 => out.force_angle[k] += delta,
            2 => out.length[k] += delta,
            _ => out.bearing[k] += delta,
        }
        out
    }

    #[test]
    fn plan_gradients_match_finite_differences() {
        use crate::nn::ModelSpec;
        let model = SeqModel::new(ModelSpec::tcn(4, 6, 2), 7).unwrap();
        let mut problem = basic_problem(3);
        problem.waypoints = vec![[0.02, 0.0], [0.04, 0.01], [0.05, 0.02]];
        problem.waypoint_weight = 1.5;
        problem.force_step_weight = 0.3;
        problem.magnitude_step_weight = 0.2;
        problem.bearing_step_weight = 0.6;
        problem.length_step_weight = 0.5;
        problem.max_force_turn = 0.6;
        problem.max_leash_skew = 0.5;
        let plan = LeashPlan {
            force_mag: vec![9.0, 10.5, 11.0],
            force_angle: vec![0.1, 0.3, 0.2],
            length: vec![1.0, 1.05, 0.95],
            bearing: vec![0.2, 0.4, 0.35],
        };
        // Park one obstacle close enough to the step-1 prediction that the
        // clearance penalty is active with a wide margin on both sides of
        // its kink, and one far away that stays inactive.
        let eval0 = evaluate_human_plan(&problem, &model, &plan, 1e4).unwrap();
        problem.obstacles =
            vec![[eval0.positions[1][0] + 0.3, eval0.positions[1][1]], [50.0, 50.0]];
        problem.clearance = 0.35;
        let (eval, grad) = human_plan_gradient(&problem, &model, &plan, 1e4).unwrap();
        assert!(eval.max_residual > 1e-3, "obstacle term should be active");
        let eps = 1e-6;
        for family in 0..4 {
            for k in 0..3 {
                let up = evaluate_human_plan(&problem, &model, &bump(&plan, family, k, eps), 1e4)
                    .unwrap()
                    .penalized_cost;
                let dn = evaluate_human_plan(&problem, &model, &bump(&plan, family, k, -eps), 1e4)
                    .unwrap()
                    .penalized_cost;
                let fd = (up - dn) / (2.0 * eps);
                let an = match family {
                    0 => grad.force_mag[k],
                    1 => grad.force_angle[k],
                    2 => grad.length[k],
                    _ => grad.bearing[k],
                };
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1.0);
                assert!(rel < 1e-6, "family {family} step {k}: analytic {an} vs fd {fd}");
            }
        }
    }

    #[test]
    fn command_gradients_match_finite_differences() {
        use crate::nn::ModelSpec;
        let model = SeqModel::new(ModelSpec::tcn(7, 6, 2), 11).unwrap();
        let mut problem = basic_robot_problem(3);
        problem.targets = vec![[0.05, 0.0], [0.1, 0.02], [0.12, 0.03]];
        problem.tension_forecast = vec![[-1.0, 0.5], [-0.8, 0.4], [-0.6, 0.2]];
        problem.effort_weight = 0.5;
        let commands = vec![[0.3, -0.2, 0.1], [0.25, 0.15, -0.05], [0.2, 0.1, 0.0]];
        let (_, _, du) = robot_plan_gradient(&problem, &model, &commands).unwrap();
        let eps = 1e-6;
        let cost_of = |cmds: &[[f64; 3]]| {
            let pos = rollout_robot(
                &model,
                &problem.window,
                cmds,
                &problem.tension_forecast,
                problem.start_position,
                problem.timebase.period(),
            )
            .unwrap();
            robot_cost(&problem, cmds, &pos).0
        };
        for k in 0..3 {
            for c in 0..3 {
                let mut up = commands.clone();
                up[k][c] += eps;
                let mut dn = commands.clone();
                dn[k][c] -= eps;
                let fd = (cost_of(&up) - cost_of(&dn)) / (2.0 * eps);
                let an = du[k][c];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1.0);
                assert!(rel < 1e-6, "step {k} channel {c}: analytic {an} vs fd {fd}");
            }
        }
    }

    #[test]
    fn the_planner_matches_a_closed_form_single_step_optimum() {
        let gain = 0.05;
        let t = 0.02;
        let d = 0.015;
        let w3 = 1e-5;
        let fc = 10.0;
        let model = linear_human_reference(6, gain);
        let mut problem = basic_problem(1);
        problem.waypoints = vec![[d, 0.0]];
        problem.magnitude_step_weight = w3;
        problem.timebase = tb(t);
        let cfg = ShootingConfig {
            population: 96,
            iterations: 40,
            refine_steps: 10,
            refine_step_size: 1e3,
            seed: 5,
            ..ShootingConfig::default()
        };
        let sol = solve_human_plan(&problem, &model, &cfg, None).unwrap();
        assert!(sol.feasible);

        // With the pull aligned to the waypoint the objective is an exact
        // quadratic in the magnitude.
        let ct = gain * t;
        let j_of = |f: f64| 0.5 * (ct * f - d).powi(2) + w3 * (f - fc).powi(2);
        let f_star = (ct * d + 2.0 * w3 * fc) / (ct * ct + 2.0 * w3);
        let j_star = j_of(f_star);
        let mut j_grid = f64::INFINITY;
        let mut f = 2.0;
        while f <= 20.0 {
            j_grid = j_grid.min(j_of(f));
            f += 1e-3;
        }
        assert!(sol.cost >= j_star - 1e-12);
        assert!(
            (sol.cost - j_star).abs() <= 0.01 * j_star,
            "solver {} vs closed form {j_star}",
            sol.cost
        );
        assert!(sol.cost <= j_grid * 1.01);
        assert!((sol.plan.force_mag[0] - f_star).abs() < 0.2);
    }

    #[test]
    fn a_stationary_goal_settles_near_the_start() {
        let model = linear_human_reference(6, 0.05);
        let mut problem = basic_problem(4);
        problem.current = LeashState { tension: 10.0, length: 1.0, bearing: 0.0 };
        let cfg = ShootingConfig {
            population: 128,
            iterations: 40,
            refine_steps: 6,
            refine_step_size: 1e3,
            seed: 9,
            ..ShootingConfig::default()
        };
        let sol = solve_human_plan(&problem, &model, &cfg, None).unwrap();
        assert!(sol.feasible);
        for p in &sol.predicted {
            assert!((p[0] * p[0] + p[1] * p[1]).sqrt() <= 0.01, "drifted to {p:?}");
        }
        // Holding the current 10 N pull drags the prediction away from the
        // goal; the solver must beat that.
        let hold = evaluate_human_plan(
            &problem,
            &model,
            &LeashPlan::hold(&problem.current, 4),
            cfg.penalty_weight,
        )
        .unwrap();
        assert!(sol.penalized_cost < hold.penalized_cost);
    }

    #[test]
    fn plans_detour_around_an_obstacle() {
        let model = linear_human_reference(6, 1.0);
        let mut problem = basic_problem(5);
        problem.timebase = tb(0.1);
        problem.tension_bounds = (0.5, 5.0);
        problem.current = LeashState { tension: 2.0, length: 1.0, bearing: 0.0 };
        problem.max_leash_skew = 2.5;
        problem.waypoints = (0..5).map(|k| [0.25 * (k + 1) as f64, 0.0]).collect();
        problem.obstacles = vec![[0.6, 0.0]];
        problem.clearance = 0.3;
        let cfg = ShootingConfig {
            population: 160,
            iterations: 50,
            refine_steps: 4,
            seed: 2,
            ..ShootingConfig::default()
        };
        let sol = solve_human_plan(&problem, &model, &cfg, None).unwrap();
        assert!(sol.feasible, "max residual {}", sol.max_residual);
        for (k, p) in sol.predicted.iter().enumerate() {
            let dh = ((p[0] - 0.6).powi(2) + p[1].powi(2)).sqrt();
            assert!(dh >= 0.3 - 1e-6, "human point {k} at distance {dh}");
            let r = [
                p[0] + sol.plan.length[k] * sol.plan.bearing[k].cos(),
                p[1] + sol.plan.length[k] * sol.plan.bearing[k].sin(),
            ];
            let dr = ((r[0] - 0.6).powi(2) + r[1].powi(2)).sqrt();
            assert!(dr >= 0.3 - 1e-6, "robot point {k} at distance {dr}");
        }
    }

    #[test]
    fn solutions_are_bitwise_deterministic() {
        let model = linear_human_reference(6, 0.05);
        let mut problem = basic_problem(3);
        problem.waypoints = vec![[0.01, 0.0], [0.02, 0.005], [0.03, 0.01]];
        let cfg = ShootingConfig { population: 32, iterations: 8, seed: 42, ..Default::default() };
        let a = solve_human_plan(&problem, &model, &cfg, None).unwrap();
        let b = solve_human_plan(&problem, &model, &cfg, None).unwrap();
        assert_eq!(a.plan, b.plan);
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        assert_eq!(a.penalized_cost.to_bits(), b.penalized_cost.to_bits());
        assert_eq!(
            a.cost_trace.iter().map(|c| c.to_bits()).collect::<Vec<_>>(),
            b.cost_trace.iter().map(|c| c.to_bits()).collect::<Vec<_>>()
        );
        let rmodel = linear_robot_reference(6, 0.1);
        let rproblem = basic_robot_problem(3);
        let ra = solve_robot_plan(&rproblem, &rmodel, &cfg, None).unwrap();
        let rb = solve_robot_plan(&rproblem, &rmodel, &cfg, None).unwrap();
        assert_eq!(ra.commands, rb.commands);
        assert_eq!(ra.cost.to_bits(), rb.cost.to_bits());
    }

    #[test]
    fn an_out_of_range_leash_state_is_reported_infeasible() {
        let model = linear_human_reference(6, 0.05);
        let mut problem = basic_problem(2);
        problem.current.tension = 1.0;
        let cfg = ShootingConfig { population: 4, iterations: 1, ..Default::default() };
        assert!(matches!(
            solve_human_plan(&problem, &model, &cfg, None),
            Err(MpcError::Infeasible(_))
        ));
        problem.current.tension = 10.0;
        problem.current.length = 2.0;
        assert!(matches!(
            solve_human_plan(&problem, &model, &cfg, None),
            Err(MpcError::Infeasible(_))
        ));
    }

    #[test]
    fn returned_cost_never_exceeds_the_hold_plan() {
        let model = linear_human_reference(6, 0.05);
        let mut problem = basic_problem(4);
        problem.waypoints = vec![[0.02, 0.01], [0.03, 0.02], [0.05, 0.02], [0.06, 0.03]];
        problem.force_step_weight = 0.1;
        problem.bearing_step_weight = 0.2;
        let cfg = ShootingConfig { population: 24, iterations: 6, seed: 3, ..Default::default() };
        let sol = solve_human_plan(&problem, &model, &cfg, None).unwrap();
        let hold = evaluate_human_plan(
            &problem,
            &model,
            &LeashPlan::hold(&problem.current, 4),
            cfg.penalty_weight,
        )
        .unwrap();
        assert!(sol.penalized_cost <= hold.penalized_cost + 1e-12);
        for pair in sol.cost_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "trace increased: {pair:?}");
        }
    }

    #[test]
    fn robot_targets_recompute_bitwise_from_the_plan() {
        let model = linear_human_reference(6, 0.05);
        let mut problem = basic_problem(3);
        problem.waypoints = vec![[0.01, 0.0], [0.02, 0.01], [0.04, 0.01]];
        let cfg = ShootingConfig { population: 16, iterations: 4, seed: 8, ..Default::default() };
        let sol = solve_human_plan(&problem, &model, &cfg, None).unwrap();
        for k in 0..3 {
            let want = [
                problem.waypoints[k][0] + sol.plan.length[k] * sol.plan.bearing[k].cos(),
                problem.waypoints[k][1] + sol.plan.length[k] * sol.plan.bearing[k].sin(),
            ];
            assert_eq!(sol.robot_targets[k][0].to_bits(), want[0].to_bits());
            assert_eq!(sol.robot_targets[k][1].to_bits(), want[1].to_bits());
        }
        // The forecast handed to the command planner is the sign-flipped
        // planned pull.
        let forecast = robot_tension_forecast(&sol);
        let forces = sol.plan.force_vectors();
        for k in 0..3 {
            assert_eq!(forecast[k][0].to_bits(), (-forces[k][0]).to_bits());
            assert_eq!(forecast[k][1].to_bits(), (-forces[k][1]).to_bits());
        }
    }

    #[test]
    fn a_zero_target_keeps_the_robot_still() {
        let model = linear_robot_reference(6, 0.1);
        let mut problem = basic_robot_problem(4);
        problem.effort_weight = 0.5;
        let cfg = ShootingConfig { population: 32, iterations: 6, seed: 1, ..Default::default() };
        let sol = solve_robot_plan(&problem, &model, &cfg, None).unwrap();
        assert_eq!(sol.commands, vec![[0.0; 3]; 4]);
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn the_robot_tracks_a_straight_line() {
        let model = linear_robot_reference(6, 0.05);
        let mut problem = basic_robot_problem(5);
        problem.targets = (0..5).map(|k| [0.05 * (k + 1) as f64, 0.0]).collect();
        problem.tension_forecast = vec![[-2.0, 0.0]; 5];
        let cfg = ShootingConfig {
            population: 96,
            iterations: 40,
            refine_steps: 10,
            refine_step_size: 1.0,
            seed: 4,
            ..ShootingConfig::default()
        };
        let sol = solve_robot_plan(&problem, &model, &cfg, None).unwrap();
        let mean_speed = sol.predicted[4][0] / (5.0 * 0.1);
        assert!(
            (mean_speed - 0.5).abs() <= 0.01,
            "mean speed {mean_speed} should be within 2% of 0.5"
        );
        for pair in sol.cost_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn commands_clamp_exactly_to_the_bounds() {
        let model = linear_robot_reference(6, 0.0);
        let mut problem = basic_robot_problem(4);
        problem.targets = vec![[10.0, 0.0]; 4];
        problem.effort_weight = 0.0;
        problem.command_bounds = [1.0, 0.5, 0.1];
        let cfg = ShootingConfig {
            population: 128,
            iterations: 30,
            refine_steps: 8,
            refine_step_size: 10.0,
            seed: 6,
            ..ShootingConfig::default()
        };
        let sol = solve_robot_plan(&problem, &model, &cfg, None).unwrap();
        for u in &sol.commands {
            assert_eq!(u[0], 1.0, "x command should sit exactly on the bound");
            assert!(u[1].abs() <= 0.5);
            assert!(u[2].abs() <= 0.1);
        }
    }

    #[test]
    fn warm_starts_bound_the_next_solve() {
        let model = linear_human_reference(6, 0.05);
        let mut p1 = basic_problem(3);
        p1.waypoints = vec![[0.01, 0.0], [0.02, 0.0], [0.03, 0.0]];
        let cfg = ShootingConfig { population: 48, iterations: 12, seed: 7, ..Default::default() };
        let sol1 = solve_human_plan(&p1, &model, &cfg, None).unwrap();
        let warm = sol1.plan.shifted();

        let mut p2 = p1.clone();
        p2.start_position = sol1.predicted[0];
        p2.waypoints = vec![[0.02, 0.0], [0.03, 0.0], [0.04, 0.0]];
        // A one-candidate run evaluates exactly the warm incumbent.
        let probe = ShootingConfig { population: 1, iterations: 1, ..cfg };
        let incumbent = solve_human_plan(&p2, &model, &probe, Some(&warm)).unwrap();
        let sol2 = solve_human_plan(&p2, &model, &cfg, Some(&warm)).unwrap();
        assert!(sol2.penalized_cost <= incumbent.penalized_cost + 1e-12);

        let bad = LeashPlan::hold(&p2.current, 5);
        assert!(matches!(
            solve_human_plan(&p2, &model, &cfg, Some(&bad)),
            Err(MpcError::BadProblem(_))
        ));
    }

    #[test]
    fn refinement_never_increases_cost() {
        let model = linear_human_reference(6, 0.05);
        let mut problem = basic_problem(3);
        problem.waypoints = vec![[0.02, 0.01], [0.04, 0.01], [0.05, 0.03]];
        problem.force_step_weight = 0.05;
        let base = ShootingConfig {
            population: 16,
            iterations: 3,
            min_std: 0.05,
            seed: 12,
            ..ShootingConfig::default()
        };
        let plain = solve_human_plan(&problem, &model, &base, None).unwrap();
        let refined_cfg =
            ShootingConfig { refine_steps: 8, refine_step_size: 1e3, ..base };
        let refined = solve_human_plan(&problem, &model, &refined_cfg, None).unwrap();
        assert!(refined.penalized_cost <= plain.penalized_cost + 1e-12);

        let rmodel = linear_robot_reference(6, 0.1);
        let mut rproblem = basic_robot_problem(3);
        rproblem.targets = vec![[0.05, 0.0], [0.08, 0.02], [0.1, 0.04]];
        let rplain = solve_robot_plan(&rproblem, &rmodel, &base, None).unwrap();
        let rrefined = solve_robot_plan(&rproblem, &rmodel, &refined_cfg, None).unwrap();
        assert!(rrefined.cost <= rplain.cost + 1e-12);
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let model = linear_human_reference(6, 0.05);
        let cfg = ShootingConfig::default();
        let mut p = basic_problem(3);
        p.waypoints.pop();
        assert!(matches!(
            solve_human_plan(&p, &model, &cfg, None),
            Err(MpcError::BadProblem(_))
        ));
        let mut p = basic_problem(3);
        p.tension_bounds = (5.0, 5.0);
        assert!(solve_human_plan(&p, &model, &cfg, None).is_err());
        let mut p = basic_problem(3);
        p.window = robot_window(6);
        assert!(solve_human_plan(&p, &model, &cfg, None).is_err());
        let p = basic_problem(3);
        let bad_cfg = ShootingConfig { population: 0, ..Default::default() };
        assert!(solve_human_plan(&p, &model, &bad_cfg, None).is_err());
        let bad_cfg = ShootingConfig { elite_fraction: 0.0, ..Default::default() };
        assert!(solve_human_plan(&p, &model, &bad_cfg, None).is_err());

        assert!(rollout_human(&model, &human_window(6), &[], [0.0; 2], 0.02).is_err());
        let rmodel = linear_robot_reference(6, 0.1);
        assert!(rollout_robot(
            &rmodel,
            &robot_window(6),
            &[[0.0; 3]; 2],
            &[[0.0; 2]; 3],
            [0.0; 2],
            0.02
        )
        .is_err());
        let mut rp = basic_robot_problem(2);
        rp.command_bounds = [1.0, -1.0, 1.0];
        assert!(solve_robot_plan(&rp, &rmodel, &cfg, None).is_err());
    }

    #[test]
    fn plan_csv_lines_up_both_horizons() {
        let model = linear_human_reference(6, 0.05);
        let mut problem = basic_problem(3);
        problem.waypoints = vec![[0.01, 0.0], [0.02, 0.0], [0.03, 0.0]];
        let cfg = ShootingConfig { population: 8, iterations: 2, seed: 1, ..Default::default() };
        let human = solve_human_plan(&problem, &model, &cfg, None).unwrap();
        let rmodel = linear_robot_reference(6, 0.1);
        let rproblem = basic_robot_problem(2);
        let robot = solve_robot_plan(&rproblem, &rmodel, &cfg, None).unwrap();
        let csv = plan_csv(&human, &robot);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "k,F,F_x,F_y,l,theta,xh_x,xh_y,xr_x,xr_y,u_x,u_y,u_w");
        assert!(lines[1].starts_with("0,"));
        assert_eq!(lines[1].split(',').count(), 13);
        // Row 2 (k = 2) has leash fields but no command fields.
        let cells: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(cells.len(), 13);
        assert!(!cells[1].is_empty());
        assert!(cells[10].is_empty() && cells[11].is_empty() && cells[12].is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn projected_plans_always_satisfy_the_hard_bounds(
            m in 1usize..5,
            raw in prop::collection::vec(-20.0f64..20.0, 16),
            f_lo in 0.5f64..5.0,
            f_span in 0.5f64..15.0,
            l_lo in 0.3f64..1.0,
            l_span in 0.2f64..1.0,
            turn in 0.05f64..3.0,
            skew in 0.05f64..3.0,
            bearing in -3.0f64..3.0,
        ) {
            let mut problem = basic_problem(m);
            problem.tension_bounds = (f_lo, f_lo + f_span);
            problem.length_bounds = (l_lo, l_lo + l_span);
            problem.max_force_turn = turn;
            problem.max_leash_skew = skew;
            problem.current = LeashState {
                tension: f_lo + 0.5 * f_span,
                length: l_lo + 0.5 * l_span,
                bearing,
            };
            let plan = project_leash_plan(&problem, &raw[..4 * m]);
            let mut prev = bearing;
            for k in 0..m {
                prop_assert!(plan.force_mag[k] >= f_lo && plan.force_mag[k] <= f_lo + f_span);
                prop_assert!(plan.length[k] >= l_lo && plan.length[k] <= l_lo + l_span);
                let step = normalize_angle(plan.force_angle[k] - prev).abs();
                prop_assert!(step <= turn + 1e-12, "turn {step} > {turn}");
                let off = normalize_angle(plan.force_angle[k] - plan.bearing[k]).abs();
                prop_assert!(off <= skew + 1e-12, "skew {off} > {skew}");
                prev = plan.force_angle[k];
            }
        }
    }
}
