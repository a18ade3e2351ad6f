//! One-shot planning from a state snapshot: waypoint selection, the leash
//! planner, then the command planner, with every decision and cost term
//! dumped to files. A debugging surface for the closed loop.

use std::fmt::Write as _;
use std::path::Path;

use guide_core::base::{LeashEnd, TensionSample, Vec3};
use guide_core::mpc::{
    plan_csv, robot_tension_forecast, solve_human_plan, solve_robot_plan, HumanPlanProblem,
    HumanPlanSolution, LeashState, RobotPlanProblem, RobotPlanSolution,
};
use guide_core::nn::Tensor2;
use guide_core::pathsmooth::select_waypoints;
use guide_core::predictors::{human_row, robot_row};
use guide_core::sim::{plan_course, ScenarioSpec};
use guide_core::worldmap::GridMap;
use guide_core::Params;

use crate::outdir::OutDir;
use crate::snapshot::{self, PlanSnapshot};
use crate::CliError;

fn vec3(p: [f64; 2]) -> Vec3 {
    Vec3::new(p[0], p[1], 0.0)
}

/// Waypoints and obstacle points for the snapshot's goal. A goal at the
/// current position short-circuits to hold-station waypoints.
fn course_waypoints(
    params: &Params,
    snap: &PlanSnapshot,
    speed: f64,
    seed: u64,
) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>), CliError> {
    let horizon = params.human_mpc.horizon;
    let tb = params.timebase()?;
    let human = vec3(snap.human_position);
    if (vec3(snap.goal) - human).norm() < 1e-9 {
        let obstacles = match &snap.map_text {
            None => Vec::new(),
            Some(text) => GridMap::parse(text)?
                .extract_obstacle_points()
                .iter()
                .map(|p| [p.x, p.y])
                .collect(),
        };
        return Ok((vec![snap.human_position; horizon], obstacles));
    }
    let scenario = ScenarioSpec {
        map_text: snap.map_text.clone(),
        start: snap.human_position,
        goal: snap.goal,
        episode_seconds: 1.0,
        seed,
        nominal_separation: params.sim.nominal_separation,
        agent: params.human_agent(1.0),
        robot: params.robot_response(),
        leash: params.leash(),
    };
    let course =
        plan_course(&scenario, params.selector.inflation_radius, params.selector.wrps_threshold)?;
    let s0 = course.path.project(human, None);
    let plan = select_waypoints(&course.path, s0, speed, horizon, &tb)?;
    Ok((plan.points.iter().map(|p| [p.x, p.y]).collect(), course.obstacles))
}

fn render(
    snap: &PlanSnapshot,
    speed: f64,
    state: &LeashState,
    hsol: &HumanPlanSolution,
    rsol: &RobotPlanSolution,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "snapshot: human ({:.3}, {:.3}) v ({:.3}, {:.3})  robot ({:.3}, {:.3}) v ({:.3}, {:.3})",
        snap.human_position[0],
        snap.human_position[1],
        snap.human_velocity[0],
        snap.human_velocity[1],
        snap.robot_position[0],
        snap.robot_position[1],
        snap.robot_velocity[0],
        snap.robot_velocity[1]
    );
    let _ = writeln!(
        out,
        "goal ({:.3}, {:.3})  held tension {:.3} N",
        snap.goal[0], snap.goal[1], snap.tension
    );
    let _ = writeln!(out, "predicted speed: {speed:.4} m/s");
    let _ = writeln!(
        out,
        "leash state: F={:.3} N  l={:.3} m  theta={:.4} rad",
        state.tension, state.length, state.bearing
    );
    let _ = writeln!(out, "\nstep  waypoint              F [N]    l [m]    theta [rad]");
    for k in 0..hsol.plan.horizon() {
        let _ = writeln!(
            out,
            "{:>4}  ({:>7.3}, {:>7.3})  {:>7.3}  {:>7.3}  {:>11.4}",
            k + 1,
            hsol.waypoints[k][0],
            hsol.waypoints[k][1],
            hsol.plan.force_mag[k],
            hsol.plan.length[k],
            hsol.plan.bearing[k]
        );
    }
    let b = &hsol.breakdown;
    let _ = writeln!(
        out,
        "\nleash cost {:.6} = tracking {:.6} + force_step {:.6} + magnitude_step {:.6} \
         + bearing_step {:.6} + length_step {:.6}",
        hsol.cost, b.tracking, b.force_step, b.magnitude_step, b.bearing_step, b.length_step
    );
    let _ = writeln!(
        out,
        "feasible: {}  max constraint residual: {:.3e}",
        hsol.feasible, hsol.max_residual
    );
    let _ = writeln!(out, "\nstep  command (ux, uy, uw)");
    for (k, u) in rsol.commands.iter().enumerate() {
        let _ = writeln!(out, "{:>4}  ({:>7.4}, {:>7.4}, {:>7.4})", k + 1, u[0], u[1], u[2]);
    }
    let _ = writeln!(
        out,
        "command cost {:.6} = tracking {:.6} + effort {:.6}",
        rsol.cost, rsol.tracking_cost, rsol.effort_cost
    );
    out
}

pub fn run(
    params: &Params,
    seed: u64,
    out: &Path,
    snapshot_path: &Path,
    weights: Option<&Path>,
) -> Result<(), CliError> {
    let snap = snapshot::load(snapshot_path)?;
    let tb = params.timebase()?;
    let (human_model, robot_model) = super::load_models(params, weights)?;
    let cfg = params.guided_config(seed);

    // Leash geometry from the snapshot positions; a coincident pair falls
    // back to a unit direction so the dump stays well defined.
    let coupling = params.leash().couple(
        vec3(snap.human_position),
        vec3(snap.robot_position),
        snap.tension,
        Vec3::new(-1.0, 0.0, 0.0),
    );
    let bearing_vec = -coupling.direction;
    let state = LeashState {
        tension: snap.tension.clamp(cfg.tension_bounds.0, cfg.tension_bounds.1),
        length: coupling.length.clamp(cfg.length_bounds.0, cfg.length_bounds.1),
        bearing: bearing_vec.y.atan2(bearing_vec.x),
    };
    let sample = TensionSample::new(coupling.tension, coupling.direction)?;

    let hrow = human_row(vec3(snap.human_velocity), sample.force_on(LeashEnd::Human));
    let rrow = robot_row(vec3(snap.robot_velocity), snap.prev_command, sample.force_on(LeashEnd::Robot));
    let human_window = Tensor2::from_rows(&vec![hrow; human_model.spec().window])?;
    let robot_window = Tensor2::from_rows(&vec![rrow; robot_model.spec().window])?;

    let predicted = human_model.forward(&human_window)?;
    let speed = predicted[0].hypot(predicted[1]);

    let (waypoints, obstacles) = course_waypoints(params, &snap, speed, seed)?;
    let problem = HumanPlanProblem {
        horizon: cfg.human_horizon,
        waypoints,
        window: human_window,
        start_position: snap.human_position,
        current: state,
        waypoint_weight: cfg.waypoint_weight,
        force_step_weight: cfg.force_step_weight,
        magnitude_step_weight: cfg.magnitude_step_weight,
        bearing_step_weight: cfg.bearing_step_weight,
        length_step_weight: cfg.length_step_weight,
        tension_bounds: cfg.tension_bounds,
        length_bounds: cfg.length_bounds,
        max_force_turn: cfg.max_force_turn,
        max_leash_skew: cfg.max_leash_skew,
        obstacles,
        clearance: cfg.clearance,
        timebase: tb,
    };
    let hsol = solve_human_plan(&problem, &human_model, &cfg.solver, None)?;

    let forecast = robot_tension_forecast(&hsol);
    let rproblem = RobotPlanProblem {
        horizon: cfg.robot_horizon,
        targets: hsol.robot_targets[..cfg.robot_horizon].to_vec(),
        window: robot_window,
        start_position: snap.robot_position,
        tension_forecast: forecast[..cfg.robot_horizon].to_vec(),
        tracking_weight: cfg.tracking_weight,
        effort_weight: cfg.effort_weight,
        command_bounds: cfg.command_bounds,
        timebase: tb,
    };
    let rsol = solve_robot_plan(&rproblem, &robot_model, &cfg.solver, None)?;

    let text = render(&snap, speed, &state, &hsol, &rsol);
    let mut dir = OutDir::create(out)?;
    dir.note_input("snapshot", snapshot_path)?;
    dir.write("plan.txt", text.as_bytes())?;
    dir.write("plan.csv", plan_csv(&hsol, &rsol).as_bytes())?;
    dir.finish("plan", seed, params)?;
    print!("{text}");
    Ok(())
}
