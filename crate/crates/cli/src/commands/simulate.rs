//! Closed-loop guided episodes, one per configured comfortable speed.
//! Emits the trace CSVs, a synchronization summary, and speed/separation
//! plots as SVG with matching CSV data.

use std::fmt::Write as _;
use std::path::Path;

use guide_core::sim::{plan_course, run_guided_episode, EpisodeOutcome, EpisodeTrace, ScenarioSpec};
use guide_core::Params;

use crate::outdir::OutDir;
use crate::plots::{line_chart, Series, COLORS};
use crate::{CliError, SEED_STRIDE};

use super::STEADY_AFTER;

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

struct EpisodeSummary {
    subject: String,
    comfortable: f64,
    outcome: &'static str,
    steps: usize,
    duration: f64,
    mean_human: f64,
    mean_robot: f64,
    ratio: f64,
    sep_mean: f64,
    sep_std: f64,
    sep_min: f64,
    sep_max: f64,
}

fn summarize(subject: String, comfortable: f64, trace: &EpisodeTrace) -> EpisodeSummary {
    let steady: Vec<_> = trace.rows.iter().filter(|r| r.t >= STEADY_AFTER).collect();
    let sep_mean = if steady.is_empty() {
        f64::NAN
    } else {
        steady.iter().map(|r| r.separation).sum::<f64>() / steady.len() as f64
    };
    let (sep_min, sep_max) = if steady.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        trace.separation_range(STEADY_AFTER)
    };
    let mean_human = trace.mean_human_speed(STEADY_AFTER);
    let mean_robot = trace.mean_robot_speed(STEADY_AFTER);
    EpisodeSummary {
        subject,
        comfortable,
        outcome: match trace.outcome {
            EpisodeOutcome::GoalReached { .. } => "goal_reached",
            EpisodeOutcome::Timeout => "timeout",
        },
        steps: trace.rows.len(),
        duration: trace.rows.last().map_or(0.0, |r| r.t),
        mean_human,
        mean_robot,
        ratio: mean_robot / mean_human,
        sep_mean,
        sep_std: trace.separation_std(STEADY_AFTER),
        sep_min,
        sep_max,
    }
}

fn summary_csv(rows: &[EpisodeSummary]) -> String {
    let mut out = String::from(
        "subject,comfortable_speed,outcome,steps,duration,mean_human_speed,\
         mean_robot_speed,speed_ratio,separation_mean,separation_std,\
         separation_min,separation_max\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.subject,
            r.comfortable,
            r.outcome,
            r.steps,
            r.duration,
            r.mean_human,
            r.mean_robot,
            r.ratio,
            r.sep_mean,
            r.sep_std,
            r.sep_min,
            r.sep_max
        );
    }
    out
}

fn summary_table(rows: &[EpisodeSummary]) -> String {
    let mut out = String::from(
        "subject  comfort  outcome       t_end    v_human  v_robot  ratio  sep_mean  sep_std\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<7}  {:>7.2}  {:<12}  {:>6.1}s  {:>7.3}  {:>7.3}  {:>5.3}  {:>8.3}  {:>7.4}",
            r.subject,
            r.comfortable,
            r.outcome,
            r.duration,
            r.mean_human,
            r.mean_robot,
            r.ratio,
            r.sep_mean,
            r.sep_std
        );
    }
    out
}

/// Speed plot data: time plus both speed magnitudes, columns derived from
/// the trace's velocity fields.
fn speed_csv(trace: &EpisodeTrace) -> String {
    let mut out = String::from("t,speed_h,speed_r\n");
    for r in &trace.rows {
        let _ = writeln!(out, "{},{},{}", r.t, norm2(r.human_velocity), norm2(r.robot_velocity));
    }
    out
}

/// Separation plot data: the trace's `t` and `l` columns verbatim.
fn separation_csv(trace: &EpisodeTrace) -> String {
    let mut out = String::from("t,l\n");
    for r in &trace.rows {
        let _ = writeln!(out, "{},{}", r.t, r.separation);
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    params: &Params,
    seed: u64,
    out: &Path,
    map: Option<&Path>,
    start: &str,
    goal: &str,
    weights: Option<&Path>,
) -> Result<(), CliError> {
    let tb = params.timebase()?;
    let start = super::parse_xy(start)?;
    let goal = super::parse_xy(goal)?;
    let map_text = super::read_map(map)?;
    let (human_model, robot_model) = super::load_models(params, weights)?;

    let mut dir = OutDir::create(out)?;
    if let Some(p) = map {
        dir.note_input("map", p)?;
    }
    if let Some(w) = weights {
        dir.note("weights", w.display().to_string());
    }

    let mut summaries = Vec::new();
    for (i, &comfortable) in params.sim.comfortable_speeds.iter().enumerate() {
        let scenario = ScenarioSpec {
            map_text: map_text.clone(),
            start,
            goal,
            episode_seconds: params.sim.episode_seconds,
            seed: seed ^ (i as u64 + 1).wrapping_mul(SEED_STRIDE),
            nominal_separation: params.sim.nominal_separation,
            agent: params.human_agent(comfortable),
            robot: params.robot_response(),
            leash: params.leash(),
        };
        let course =
            plan_course(&scenario, params.selector.inflation_radius, params.selector.wrps_threshold)?;
        let cfg = params.guided_config(scenario.seed);
        let trace = run_guided_episode(&scenario, &course, &human_model, &robot_model, &cfg, &tb)?;

        let sid = format!("s{i:02}");
        dir.write(&format!("traces/episode_{sid}.csv"), trace.to_csv().as_bytes())?;
        dir.write(&format!("plots/speed_{sid}.csv"), speed_csv(&trace).as_bytes())?;
        dir.write(
            &format!("plots/speed_{sid}.svg"),
            line_chart(
                &format!("Speeds, subject {sid} ({comfortable} m/s comfortable)"),
                "time [s]",
                "speed [m/s]",
                &[
                    Series {
                        label: "human".into(),
                        color: COLORS[0],
                        points: trace.rows.iter().map(|r| (r.t, norm2(r.human_velocity))).collect(),
                    },
                    Series {
                        label: "robot".into(),
                        color: COLORS[1],
                        points: trace.rows.iter().map(|r| (r.t, norm2(r.robot_velocity))).collect(),
                    },
                ],
            )
            .as_bytes(),
        )?;
        dir.write(
            &format!("plots/separation_{sid}.csv"),
            separation_csv(&trace).as_bytes(),
        )?;
        dir.write(
            &format!("plots/separation_{sid}.svg"),
            line_chart(
                &format!("Separation, subject {sid}"),
                "time [s]",
                "separation [m]",
                &[Series {
                    label: "leash length".into(),
                    color: COLORS[2],
                    points: trace.rows.iter().map(|r| (r.t, r.separation)).collect(),
                }],
            )
            .as_bytes(),
        )?;
        summaries.push(summarize(sid, comfortable, &trace));
    }

    dir.write("summary.csv", summary_csv(&summaries).as_bytes())?;
    dir.finish("simulate", seed, params)?;
    print!("{}", summary_table(&summaries));
    Ok(())
}
