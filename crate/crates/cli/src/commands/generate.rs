//! Scripted data collection: one protocol episode per synthetic subject,
//! raw logs as CSV, sampling ranges and per-subject draws in the manifest.

use std::path::Path;

use guide_core::sim::{run_collection_protocol, synthetic_subjects, ScenarioSpec};
use guide_core::Params;

use crate::outdir::OutDir;
use crate::{subject_seed, CliError, Mode};

/// Walking-leader speed cap; the open-ground course is sized so the leader
/// never runs out of path within an episode.
const COURSE_MARGIN: f64 = 10.0;
const MAX_LEAD_SPEED: f64 = 2.0;

pub fn run(
    params: &Params,
    seed: u64,
    out: &Path,
    mode: Mode,
    map: Option<&Path>,
    start: &str,
    goal: Option<&str>,
) -> Result<(), CliError> {
    let subjects = params.data.subjects;
    if subjects == 0 {
        return Err(CliError::Config("no subjects configured".into()));
    }
    let tb = params.timebase()?;
    let map_text = super::read_map(map)?;
    if map_text.is_some() && goal.is_none() {
        return Err(CliError::Config(
            "--map needs an explicit --goal inside the map".into(),
        ));
    }
    let start = super::parse_xy(start)?;
    let agents = synthetic_subjects(subjects, seed);

    let mut dir = OutDir::create(out)?;
    if let Some(p) = map {
        dir.note_input("map", p)?;
    }
    dir.note("mode", mode.tag().to_string());
    dir.note("comfortable_speed_range", "[0.5, 1.2] m/s".to_string());
    dir.note("responsiveness_range", "[0.05, 0.15] (m/s)/N".to_string());
    dir.note("time_constant_range", "[0.25, 0.5] s".to_string());
    dir.note("heading_compliance_range", "[0.8, 1.0]".to_string());
    dir.note("noise_std_range", "[0.0, 0.01] m/s".to_string());
    dir.note(
        "tension_range",
        format!("{:?} N", guide_core::sim::PROTOCOL_TENSION_RANGE),
    );

    let episode_seconds = params.data.episode_seconds;
    let goal = match goal {
        Some(text) => super::parse_xy(text)?,
        None => [start[0] + MAX_LEAD_SPEED * episode_seconds + COURSE_MARGIN, start[1]],
    };
    let mut rows = 0;
    for (i, agent) in agents.iter().enumerate() {
        let sid = format!("s{i:02}");
        let scenario = ScenarioSpec {
            map_text: map_text.clone(),
            start,
            goal,
            episode_seconds,
            seed: subject_seed(seed, i, mode),
            nominal_separation: params.sim.nominal_separation,
            agent: *agent,
            robot: params.robot_response(),
            leash: params.leash(),
        };
        let log =
            run_collection_protocol(&scenario, mode.collection(), &sid, &tb, params.smoothing_window)?;
        rows = log.len();
        dir.write(&format!("logs/{}_{sid}.csv", mode.tag()), log.to_csv().as_bytes())?;
        dir.note(
            &format!("subject_{sid}"),
            serde_json::to_string(agent).map_err(|e| CliError::Runtime(e.to_string()))?,
        );
    }
    dir.finish("generate", seed, params)?;
    println!(
        "wrote {subjects} {} logs ({rows} rows each) to {}",
        mode.tag(),
        out.display()
    );
    Ok(())
}
