//! Subcommand implementations. Each takes the resolved parameters, master
//! seed, and output directory, does its work through [`OutDir`], and
//! finishes with a manifest.

use std::path::Path;

use guide_core::nn::{load_model, SeqModel};
use guide_core::predictors::InteractionLog;
use guide_core::Params;

use crate::{CliError, Mode};

pub mod evaluate;
pub mod generate;
pub mod plan;
pub mod simulate;
pub mod train;

/// Reads the raw logs for one mode from a directory (files named
/// `{mode}_*.csv`, sorted) or from a single log file.
pub(crate) fn read_logs(
    data: &Path,
    mode: Mode,
    smoothing_window: usize,
) -> Result<Vec<InteractionLog>, CliError> {
    if !data.exists() {
        return Err(CliError::Runtime(format!(
            "dataset path {} does not exist",
            data.display()
        )));
    }
    if data.is_file() {
        return Ok(vec![InteractionLog::read_csv_file(data, smoothing_window)?]);
    }
    let prefix = format!("{}_", mode.tag());
    let mut paths: Vec<_> = std::fs::read_dir(data)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_stem()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| s.starts_with(&prefix))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Runtime(format!(
            "no {} logs found in {}",
            mode.tag(),
            data.display()
        )));
    }
    paths
        .iter()
        .map(|p| Ok(InteractionLog::read_csv_file(p, smoothing_window)?))
        .collect()
}

/// Parses "x,y" into a coordinate pair.
pub(crate) fn parse_xy(text: &str) -> Result<[f64; 2], CliError> {
    let bad = || CliError::Config(format!("expected \"x,y\", got '{text}'"));
    let (x, y) = text.split_once(',').ok_or_else(bad)?;
    let x: f64 = x.trim().parse().map_err(|_| bad())?;
    let y: f64 = y.trim().parse().map_err(|_| bad())?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(bad());
    }
    Ok([x, y])
}

pub(crate) fn read_map(path: Option<&Path>) -> Result<Option<String>, CliError> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Runtime(format!("cannot read map {}: {e}", p.display()))
            })?;
            Ok(Some(text))
        }
    }
}

/// Human and robot motion models for closed-loop use: trained weights from
/// a directory when given, otherwise reference models matched to the
/// synthetic plants' response laws.
pub(crate) fn load_models(
    params: &Params,
    weights: Option<&Path>,
) -> Result<(SeqModel, SeqModel), CliError> {
    match weights {
        Some(dir) => {
            // "all" trains three; closed loop runs the strongest.
            let arch = *params
                .architectures()?
                .last()
                .expect("architectures is never empty");
            let human_path = dir.join(format!("human_{}.weights", arch.name()));
            let robot_path = dir.join(format!("robot_{}.weights", arch.name()));
            for p in [&human_path, &robot_path] {
                if !p.exists() {
                    return Err(CliError::Runtime(format!(
                        "weight file {} does not exist",
                        p.display()
                    )));
                }
            }
            Ok((load_model(&human_path)?, load_model(&robot_path)?))
        }
        None => Ok((
            guide_core::mpc::linear_human_reference(params.data.window, params.sim.responsiveness),
            guide_core::mpc::linear_robot_reference(
                params.data.window,
                params.sim.tension_discount[0],
            ),
        )),
    }
}

/// Rows before this time are excluded from steady-state statistics.
pub(crate) const STEADY_AFTER: f64 = 3.0;
