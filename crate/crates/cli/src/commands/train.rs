//! Model training: build the dataset from raw logs, run mini-batch Adam
//! over the rollout loss per selected architecture, write weight files and
//! loss curves. A non-finite loss aborts the run.

use std::fmt::Write as _;
use std::path::Path;

use guide_core::nn::save_model;
use guide_core::predictors::{build_human_dataset, build_robot_dataset, TrainReport};
use guide_core::Params;

use crate::outdir::OutDir;
use crate::{CliError, Mode};

fn loss_curve_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,loss\n");
    let _ = writeln!(out, "0,{}", report.initial_loss);
    for (i, loss) in report.loss_curve.iter().enumerate() {
        let _ = writeln!(out, "{},{loss}", i + 1);
    }
    out
}

pub fn run(
    params: &Params,
    seed: u64,
    out: &Path,
    mode: Mode,
    data: &Path,
) -> Result<(), CliError> {
    let tb = params.timebase()?;
    let logs = super::read_logs(data, mode, params.smoothing_window)?;
    let dataset = match mode {
        Mode::Human => build_human_dataset(&logs, params.data.window, params.data.horizon)?,
        Mode::Robot => build_robot_dataset(&logs, params.data.window, params.data.horizon)?,
    };

    let mut dir = OutDir::create(out)?;
    dir.note("mode", mode.tag().to_string());
    dir.note("samples", dataset.len().to_string());
    dir.note("logs", logs.len().to_string());

    let cfg = params.train_config(seed);
    for arch in params.architectures()? {
        let spec = params.model_spec(mode.dataset_kind(), arch);
        let (model, report) = train_predictor_checked(&dataset, spec, &cfg, &tb)?;
        let weight_rel = format!("weights/{}_{}.weights", mode.tag(), arch.name());
        let weight_path = dir.root().join(&weight_rel);
        if let Some(parent) = weight_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        save_model(&model, &weight_path)?;
        dir.add_file(&weight_rel)?;
        dir.write(
            &format!("curves/{}_{}_loss.csv", mode.tag(), arch.name()),
            loss_curve_csv(&report).as_bytes(),
        )?;
        println!(
            "trained {} {} on {} samples: loss {:.3e} -> {:.3e}",
            mode.tag(),
            arch.name(),
            dataset.len(),
            report.initial_loss,
            report.final_loss
        );
    }
    dir.finish("train", seed, params)?;
    Ok(())
}

fn train_predictor_checked(
    dataset: &guide_core::Dataset,
    spec: guide_core::ModelSpec,
    cfg: &guide_core::predictors::TrainConfig,
    tb: &guide_core::Timebase,
) -> Result<(guide_core::SeqModel, TrainReport), CliError> {
    let (model, report) = guide_core::predictors::train_predictor(dataset, None, spec, cfg, tb)?;
    if !report.final_loss.is_finite() {
        return Err(CliError::Runtime(format!(
            "training diverged: final loss {}",
            report.final_loss
        )));
    }
    Ok((model, report))
}
