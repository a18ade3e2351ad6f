//! K-fold cross-validation: selected architectures against the mode's
//! baselines plus a label-echo oracle. Emits the aligned text table (best
//! row starred) and a machine-readable CSV.

use std::path::Path;

use guide_core::predictors::{build_human_dataset, build_robot_dataset, kfold_evaluate, Contender};
use guide_core::Params;

use crate::outdir::OutDir;
use crate::{CliError, Mode};

/// The contenders for one mode: neural models by architecture, then the
/// mode's baselines, then the oracle diagnostic row.
pub fn contenders(params: &Params, mode: Mode, seed: u64) -> Result<Vec<Contender>, CliError> {
    let mut list = Vec::new();
    for arch in params.architectures()? {
        list.push(Contender::Neural {
            name: format!("{}-{}", mode.model_label(), arch.name().to_uppercase()),
            spec: params.model_spec(mode.dataset_kind(), arch),
            train: params.train_config(seed),
        });
    }
    match mode {
        Mode::Human => {
            list.push(Contender::Linear);
            list.push(Contender::Geoc);
        }
        Mode::Robot => list.push(Contender::Vdcm),
    }
    list.push(Contender::Oracle);
    Ok(list)
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
    let list = contenders(params, mode, seed)?;
    let report = kfold_evaluate(&dataset, &tb, &list, params.eval.k_folds, seed)?;

    let mut dir = OutDir::create(out)?;
    dir.note("mode", mode.tag().to_string());
    dir.note("folds", params.eval.k_folds.to_string());
    dir.note("samples", dataset.len().to_string());
    let table = report.to_table();
    dir.write(&format!("eval_{}.txt", mode.tag()), table.as_bytes())?;
    dir.write(&format!("eval_{}.csv", mode.tag()), report.to_csv().as_bytes())?;
    dir.finish("evaluate", seed, params)?;
    print!("{table}");
    Ok(())
}
