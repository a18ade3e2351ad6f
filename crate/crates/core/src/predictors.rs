//! Interaction logs and everything trained from them: windowed datasets for
//! the human and robot velocity predictors, mini-batch training over the
//! rollout loss, the analytic baselines they are compared against, and a
//! k-fold harness that reports joint and per-axis RMSE as "Avg (StdDev)"
//! rows.
//!
//! Raw logs store what a data-collection run can actually measure: robot
//! position, velocity command, tension magnitude, leash direction, and leash
//! length. Everything else (human position, both velocities, both force
//! vectors) is derived on load so that disk files stay minimal and every
//! consumer agrees on the derivation.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::base::{
    compose_human_position, finite_difference_velocity, moving_average_vec3, stream_rng,
    BaseError, LeashEnd, TensionSample, Timebase, Vec3,
};
use crate::nn::{
    rollout_grad, rollout_loss, AdamConfig, AdamState, ModelSpec, NnError, RolloutSample,
    SeqModel, Tensor2,
};
use rand::seq::SliceRandom;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("malformed log: {0}")]
    Log(String),
    #[error(transparent)]
    Base(#[from] BaseError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("{logs} logs cannot fill {folds} folds")]
    TooFewLogs { logs: usize, folds: usize },
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("log file i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for PredictError {
    fn from(e: std::io::Error) -> Self {
        PredictError::Io(e.to_string())
    }
}

/// One 50 Hz record as logged: measured quantities only.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub robot_position: Vec3,
    /// Velocity command `(u_x, u_y, u_omega)` active during this step.
    pub command: [f64; 3],
    /// Commanded tension magnitude in newtons.
    pub tension: f64,
    /// Unit leash direction from robot toward human.
    pub leash_dir: Vec3,
    pub leash_len: f64,
}

/// A full log plus the channels derived from it: human position via the
/// leash geometry, both velocities via finite differences, both force
/// vectors via tension decomposition. Velocity and force channels are
/// smoothed with a centered moving average; positions stay raw.
#[derive(Debug, Clone)]
pub struct InteractionLog {
    pub subject_id: String,
    pub timebase: Timebase,
    pub records: Vec<LogRecord>,
    human_position: Vec<Vec3>,
    human_velocity: Vec<Vec3>,
    robot_velocity: Vec<Vec3>,
    human_force: Vec<Vec3>,
    robot_force: Vec<Vec3>,
}

pub const RAW_LOG_HEADER: &str = "t,subject_id,xr_x,xr_y,ur_x,ur_y,ur_w,F,el_x,el_y,l";

impl InteractionLog {
    pub fn new(
        subject_id: impl Into<String>,
        timebase: Timebase,
        records: Vec<LogRecord>,
        smoothing_window: usize,
    ) -> Result<Self, PredictError> {
        if records.len() < 2 {
            return Err(PredictError::Log(format!(
                "log needs at least 2 records, got {}",
                records.len()
            )));
        }
        let t = timebase.period();
        for (i, pair) in records.windows(2).enumerate() {
            let dt = pair[1].t - pair[0].t;
            if (dt - t).abs() > 1e-9 {
                return Err(PredictError::Log(format!(
                    "non-uniform timestep {dt} at record {i} (period {t})"
                )));
            }
        }
        for (i, r) in records.iter().enumerate() {
            if !r.tension.is_finite()
                || r.tension < 0.0
                || r.command.iter().any(|c| !c.is_finite())
            {
                return Err(PredictError::Log(format!("non-finite fields at record {i}")));
            }
        }

        let human_position: Vec<Vec3> = records
            .iter()
            .map(|r| compose_human_position(r.robot_position, r.leash_len, r.leash_dir))
            .collect::<Result<_, _>>()?;
        let robot_position: Vec<Vec3> = records.iter().map(|r| r.robot_position).collect();
        let hv = finite_difference_velocity(&human_position, &timebase)?;
        let rv = finite_difference_velocity(&robot_position, &timebase)?;
        let mut human_force = Vec::with_capacity(records.len());
        let mut robot_force = Vec::with_capacity(records.len());
        for r in &records {
            let sample = TensionSample::new(r.tension, r.leash_dir)?;
            human_force.push(sample.force_on(LeashEnd::Human));
            robot_force.push(sample.force_on(LeashEnd::Robot));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            timebase,
            human_position,
            human_velocity: moving_average_vec3(&hv, smoothing_window)?,
            robot_velocity: moving_average_vec3(&rv, smoothing_window)?,
            human_force: moving_average_vec3(&human_force, smoothing_window)?,
            robot_force: moving_average_vec3(&robot_force, smoothing_window)?,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn human_position(&self, i: usize) -> Vec3 {
        self.human_position[i]
    }

    pub fn human_velocity(&self, i: usize) -> Vec3 {
        self.human_velocity[i]
    }

    pub fn robot_velocity(&self, i: usize) -> Vec3 {
        self.robot_velocity[i]
    }

    pub fn human_force(&self, i: usize) -> Vec3 {
        self.human_force[i]
    }

    pub fn robot_force(&self, i: usize) -> Vec3 {
        self.robot_force[i]
    }

    /// Serializes the measured fields; floats use the shortest
    /// exactly-round-tripping decimal form.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(RAW_LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                self.subject_id,
                r.robot_position.x,
                r.robot_position.y,
                r.command[0],
                r.command[1],
                r.command[2],
                r.tension,
                r.leash_dir.x,
                r.leash_dir.y,
                r.leash_len
            );
        }
        out
    }

    pub fn from_csv(text: &str, smoothing_window: usize) -> Result<Self, PredictError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| PredictError::Log("empty file".into()))?;
        if header.trim() != RAW_LOG_HEADER {
            return Err(PredictError::Log(format!("unexpected header {header:?}")));
        }
        let mut subject: Option<String> = None;
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(PredictError::Log(format!(
                    "line {}: expected 11 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let num = |idx: usize| -> Result<f64, PredictError> {
                fields[idx].trim().parse::<f64>().map_err(|_| {
                    PredictError::Log(format!(
                        "line {}: field {} is not a number: {:?}",
                        lineno + 2,
                        idx,
                        fields[idx]
                    ))
                })
            };
            match &subject {
                None => subject = Some(fields[1].to_string()),
                Some(s) if s != fields[1] => {
                    return Err(PredictError::Log(format!(
                        "line {}: subject changed from {s:?} to {:?}",
                        lineno + 2,
                        fields[1]
                    )))
                }
                _ => {}
            }
            records.push(LogRecord {
                t: num(0)?,
                robot_position: Vec3::new(num(2)?, num(3)?, 0.0),
                command: [num(4)?, num(5)?, num(6)?],
                tension: num(7)?,
                leash_dir: Vec3::new(num(8)?, num(9)?, 0.0),
                leash_len: num(10)?,
            });
        }
        if records.len() < 2 {
            return Err(PredictError::Log("log needs at least 2 records".into()));
        }
        let timebase = Timebase::new(records[1].t - records[0].t)?;
        Self::new(subject.unwrap_or_default(), timebase, records, smoothing_window)
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), PredictError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv_file(path: &Path, smoothing_window: usize) -> Result<Self, PredictError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PredictError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text, smoothing_window)
    }
}

/// Which window layout a dataset uses. Column order is the single source of
/// truth for everyone who builds or edits windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Channels `[v_x, v_y, F_x, F_y]` of the human.
    Human,
    /// Channels `[v_x, v_y, u_x, u_y, u_w, F_x, F_y]` of the robot.
    Robot,
}

impl DatasetKind {
    pub fn channels(&self) -> usize {
        match self {
            DatasetKind::Human => 4,
            DatasetKind::Robot => 7,
        }
    }

    /// Columns holding the planar force vector.
    pub fn force_cols(&self) -> (usize, usize) {
        match self {
            DatasetKind::Human => (2, 3),
            DatasetKind::Robot => (5, 6),
        }
    }

    /// Columns holding the planar command, when the layout has one.
    pub fn command_cols(&self) -> Option<(usize, usize)> {
        match self {
            DatasetKind::Human => None,
            DatasetKind::Robot => Some((2, 3)),
        }
    }
}

/// One window row in the human layout.
pub fn human_row(velocity: Vec3, force: Vec3) -> Vec<f64> {
    vec![velocity.x, velocity.y, force.x, force.y]
}

/// One window row in the robot layout.
pub fn robot_row(velocity: Vec3, command: [f64; 3], force: Vec3) -> Vec<f64> {
    vec![velocity.x, velocity.y, command[0], command[1], command[2], force.x, force.y]
}

/// Windowed samples cut from one or more logs, with next-step velocity
/// labels and everything a K-step rollout needs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub window: usize,
    pub horizon: usize,
    pub samples: Vec<RolloutSample>,
    /// Next-step velocity label per sample.
    pub labels: Vec<[f64; 2]>,
    /// Originating log index per sample; windows never cross logs.
    pub sample_log: Vec<usize>,
    pub log_ids: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn model_spec(&self, arch: crate::nn::Architecture) -> ModelSpec {
        ModelSpec::standard(arch, self.kind.channels(), self.window, 2)
    }
}

fn build_dataset(
    logs: &[InteractionLog],
    kind: DatasetKind,
    window: usize,
    horizon: usize,
    row_of: impl Fn(&InteractionLog, usize) -> Vec<f64>,
    position_of: impl Fn(&InteractionLog, usize) -> Vec3,
    velocity_of: impl Fn(&InteractionLog, usize) -> Vec3,
) -> Result<Dataset, PredictError> {
    if window == 0 || horizon == 0 {
        return Err(PredictError::BadConfig("window and horizon must be >= 1".into()));
    }
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut sample_log = Vec::new();
    let mut log_ids = Vec::with_capacity(logs.len());
    for (li, log) in logs.iter().enumerate() {
        log_ids.push(log.subject_id.clone());
        let n = log.len();
        if n < window + horizon + 1 {
            // Too short to cut a single full window plus rollout; skip.
            continue;
        }
        // Anchor k: window covers records k-window+1..=k, rollout needs
        // records through k+horizon. Starting at k = window (not window-1)
        // drops the one window that would include the first record, whose
        // one-sided velocity estimate is the least accurate.
        for k in window..n - horizon {
            let rows: Vec<Vec<f64>> =
                (k + 1 - window..=k).map(|i| row_of(log, i)).collect();
            let exo_lo = kind.force_cols().0.min(kind.command_cols().map_or(usize::MAX, |c| c.0));
            let sample = RolloutSample {
                window: Tensor2::from_rows(&rows)?,
                start_position: {
                    let p = position_of(log, k);
                    [p.x, p.y]
                },
                exogenous: (k + 1..k + horizon)
                    .map(|i| row_of(log, i)[exo_lo..].to_vec())
                    .collect(),
                future_velocities: (k + 1..k + horizon)
                    .map(|i| {
                        let v = velocity_of(log, i);
                        [v.x, v.y]
                    })
                    .collect(),
                target_positions: (k + 1..=k + horizon)
                    .map(|i| {
                        let p = position_of(log, i);
                        [p.x, p.y]
                    })
                    .collect(),
            };
            let label = velocity_of(log, k + 1);
            samples.push(sample);
            labels.push([label.x, label.y]);
            sample_log.push(li);
        }
    }
    Ok(Dataset { kind, window, horizon, samples, labels, sample_log, log_ids })
}

/// Cuts human-layout samples: window channels `(v^h, F^h)`, labels and
/// rollout targets from the derived human channels.
pub fn build_human_dataset(
    logs: &[InteractionLog],
    window: usize,
    horizon: usize,
) -> Result<Dataset, PredictError> {
    build_dataset(
        logs,
        DatasetKind::Human,
        window,
        horizon,
        |log, i| human_row(log.human_velocity(i), log.human_force(i)),
        |log, i| log.human_position(i),
        |log, i| log.human_velocity(i),
    )
}

/// Cuts robot-layout samples: window channels `(v^r, u^r, F^r)`.
pub fn build_robot_dataset(
    logs: &[InteractionLog],
    window: usize,
    horizon: usize,
) -> Result<Dataset, PredictError> {
    build_dataset(
        logs,
        DatasetKind::Robot,
        window,
        horizon,
        |log, i| robot_row(log.robot_velocity(i), log.records[i].command, log.robot_force(i)),
        |log, i| log.records[i].robot_position,
        |log, i| log.robot_velocity(i),
    )
}

/// Mini-batch training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Learning-rate multiplier applied after each epoch; 1.0 disables decay.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub teacher_forcing: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            lr_decay: 1.0,
            batch_size: 64,
            epochs: 50,
            teacher_forcing: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean rollout loss per epoch, in order.
    pub loss_curve: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

fn mean_loss(
    model: &SeqModel,
    dataset: &Dataset,
    indices: &[usize],
    period: f64,
    teacher_forcing: bool,
) -> Result<f64, PredictError> {
    let mut total = 0.0;
    for &i in indices {
        total += rollout_loss(model, &dataset.samples[i], period, teacher_forcing)?;
    }
    Ok(total / indices.len() as f64)
}

/// Trains a fresh model of `spec` on `dataset` (or the subset named by
/// `subset`) by mini-batch Adam over the rollout loss. Deterministic for a
/// fixed config; aborts with a diagnostic if the loss turns non-finite.
pub fn train_predictor(
    dataset: &Dataset,
    subset: Option<&[usize]>,
    spec: ModelSpec,
    cfg: &TrainConfig,
    timebase: &Timebase,
) -> Result<(SeqModel, TrainReport), PredictError> {
    let all: Vec<usize>;
    let indices: &[usize] = match subset {
        Some(s) => s,
        None => {
            all = (0..dataset.len()).collect();
            &all
        }
    };
    if indices.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    if spec.input_channels != dataset.kind.channels() || spec.window != dataset.window {
        return Err(PredictError::BadConfig(format!(
            "spec wants {}x{} windows, dataset provides {}x{}",
            spec.window,
            spec.input_channels,
            dataset.window,
            dataset.kind.channels()
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(PredictError::BadConfig("batch_size and epochs must be >= 1".into()));
    }

    let period = timebase.period();
    let mut model = SeqModel::new(spec, cfg.seed)?;
    let mut opt = AdamState::new(cfg.adam, &model);
    let initial_loss = mean_loss(&model, dataset, indices, period, cfg.teacher_forcing)?;

    let mut order: Vec<usize> = indices.to_vec();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.adam.learning_rate;
    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, &format!("train.shuffle.{epoch}"));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<Vec<f64>>> = None;
            for &i in batch {
                let (loss, grads) =
                    rollout_grad(&model, &dataset.samples[i], period, cfg.teacher_forcing)?;
                if !loss.is_finite() {
                    return Err(PredictError::Divergence { epoch, loss });
                }
                epoch_loss += loss;
                match &mut acc {
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads.blocks) {
                            for (x, y) in a.iter_mut().zip(g) {
                                *x += y;
                            }
                        }
                    }
                    None => acc = Some(grads.blocks),
                }
            }
            let mut blocks = acc.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            for b in &mut blocks {
                b.iter_mut().for_each(|g| *g *= scale);
            }
            opt.step(&mut model, &blocks)?;
        }
        let epoch_mean = epoch_loss / order.len() as f64;
        if !epoch_mean.is_finite() {
            return Err(PredictError::Divergence { epoch, loss: epoch_mean });
        }
        loss_curve.push(epoch_mean);
        lr *= cfg.lr_decay;
        opt.set_learning_rate(lr);
    }
    let final_loss = mean_loss(&model, dataset, indices, period, cfg.teacher_forcing)?;
    Ok((model, TrainReport { loss_curve, initial_loss, final_loss }))
}

/// Next-step human velocity from a human-layout window.
pub fn predict_human(model: &SeqModel, window: &Tensor2) -> Result<[f64; 2], PredictError> {
    if model.spec().input_channels != DatasetKind::Human.channels() {
        return Err(PredictError::BadConfig(format!(
            "model consumes {} channels, human windows have {}",
            model.spec().input_channels,
            DatasetKind::Human.channels()
        )));
    }
    let v = model.forward(window)?;
    Ok([v[0], v[1]])
}

/// Next-step robot velocity from a robot-layout window.
pub fn predict_robot(model: &SeqModel, window: &Tensor2) -> Result<[f64; 2], PredictError> {
    if model.spec().input_channels != DatasetKind::Robot.channels() {
        return Err(PredictError::BadConfig(format!(
            "model consumes {} channels, robot windows have {}",
            model.spec().input_channels,
            DatasetKind::Robot.channels()
        )));
    }
    let v = model.forward(window)?;
    Ok([v[0], v[1]])
}

/// Next-step velocity as an affine function of the current force:
/// `v = A F + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
}

impl LinearModel {
    pub fn predict(&self, force: [f64; 2]) -> [f64; 2] {
        [
            self.a[0][0] * force[0] + self.a[0][1] * force[1] + self.b[0],
            self.a[1][0] * force[0] + self.a[1][1] * force[1] + self.b[1],
        ]
    }
}

fn last_row_pair(sample: &RolloutSample, cols: (usize, usize)) -> [f64; 2] {
    let last = sample.window.rows() - 1;
    [sample.window.get(last, cols.0), sample.window.get(last, cols.1)]
}

/// Least-squares fit of `v_{k+1} = A F_k + b` over the dataset (minimum-norm
/// solution, so all-zero force columns yield A = 0 and b = mean velocity).
pub fn fit_linear(dataset: &Dataset, subset: Option<&[usize]>) -> Result<LinearModel, PredictError> {
    let all: Vec<usize>;
    let indices: &[usize] = match subset {
        Some(s) => s,
        None => {
            all = (0..dataset.len()).collect();
            &all
        }
    };
    if indices.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    let n = indices.len();
    let cols = dataset.kind.force_cols();
    let mut x = nalgebra::DMatrix::<f64>::zeros(n, 3);
    let mut y = nalgebra::DMatrix::<f64>::zeros(n, 2);
    for (row, &i) in indices.iter().enumerate() {
        let f = last_row_pair(&dataset.samples[i], cols);
        x[(row, 0)] = f[0];
        x[(row, 1)] = f[1];
        x[(row, 2)] = 1.0;
        y[(row, 0)] = dataset.labels[i][0];
        y[(row, 1)] = dataset.labels[i][1];
    }
    let svd = x.svd(true, true);
    let coeff = svd
        .solve(&y, 1e-12)
        .map_err(|e| PredictError::BadConfig(format!("least squares failed: {e}")))?;
    Ok(LinearModel {
        a: [[coeff[(0, 0)], coeff[(1, 0)]], [coeff[(0, 1)], coeff[(1, 1)]]],
        b: [coeff[(2, 0)], coeff[(2, 1)]],
    })
}

/// Geometric surrogate predictor: speed is the mean speed over the window,
/// direction is the unit pull direction on the human (the direction of the
/// force vector in the window's last row). Zero force predicts rest.
pub fn geoc_predict(window: &Tensor2, force_cols: (usize, usize)) -> [f64; 2] {
    let mut speed = 0.0;
    for t in 0..window.rows() {
        speed += (window.get(t, 0).powi(2) + window.get(t, 1).powi(2)).sqrt();
    }
    speed /= window.rows() as f64;
    let last = window.rows() - 1;
    let f = [window.get(last, force_cols.0), window.get(last, force_cols.1)];
    let norm = (f[0] * f[0] + f[1] * f[1]).sqrt();
    if norm < 1e-9 {
        return [0.0, 0.0];
    }
    [speed * f[0] / norm, speed * f[1] / norm]
}

/// Velocity-discount baseline: `v_{k+1} = u_k - D F_k` with diagonal D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdcmModel {
    pub d: [f64; 2],
}

impl VdcmModel {
    pub fn predict(&self, command: [f64; 2], force: [f64; 2]) -> [f64; 2] {
        [command[0] - self.d[0] * force[0], command[1] - self.d[1] * force[1]]
    }
}

/// Per-axis least-squares fit of the discount coefficients. An axis whose
/// force channel is identically zero is indeterminate and pinned to 0.
pub fn fit_vdcm(dataset: &Dataset, subset: Option<&[usize]>) -> Result<VdcmModel, PredictError> {
    let cmd_cols = dataset
        .kind
        .command_cols()
        .ok_or_else(|| PredictError::BadConfig("dataset has no command channels".into()))?;
    let all: Vec<usize>;
    let indices: &[usize] = match subset {
        Some(s) => s,
        None => {
            all = (0..dataset.len()).collect();
            &all
        }
    };
    if indices.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    let f_cols = dataset.kind.force_cols();
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    for &i in indices {
        let f = last_row_pair(&dataset.samples[i], f_cols);
        let u = last_row_pair(&dataset.samples[i], cmd_cols);
        for a in 0..2 {
            // Minimizing sum((v - u + D f)^2) per axis gives
            // D = sum((u - v) f) / sum(f^2).
            num[a] += (u[a] - dataset.labels[i][a]) * f[a];
            den[a] += f[a] * f[a];
        }
    }
    let d = [0, 1].map(|a| if den[a] < 1e-12 { 0.0 } else { num[a] / den[a] });
    Ok(VdcmModel { d })
}

/// One row of the comparison: a trainable model family or a baseline.
#[derive(Debug, Clone)]
pub enum Contender {
    Neural { name: String, spec: ModelSpec, train: TrainConfig },
    Linear,
    Geoc,
    Vdcm,
    /// Emits the true label; diagnostic row that must score 0.000 (0.000).
    Oracle,
}

impl Contender {
    pub fn name(&self) -> String {
        match self {
            Contender::Neural { name, .. } => name.clone(),
            Contender::Linear => "Linear".into(),
            Contender::Geoc => "GeoC".into(),
            Contender::Vdcm => "VDCM".into(),
            Contender::Oracle => "Oracle".into(),
        }
    }
}

/// Mean and sample standard deviation (n-1) of per-fold values.
pub fn fold_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// "Avg (StdDev)" cell in the table layout.
pub fn format_stat(mean: f64, std: f64) -> String {
    format!("{mean:.3} ({std:.3})")
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub name: String,
    pub joint: (f64, f64),
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub fold_joint: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub folds: usize,
    /// Index of the row with the lowest mean joint error.
    pub best: usize,
}

impl EvalReport {
    /// Aligned text table; the best row's name carries a `*` marker.
    pub fn to_table(&self) -> String {
        let mut names: Vec<String> = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            let marker = if i == self.best { " *" } else { "" };
            names.push(format!("{}{marker}", row.name));
        }
        let name_w = names.iter().map(|n| n.len()).max().unwrap_or(5).max("Model".len());
        let cells: Vec<[String; 3]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    format_stat(r.joint.0, r.joint.1),
                    format_stat(r.x.0, r.x.1),
                    format_stat(r.y.0, r.y.1),
                ]
            })
            .collect();
        let col_w = |c: usize| {
            cells
                .iter()
                .map(|row| row[c].len())
                .max()
                .unwrap_or(3)
                .max(["e", "e_x", "e_y"][c].len())
        };
        let (w0, w1, w2) = (col_w(0), col_w(1), col_w(2));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>w0$}  {:>w1$}  {:>w2$}",
            "Model", "e", "e_x", "e_y"
        );
        for (name, cell) in names.iter().zip(&cells) {
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>w0$}  {:>w1$}  {:>w2$}",
                name, cell[0], cell[1], cell[2]
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,best,e_mean,e_std,ex_mean,ex_std,ey_mean,ey_std\n",
        );
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.name,
                (i == self.best) as u8,
                r.joint.0,
                r.joint.1,
                r.x.0,
                r.x.1,
                r.y.0,
                r.y.1
            );
        }
        out
    }
}

/// Contiguous fold assignment over log indices: fold f takes logs
/// `[f*n/k, (f+1)*n/k)`. Splitting on log boundaries keeps overlapping
/// windows from leaking between train and test.
pub fn fold_log_ranges(n_logs: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    (0..folds)
        .map(|f| (f * n_logs / folds)..((f + 1) * n_logs / folds))
        .collect()
}

/// Train/test sample index split per fold.
pub fn fold_splits(dataset: &Dataset, folds: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>, PredictError> {
    let n_logs = dataset.log_ids.len();
    if folds < 2 {
        return Err(PredictError::BadConfig("need at least 2 folds".into()));
    }
    if n_logs < folds {
        return Err(PredictError::TooFewLogs { logs: n_logs, folds });
    }
    let ranges = fold_log_ranges(n_logs, folds);
    Ok(ranges
        .into_iter()
        .map(|r| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, &li) in dataset.sample_log.iter().enumerate() {
                if r.contains(&li) {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            (train, test)
        })
        .collect())
}

/// Root-mean-square errors of `predicted` against `truth`: joint, x, y.
/// Kept as one tiny function so the metric can be swapped in one place.
pub fn rmse(predicted: &[[f64; 2]], truth: &[[f64; 2]]) -> (f64, f64, f64) {
    let n = predicted.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (p, t) in predicted.iter().zip(truth) {
        sx += (p[0] - t[0]).powi(2);
        sy += (p[1] - t[1]).powi(2);
    }
    ((sx / n + sy / n).sqrt(), (sx / n).sqrt(), (sy / n).sqrt())
}

/// Trains every contender on each fold's training logs and scores one-step
/// velocity predictions on the held-out logs. Neural contenders train
/// pooled across the fold's training logs.
pub fn kfold_evaluate(
    dataset: &Dataset,
    timebase: &Timebase,
    contenders: &[Contender],
    folds: usize,
    seed: u64,
) -> Result<EvalReport, PredictError> {
    if dataset.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    if contenders.is_empty() {
        return Err(PredictError::BadConfig("no contenders".into()));
    }
    let splits = fold_splits(dataset, folds)?;
    let mut per_fold: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); contenders.len()];
    for (fold, (train, test)) in splits.iter().enumerate() {
        if train.is_empty() || test.is_empty() {
            return Err(PredictError::BadConfig(format!(
                "fold {fold} has an empty train or test side"
            )));
        }
        for (ci, contender) in contenders.iter().enumerate() {
            let predicted: Vec<[f64; 2]> = match contender {
                Contender::Neural { spec, train: cfg, .. } => {
                    let mut cfg = cfg.clone();
                    // Per-fold substream so folds are independent yet the
                    // whole evaluation is reproducible.
                    cfg.seed = seed ^ ((fold as u64) << 32) ^ cfg.seed;
                    let (model, _) =
                        train_predictor(dataset, Some(train), *spec, &cfg, timebase)?;
                    test.iter()
                        .map(|&i| {
                            let v = model.forward(&dataset.samples[i].window)?;
                            Ok([v[0], v[1]])
                        })
                        .collect::<Result<_, PredictError>>()?
                }
                Contender::Linear => {
                    let m = fit_linear(dataset, Some(train))?;
                    test.iter()
                        .map(|&i| {
                            m.predict(last_row_pair(
                                &dataset.samples[i],
                                dataset.kind.force_cols(),
                            ))
                        })
                        .collect()
                }
                Contender::Geoc => test
                    .iter()
                    .map(|&i| {
                        geoc_predict(&dataset.samples[i].window, dataset.kind.force_cols())
                    })
                    .collect(),
                Contender::Vdcm => {
                    let m = fit_vdcm(dataset, Some(train))?;
                    let cmd = dataset.kind.command_cols().expect("checked in fit_vdcm");
                    test.iter()
                        .map(|&i| {
                            m.predict(
                                last_row_pair(&dataset.samples[i], cmd),
                                last_row_pair(&dataset.samples[i], dataset.kind.force_cols()),
                            )
                        })
                        .collect()
                }
                Contender::Oracle => test.iter().map(|&i| dataset.labels[i]).collect(),
            };
            let truth: Vec<[f64; 2]> = test.iter().map(|&i| dataset.labels[i]).collect();
            per_fold[ci].push(rmse(&predicted, &truth));
        }
    }

    let rows: Vec<EvalRow> = contenders
        .iter()
        .zip(&per_fold)
        .map(|(c, folds)| {
            let joint: Vec<f64> = folds.iter().map(|f| f.0).collect();
            let xs: Vec<f64> = folds.iter().map(|f| f.1).collect();
            let ys: Vec<f64> = folds.iter().map(|f| f.2).collect();
            EvalRow {
                name: c.name(),
                joint: fold_stats(&joint),
                x: fold_stats(&xs),
                y: fold_stats(&ys),
                fold_joint: joint,
            }
        })
        .collect();
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.joint.0.total_cmp(&b.1.joint.0))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(EvalReport { rows, folds, best })
}
