//! Multi-step rollout loss: a model that predicts the next planar velocity
//! from a sliding window is applied K times, predicted velocities are
//! integrated into positions, and the loss is the mean squared position
//! error over the K predicted points. The backward pass threads gradients
//! through both the position integration chain and, when windows are
//! advanced with the model's own predictions, through the window contents.
//!
//! Window channel contract: columns 0 and 1 hold the planar velocity; any
//! remaining columns are exogenous inputs supplied from data at every step.

use super::model::{Gradients, SeqModel};
use super::tensor::{NnError, Tensor2};

/// One training sample for a K-step rollout anchored at some record k.
///
/// `window` ends at the anchor row; `target_positions` are the true positions
/// for the K subsequent records; `future_velocities` are the true velocities
/// for the first K-1 of those (used to advance the window under teacher
/// forcing); `exogenous` are the non-velocity channels for the same K-1 rows.
#[derive(Debug, Clone)]
pub struct RolloutSample {
    pub window: Tensor2,
    pub start_position: [f64; 2],
    pub exogenous: Vec<Vec<f64>>,
    pub future_velocities: Vec<[f64; 2]>,
    pub target_positions: Vec<[f64; 2]>,
}

impl RolloutSample {
    pub fn horizon(&self) -> usize {
        self.target_positions.len()
    }

    fn validate(&self, model: &SeqModel) -> Result<(), NnError> {
        let spec = model.spec();
        if spec.output_dim != 2 {
            return Err(NnError::BadSpec(format!(
                "rollout needs planar velocity output, got output_dim {}",
                spec.output_dim
            )));
        }
        let k = self.horizon();
        if k == 0 {
            return Err(NnError::BadSpec("rollout horizon must be at least 1".to_string()));
        }
        if self.future_velocities.len() != k - 1 || self.exogenous.len() != k - 1 {
            return Err(NnError::ShapeMismatch {
                expected: format!("{} future velocity and exogenous rows", k - 1),
                got: format!(
                    "{} and {}",
                    self.future_velocities.len(),
                    self.exogenous.len()
                ),
            });
        }
        let exo_width = spec.input_channels - 2;
        if let Some(bad) = self.exogenous.iter().find(|r| r.len() != exo_width) {
            return Err(NnError::ShapeMismatch {
                expected: format!("exogenous rows of width {exo_width}"),
                got: format!("width {}", bad.len()),
            });
        }
        Ok(())
    }
}

fn advance_row(velocity: [f64; 2], exo: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 + exo.len());
    row.extend_from_slice(&velocity);
    row.extend_from_slice(exo);
    row
}

/// Integrated predicted positions for each of the K steps.
pub fn rollout_positions(
    model: &SeqModel,
    sample: &RolloutSample,
    period: f64,
    teacher_forcing: bool,
) -> Result<Vec<[f64; 2]>, NnError> {
    sample.validate(model)?;
    let k = sample.horizon();
    let mut win = sample.window.clone();
    let mut pos = sample.start_position;
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let v = model.forward(&win)?;
        pos = [pos[0] + v[0] * period, pos[1] + v[1] * period];
        out.push(pos);
        if j + 1 < k {
            let fed = if teacher_forcing { sample.future_velocities[j] } else { [v[0], v[1]] };
            win = win.advanced(&advance_row(fed, &sample.exogenous[j]))?;
        }
    }
    Ok(out)
}

/// Mean squared position error over the K rollout steps.
pub fn rollout_loss(
    model: &SeqModel,
    sample: &RolloutSample,
    period: f64,
    teacher_forcing: bool,
) -> Result<f64, NnError> {
    let predicted = rollout_positions(model, sample, period, teacher_forcing)?;
    let k = predicted.len() as f64;
    Ok(predicted
        .iter()
        .zip(&sample.target_positions)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .sum::<f64>()
        / k)
}

/// Loss plus its gradient with respect to every parameter block and to the
/// anchor window.
///
/// The reverse sweep runs from the last step backward. Each step's upstream
/// velocity gradient is the integration chain term (period times the summed
/// downstream position errors) plus, without teacher forcing, whatever later
/// steps propagated back into the window row this step's prediction was
/// written to.
pub fn rollout_grad(
    model: &SeqModel,
    sample: &RolloutSample,
    period: f64,
    teacher_forcing: bool,
) -> Result<(f64, Gradients), NnError> {
    sample.validate(model)?;
    let k = sample.horizon();
    let w = sample.window.rows();
    let ch = sample.window.cols();

    // Forward, keeping every window and integrated position.
    let mut windows = Vec::with_capacity(k);
    let mut positions = Vec::with_capacity(k);
    let mut win = sample.window.clone();
    let mut pos = sample.start_position;
    for j in 0..k {
        let v = model.forward(&win)?;
        pos = [pos[0] + v[0] * period, pos[1] + v[1] * period];
        positions.push(pos);
        windows.push(win.clone());
        if j + 1 < k {
            let fed = if teacher_forcing { sample.future_velocities[j] } else { [v[0], v[1]] };
            win = win.advanced(&advance_row(fed, &sample.exogenous[j]))?;
        }
    }
    let inv_k = 1.0 / k as f64;
    let loss = positions
        .iter()
        .zip(&sample.target_positions)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .sum::<f64>()
        * inv_k;

    // dLoss/dv_j from the position chain: period * sum over steps >= j of
    // (2/K)(predicted - target).
    let mut dv = vec![[0.0; 2]; k];
    let mut cum = [0.0; 2];
    for j in (0..k).rev() {
        let (p, t) = (positions[j], sample.target_positions[j]);
        cum[0] += 2.0 * inv_k * (p[0] - t[0]);
        cum[1] += 2.0 * inv_k * (p[1] - t[1]);
        dv[j][0] = period * cum[0];
        dv[j][1] = period * cum[1];
    }

    let mut param_grads: Option<Vec<Vec<f64>>> = None;
    let mut din = Tensor2::zeros(w, ch);
    for j in (0..k).rev() {
        let (_, g) = model.forward_backward(&windows[j], &dv[j])?;
        match &mut param_grads {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g.blocks) {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                }
            }
            None => param_grads = Some(g.blocks),
        }
        // Window j row r is anchor-window row r+j when r < w-j; later rows
        // were appended by steps s = r-(w-j), whose predictions they carry
        // when the windows advance on model output.
        for r in 0..w {
            if r + j < w {
                for c in 0..ch {
                    din.add(r + j, c, g.input.get(r, c));
                }
            } else if !teacher_forcing {
                let s = r - (w - j);
                dv[s][0] += g.input.get(r, 0);
                dv[s][1] += g.input.get(r, 1);
            }
        }
    }

    Ok((loss, Gradients { blocks: param_grads.expect("k >= 1"), input: din }))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{mini_specs, random_window};
    use super::*;
    use crate::base::stream_rng;
    use rand::Rng;

    const T: f64 = 0.02;

    fn sample_for(spec: &crate::nn::ModelSpec, horizon: usize, seed: u64) -> RolloutSample {
        let mut rng = stream_rng(seed, "test.rollout");
        let exo_width = spec.input_channels - 2;
        RolloutSample {
            window: random_window(spec, seed),
            start_position: [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)],
            exogenous: (0..horizon - 1)
                .map(|_| (0..exo_width).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect(),
            future_velocities: (0..horizon - 1)
                .map(|_| [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)])
                .collect(),
            target_positions: (0..horizon)
                .map(|_| [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)])
                .collect(),
        }
    }

    #[test]
    fn single_step_loss_is_one_step_prediction_error() {
        let spec = mini_specs()[2];
        let model = SeqModel::new(spec, 5).unwrap();
        let sample = sample_for(&spec, 1, 21);
        let v = model.forward(&sample.window).unwrap();
        let p = [
            sample.start_position[0] + v[0] * T,
            sample.start_position[1] + v[1] * T,
        ];
        let t = sample.target_positions[0];
        let expected = (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2);
        let got = rollout_loss(&model, &sample, T, true).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_model_leaves_position_at_the_start() {
        let spec = mini_specs()[0];
        let mut model = SeqModel::new(spec, 5).unwrap();
        for block in model.param_blocks_mut() {
            block.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut sample = sample_for(&spec, 3, 22);
        sample.start_position = [0.0, 0.0];
        sample.target_positions = vec![[0.1, 0.0], [0.2, 0.0], [0.3, 0.0]];
        let loss = rollout_loss(&model, &sample, T, true).unwrap();
        let expected = (0.01 + 0.04 + 0.09) / 3.0;
        assert!((loss - expected).abs() < 1e-15);
        for p in rollout_positions(&model, &sample, T, true).unwrap() {
            assert_eq!(p, [0.0, 0.0]);
        }
    }

    #[test]
    fn teacher_forcing_controls_which_velocities_fill_the_window() {
        let spec = mini_specs()[2];
        let model = SeqModel::new(spec, 5).unwrap();
        let mut sample = sample_for(&spec, 3, 23);
        // Absurd true velocities: under teacher forcing they enter the
        // window and swamp the later predictions; free-running ignores them.
        sample.future_velocities = vec![[1e3, -1e3], [1e3, -1e3]];
        let forced = rollout_loss(&model, &sample, T, true).unwrap();
        let free = rollout_loss(&model, &sample, T, false).unwrap();
        assert!((forced - free).abs() > 1e-6);
        let first_forced = rollout_positions(&model, &sample, T, true).unwrap()[0];
        let first_free = rollout_positions(&model, &sample, T, false).unwrap()[0];
        assert_eq!(first_forced, first_free);
    }

    #[test]
    fn rollout_gradients_match_finite_differences() {
        let eps = 1e-6;
        for spec in mini_specs() {
            for teacher_forcing in [true, false] {
                let model = SeqModel::new(spec, 17).unwrap();
                let sample = sample_for(&spec, 3, 31);
                let (loss, grads) = rollout_grad(&model, &sample, T, teacher_forcing).unwrap();
                assert!(loss.is_finite());

                let mut probe = model.clone();
                let n_blocks = grads.blocks.len();
                for bi in 0..n_blocks {
                    for j in 0..grads.blocks[bi].len() {
                        let orig = probe.param_blocks()[bi].1[j];
                        probe.param_blocks_mut()[bi][j] = orig + eps;
                        let up = rollout_loss(&probe, &sample, T, teacher_forcing).unwrap();
                        probe.param_blocks_mut()[bi][j] = orig - eps;
                        let down = rollout_loss(&probe, &sample, T, teacher_forcing).unwrap();
                        probe.param_blocks_mut()[bi][j] = orig;
                        let numeric = (up - down) / (2.0 * eps);
                        let a = grads.blocks[bi][j];
                        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                        assert!(
                            err < 1e-6,
                            "{} tf={teacher_forcing} block {bi} [{j}]: {a} vs {numeric}",
                            spec.arch().name()
                        );
                    }
                }

                let mut s2 = sample.clone();
                for r in 0..s2.window.rows() {
                    for c in 0..s2.window.cols() {
                        let orig = s2.window.get(r, c);
                        s2.window.set(r, c, orig + eps);
                        let up = rollout_loss(&model, &s2, T, teacher_forcing).unwrap();
                        s2.window.set(r, c, orig - eps);
                        let down = rollout_loss(&model, &s2, T, teacher_forcing).unwrap();
                        s2.window.set(r, c, orig);
                        let numeric = (up - down) / (2.0 * eps);
                        let a = grads.input.get(r, c);
                        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                        assert!(
                            err < 1e-6,
                            "{} tf={teacher_forcing} input[{r},{c}]: {a} vs {numeric}",
                            spec.arch().name()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn malformed_samples_are_rejected() {
        let spec = mini_specs()[0];
        let model = SeqModel::new(spec, 5).unwrap();
        let mut sample = sample_for(&spec, 3, 40);
        sample.future_velocities.pop();
        assert!(rollout_loss(&model, &sample, T, true).is_err());
        let mut sample = sample_for(&spec, 3, 40);
        sample.exogenous[0].push(0.0);
        assert!(rollout_loss(&model, &sample, T, true).is_err());
        let mut sample = sample_for(&spec, 3, 40);
        sample.target_positions.clear();
        sample.future_velocities.clear();
        sample.exogenous.clear();
        assert!(rollout_loss(&model, &sample, T, true).is_err());
    }
}
