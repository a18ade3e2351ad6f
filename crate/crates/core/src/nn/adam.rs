//! Adam optimizer over the flat parameter blocks of a sequence model, with
//! bias-corrected first and second moment estimates.

use super::model::SeqModel;
use super::tensor::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment estimates for one model; block layout is frozen at construction.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, model: &SeqModel) -> Self {
        let shapes: Vec<Vec<f64>> =
            model.param_blocks().iter().map(|(_, b)| vec![0.0; b.len()]).collect();
        Self { cfg, m: shapes.clone(), v: shapes, t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Changes the learning rate mid-run; moment estimates are kept.
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.cfg.learning_rate = lr;
    }

    /// Applies one update from per-block gradients (same order and shapes as
    /// `param_blocks`). Rejects non-finite gradients so a diverging run stops
    /// at the step that produced them instead of poisoning the weights.
    pub fn step(&mut self, model: &mut SeqModel, grads: &[Vec<f64>]) -> Result<(), NnError> {
        let mut blocks = model.param_blocks_mut();
        if grads.len() != blocks.len() {
            return Err(NnError::ShapeMismatch {
                expected: format!("{} gradient blocks", blocks.len()),
                got: format!("{}", grads.len()),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != blocks[i].len() {
                return Err(NnError::ShapeMismatch {
                    expected: format!("block {i} len {}", blocks[i].len()),
                    got: format!("len {}", g.len()),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFinite(format!("gradient block {i}")));
            }
        }
        self.t += 1;
        let b1t = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let params = &mut blocks[i];
            for (j, &gj) in g.iter().enumerate() {
                m[j] = self.cfg.beta1 * m[j] + (1.0 - self.cfg.beta1) * gj;
                v[j] = self.cfg.beta2 * v[j] + (1.0 - self.cfg.beta2) * gj * gj;
                let m_hat = m[j] / b1t;
                let v_hat = v[j] / b2t;
                params[j] -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::mini_specs;
    use super::*;

    fn ones_like(model: &SeqModel) -> Vec<Vec<f64>> {
        model.param_blocks().iter().map(|(_, b)| vec![1.0; b.len()]).collect()
    }

    #[test]
    fn constant_unit_gradient_moves_every_parameter_by_the_rate() {
        // With a constant gradient of 1 the bias-corrected moments are
        // exactly m_hat = 1 and v_hat = 1, so each step subtracts
        // lr / (1 + epsilon) regardless of step count.
        let spec = mini_specs()[0];
        let mut model = SeqModel::new(spec, 3).unwrap();
        let before: Vec<Vec<f64>> =
            model.param_blocks().iter().map(|(_, b)| (*b).clone()).collect();
        let cfg = AdamConfig { learning_rate: 0.1, ..AdamConfig::default() };
        let mut opt = AdamState::new(cfg, &model);
        let grads = ones_like(&model);
        for _ in 0..3 {
            opt.step(&mut model, &grads).unwrap();
        }
        assert_eq!(opt.steps_taken(), 3);
        for (after, before) in model.param_blocks().iter().zip(&before) {
            for (a, b) in after.1.iter().zip(before) {
                assert!((b - a - 0.3).abs() < 1e-8, "moved {b} -> {a}");
            }
        }
    }

    #[test]
    fn opposite_gradients_cancel_in_the_first_moment() {
        let spec = mini_specs()[0];
        let mut model = SeqModel::new(spec, 3).unwrap();
        let before: Vec<Vec<f64>> =
            model.param_blocks().iter().map(|(_, b)| (*b).clone()).collect();
        let mut opt = AdamState::new(AdamConfig::default(), &model);
        let plus = ones_like(&model);
        let minus: Vec<Vec<f64>> =
            plus.iter().map(|b| b.iter().map(|v| -v).collect()).collect();
        for _ in 0..50 {
            opt.step(&mut model, &plus).unwrap();
            opt.step(&mut model, &minus).unwrap();
        }
        // Alternating +-1 gradients: v_hat stays 1, m_hat oscillates around
        // zero, so the parameters stay near where they started.
        for (after, before) in model.param_blocks().iter().zip(&before) {
            for (a, b) in after.1.iter().zip(before) {
                assert!((a - b).abs() < 2.0 * AdamConfig::default().learning_rate);
            }
        }
    }

    #[test]
    fn bad_gradients_are_rejected_before_touching_weights() {
        let spec = mini_specs()[0];
        let mut model = SeqModel::new(spec, 3).unwrap();
        let before = model.clone();
        let mut opt = AdamState::new(AdamConfig::default(), &model);

        let mut too_few = ones_like(&model);
        too_few.pop();
        assert!(opt.step(&mut model, &too_few).is_err());

        let mut wrong_len = ones_like(&model);
        wrong_len[0].push(0.0);
        assert!(opt.step(&mut model, &wrong_len).is_err());

        let mut poisoned = ones_like(&model);
        poisoned[1][0] = f64::NAN;
        assert!(opt.step(&mut model, &poisoned).is_err());

        assert_eq!(model, before);
        assert_eq!(opt.steps_taken(), 0);
    }
}
