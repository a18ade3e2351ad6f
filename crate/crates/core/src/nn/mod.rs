//! From-scratch sequence regressors over sliding windows of interaction
//! signals: a two-stage 1-D CNN, a stacked LSTM, and a dilated-causal TCN,
//! all in f64 with hand-written backward passes. The surrounding machinery
//! lives here too: Adam updates over flat parameter blocks, a multi-step
//! rollout loss that integrates predicted velocities into positions,
//! checksummed weight files, and a finite-difference gradient checker.

mod adam;
mod arch;
mod cnn;
mod gradcheck;
mod layers;
mod lstm;
mod model;
mod rollout;
mod serialize;
mod tcn;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use arch::{Architecture, Layout, ModelSpec};
pub use cnn::Cnn;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use lstm::Lstm;
pub use model::{Gradients, SeqModel};
pub use rollout::{rollout_grad, rollout_loss, rollout_positions, RolloutSample};
pub use serialize::{load_model, save_model};
pub use tcn::Tcn;
pub use tensor::{NnError, Tensor2};

/// Miniature layouts and random inputs shared by the numeric tests. Small
/// enough that exhaustive finite-difference sweeps stay fast, but shaped to
/// exercise every code path (multi-layer recurrence, both residual kinds).
#[cfg(test)]
pub(crate) mod testutil {
    use super::{Layout, ModelSpec, Tensor2};
    use crate::base::stream_rng;
    use rand::Rng;

    pub fn mini_specs() -> [ModelSpec; 3] {
        [
            ModelSpec {
                input_channels: 3,
                window: 6,
                output_dim: 2,
                layout: Layout::Cnn { channels: (2, 3), kernel: 2 },
            },
            ModelSpec {
                input_channels: 3,
                window: 5,
                output_dim: 2,
                layout: Layout::Lstm { layers: 2, units: 3 },
            },
            // Two blocks so both the projected (3 -> 4) and the identity
            // (4 -> 4) residual paths are exercised.
            ModelSpec {
                input_channels: 3,
                window: 6,
                output_dim: 2,
                layout: Layout::Tcn { blocks: 2, channels: 4, kernel: 2 },
            },
        ]
    }

    pub fn random_window(spec: &ModelSpec, seed: u64) -> Tensor2 {
        let mut rng = stream_rng(seed, "test.window");
        let rows: Vec<Vec<f64>> = (0..spec.window)
            .map(|_| (0..spec.input_channels).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        Tensor2::from_rows(&rows).unwrap()
    }
}
