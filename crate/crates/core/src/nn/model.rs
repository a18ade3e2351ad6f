//! Unified sequence-to-vector model: one enum dispatching over the three
//! architectures so training, planning, and serialization code never cares
//! which network is underneath. All parameters live in named flat blocks of
//! `f64`; gradients come back in the same block order plus the gradient of
//! the loss with respect to the input window.

use super::arch::{Architecture, Layout, ModelSpec};
use super::cnn::Cnn;
use super::lstm::Lstm;
use super::tcn::Tcn;
use super::tensor::{NnError, Tensor2};
use crate::base::stream_rng;

/// Gradients from one backward pass: one flat vector per parameter block, in
/// `param_blocks` order, plus the gradient with respect to the input window.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
    pub input: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeqModel {
    Cnn(Cnn),
    Lstm(Lstm),
    Tcn(Tcn),
}

impl SeqModel {
    /// Builds a model with uniform `+-sqrt(1/fan_in)` weights and zero
    /// biases, drawn from a stream keyed on `seed` and the architecture name.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = stream_rng(seed, &format!("init.{}", spec.arch().name()));
        Ok(match spec.layout {
            Layout::Cnn { .. } => Self::Cnn(Cnn::init(spec, &mut rng)),
            Layout::Lstm { .. } => Self::Lstm(Lstm::init(spec, &mut rng)),
            Layout::Tcn { .. } => Self::Tcn(Tcn::init(spec, &mut rng)),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        match self {
            Self::Cnn(m) => &m.spec,
            Self::Lstm(m) => &m.spec,
            Self::Tcn(m) => &m.spec,
        }
    }

    pub fn arch(&self) -> Architecture {
        self.spec().arch()
    }

    /// Named parameter blocks in the fixed serialization order.
    pub fn param_blocks(&self) -> Vec<(String, &Vec<f64>)> {
        match self {
            Self::Cnn(m) => m.blocks_named(),
            Self::Lstm(m) => m.blocks_named(),
            Self::Tcn(m) => m.blocks_named(),
        }
    }

    /// Mutable views of the parameter blocks, in `param_blocks` order.
    pub fn param_blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Self::Cnn(m) => m.blocks_mut(),
            Self::Lstm(m) => m.blocks_mut(),
            Self::Tcn(m) => m.blocks_mut(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.param_blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Maps an input window (`window rows x input_channels`) to the output
    /// vector (`output_dim`).
    pub fn forward(&self, window: &Tensor2) -> Result<Vec<f64>, NnError> {
        self.check(window)?;
        Ok(match self {
            Self::Cnn(m) => m.forward(window),
            Self::Lstm(m) => m.forward(window),
            Self::Tcn(m) => m.forward(window),
        })
    }

    /// Forward pass plus backpropagation of `upstream` (gradient of some
    /// scalar loss with respect to the output vector).
    pub fn forward_backward(
        &self,
        window: &Tensor2,
        upstream: &[f64],
    ) -> Result<(Vec<f64>, Gradients), NnError> {
        self.check(window)?;
        if upstream.len() != self.spec().output_dim {
            return Err(NnError::ShapeMismatch {
                expected: format!("upstream len {}", self.spec().output_dim),
                got: format!("upstream len {}", upstream.len()),
            });
        }
        let (out, blocks, input) = match self {
            Self::Cnn(m) => m.forward_backward(window, upstream),
            Self::Lstm(m) => m.forward_backward(window, upstream),
            Self::Tcn(m) => m.forward_backward(window, upstream),
        };
        Ok((out, Gradients { blocks, input }))
    }

    fn check(&self, window: &Tensor2) -> Result<(), NnError> {
        if !window.is_finite() {
            return Err(NnError::NonFinite("input window".to_string()));
        }
        match self {
            Self::Cnn(m) => m.check_window(window),
            Self::Lstm(m) => m.check_window(window),
            Self::Tcn(m) => m.check_window(window),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::arch::ModelSpec;
    use super::super::tensor::NnError;
    use super::super::testutil::{mini_specs, random_window};
    use super::*;

    #[test]
    fn standard_models_have_the_expected_parameter_counts() {
        // TCN over 4 channels: 192+16+64 for the projected first block,
        // 3 * (768+16) for the identity blocks, 32+2 for the head.
        let tcn = SeqModel::new(ModelSpec::tcn(4, 20, 2), 0).unwrap();
        assert_eq!(tcn.num_params(), 2658);
        // CNN: 4*3*8+8 conv1, 8*3*16+16 conv2, head on 16*(20-4) features.
        let cnn = SeqModel::new(ModelSpec::cnn(4, 20, 2), 0).unwrap();
        assert_eq!(cnn.num_params(), 104 + 400 + 2 * 256 + 2);
        // LSTM: layer0 4*16*(4+16+1), two more with 16 inputs, head 2*16+2.
        let lstm = SeqModel::new(ModelSpec::lstm(4, 20, 2), 0).unwrap();
        assert_eq!(lstm.num_params(), 64 * 21 + 2 * 64 * 33 + 34);
    }

    #[test]
    fn wrong_window_shapes_and_values_are_rejected() {
        for spec in mini_specs() {
            let model = SeqModel::new(spec, 2).unwrap();
            let narrow = Tensor2::zeros(spec.window, spec.input_channels - 1);
            assert!(matches!(
                model.forward(&narrow),
                Err(NnError::ShapeMismatch { .. })
            ));
            let short = Tensor2::zeros(spec.window - 1, spec.input_channels);
            assert!(matches!(
                model.forward(&short),
                Err(NnError::ShapeMismatch { .. })
            ));
            let mut poisoned = random_window(&spec, 3);
            poisoned.set(0, 0, f64::NAN);
            assert!(matches!(model.forward(&poisoned), Err(NnError::NonFinite(_))));
            let window = random_window(&spec, 3);
            assert!(matches!(
                model.forward_backward(&window, &[1.0]),
                Err(NnError::ShapeMismatch { .. })
            ));
        }
    }

    #[test]
    fn gradient_blocks_mirror_parameter_blocks() {
        for spec in mini_specs() {
            let model = SeqModel::new(spec, 2).unwrap();
            let window = random_window(&spec, 3);
            let (out, grads) = model.forward_backward(&window, &[1.0, 0.0]).unwrap();
            assert_eq!(out, model.forward(&window).unwrap());
            let blocks = model.param_blocks();
            assert_eq!(grads.blocks.len(), blocks.len());
            for (g, (_, p)) in grads.blocks.iter().zip(&blocks) {
                assert_eq!(g.len(), p.len());
            }
            assert_eq!(grads.input.rows(), spec.window);
            assert_eq!(grads.input.cols(), spec.input_channels);
        }
    }
}
