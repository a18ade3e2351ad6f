//! Two-layer 1-D convolutional regressor: valid convolutions (no pooling,
//! no padding) with ReLU after each, flattened into a fully connected head.

use super::arch::{Layout, ModelSpec};
use super::layers::{
    conv1d_valid_backward, conv1d_valid_forward, linear_backward, linear_forward, relu,
};
use super::tensor::{NnError, Tensor2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn {
    pub(super) spec: ModelSpec,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

impl Cnn {
    fn dims(spec: &ModelSpec) -> (usize, usize, usize) {
        let Layout::Cnn { channels, kernel } = spec.layout else {
            unreachable!("cnn built from non-cnn layout")
        };
        (channels.0, channels.1, kernel)
    }

    /// Rows after the two valid convolutions.
    fn out_rows(spec: &ModelSpec) -> usize {
        let (_, _, k) = Self::dims(spec);
        spec.window - 2 * (k - 1)
    }

    pub fn init(spec: ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let (c1, c2, k) = Self::dims(&spec);
        let flat = Self::out_rows(&spec) * c2;
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let a = (1.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-a..=a)).collect()
        };
        let w1 = uniform(c1 * spec.input_channels * k, spec.input_channels * k);
        let w2 = uniform(c2 * c1 * k, c1 * k);
        let head_w = uniform(spec.output_dim * flat, flat);
        Self {
            spec,
            w1,
            b1: vec![0.0; c1],
            w2,
            b2: vec![0.0; c2],
            head_w,
            head_b: vec![0.0; spec.output_dim],
        }
    }

    pub fn blocks_named(&self) -> Vec<(String, &Vec<f64>)> {
        [
            ("conv1.w", &self.w1),
            ("conv1.b", &self.b1),
            ("conv2.w", &self.w2),
            ("conv2.b", &self.b2),
            ("head.w", &self.head_w),
            ("head.b", &self.head_b),
        ]
        .map(|(n, b)| (n.to_string(), b))
        .into_iter()
        .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    fn run(&self, window: &Tensor2) -> (Tensor2, Tensor2, Tensor2, Tensor2, Vec<f64>, Vec<f64>) {
        let (c1, c2, k) = Self::dims(&self.spec);
        let z1 = conv1d_valid_forward(window, &self.w1, &self.b1, c1, k);
        let mut a1 = z1.clone();
        for r in 0..a1.rows() {
            for c in 0..a1.cols() {
                a1.set(r, c, relu(z1.get(r, c)));
            }
        }
        let z2 = conv1d_valid_forward(&a1, &self.w2, &self.b2, c2, k);
        let mut a2 = z2.clone();
        for r in 0..a2.rows() {
            for c in 0..a2.cols() {
                a2.set(r, c, relu(z2.get(r, c)));
            }
        }
        let flat: Vec<f64> = a2.data().to_vec();
        let out = linear_forward(&flat, &self.head_w, &self.head_b, self.spec.output_dim);
        (z1, a1, z2, a2, flat, out)
    }

    pub fn forward(&self, window: &Tensor2) -> Vec<f64> {
        self.run(window).5
    }

    /// Returns output, parameter gradients in block order, and the gradient
    /// with respect to the input window.
    pub fn forward_backward(
        &self,
        window: &Tensor2,
        upstream: &[f64],
    ) -> (Vec<f64>, Vec<Vec<f64>>, Tensor2) {
        let (c1, c2, k) = Self::dims(&self.spec);
        let (z1, a1, z2, _a2, flat, out) = self.run(window);

        let mut dw_head = vec![0.0; self.head_w.len()];
        let mut db_head = vec![0.0; self.head_b.len()];
        let dflat = linear_backward(&flat, &self.head_w, upstream, &mut dw_head, &mut db_head);

        let mut da2 = Tensor2::zeros(z2.rows(), c2);
        for r in 0..z2.rows() {
            for c in 0..c2 {
                let g = dflat[r * c2 + c];
                da2.set(r, c, if z2.get(r, c) > 0.0 { g } else { 0.0 });
            }
        }
        let mut dw2 = vec![0.0; self.w2.len()];
        let mut db2 = vec![0.0; self.b2.len()];
        let da1_post = conv1d_valid_backward(&a1, &self.w2, c2, k, &da2, &mut dw2, &mut db2);

        let mut da1 = Tensor2::zeros(z1.rows(), c1);
        for r in 0..z1.rows() {
            for c in 0..c1 {
                let g = da1_post.get(r, c);
                da1.set(r, c, if z1.get(r, c) > 0.0 { g } else { 0.0 });
            }
        }
        let mut dw1 = vec![0.0; self.w1.len()];
        let mut db1 = vec![0.0; self.b1.len()];
        let din = conv1d_valid_backward(window, &self.w1, c1, k, &da1, &mut dw1, &mut db1);

        (out, vec![dw1, db1, dw2, db2, dw_head, db_head], din)
    }

    pub(super) fn check_window(&self, window: &Tensor2) -> Result<(), NnError> {
        if window.rows() != self.spec.window || window.cols() != self.spec.input_channels {
            return Err(NnError::ShapeMismatch {
                expected: format!("{}x{}", self.spec.window, self.spec.input_channels),
                got: format!("{}x{}", window.rows(), window.cols()),
            });
        }
        Ok(())
    }
}
