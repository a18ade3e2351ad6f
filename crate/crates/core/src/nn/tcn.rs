//! Temporal convolutional network: residual blocks of causal dilated
//! convolutions (dilation doubling per block) with ReLU, a linear 1x1
//! projection on the residual path when channel counts differ, and a fully
//! connected head reading the last time step. No output ever depends on
//! input rows after its own time step.

use super::arch::{Layout, ModelSpec};
use super::layers::{
    conv1d_causal_backward, conv1d_causal_forward, linear_backward, linear_forward, relu,
};
use super::tensor::{NnError, Tensor2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
struct TcnBlock {
    conv_w: Vec<f64>, // ch x in x k
    conv_b: Vec<f64>, // ch
    /// 1x1 residual projection `ch x in`, present only when `in != ch`.
    proj_w: Option<Vec<f64>>,
    dilation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tcn {
    pub(super) spec: ModelSpec,
    blocks: Vec<TcnBlock>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

impl Tcn {
    fn dims(spec: &ModelSpec) -> (usize, usize, usize) {
        let Layout::Tcn { blocks, channels, kernel } = spec.layout else {
            unreachable!("tcn built from non-tcn layout")
        };
        (blocks, channels, kernel)
    }

    pub fn init(spec: ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let (n_blocks, ch, k) = Self::dims(&spec);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let a = (1.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-a..=a)).collect()
        };
        let mut blocks = Vec::with_capacity(n_blocks);
        for b in 0..n_blocks {
            let in_ch = if b == 0 { spec.input_channels } else { ch };
            blocks.push(TcnBlock {
                conv_w: uniform(ch * in_ch * k, in_ch * k),
                conv_b: vec![0.0; ch],
                proj_w: (in_ch != ch).then(|| uniform(ch * in_ch, in_ch)),
                dilation: 1 << b,
            });
        }
        let head_w = uniform(spec.output_dim * ch, ch);
        Self { spec, blocks, head_w, head_b: vec![0.0; spec.output_dim] }
    }

    pub fn blocks_named(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{b}.conv.w"), &block.conv_w));
            out.push((format!("block{b}.conv.b"), &block.conv_b));
            if let Some(p) = &block.proj_w {
                out.push((format!("block{b}.proj.w"), p));
            }
        }
        out.push(("head.w".to_string(), &self.head_w));
        out.push(("head.b".to_string(), &self.head_b));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for block in &mut self.blocks {
            out.push(&mut block.conv_w);
            out.push(&mut block.conv_b);
            if let Some(p) = &mut block.proj_w {
                out.push(p);
            }
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// Runs the residual stack; returns per-block inputs, pre-activations,
    /// and the final feature sequence.
    fn run_blocks(&self, window: &Tensor2) -> (Vec<Tensor2>, Vec<Tensor2>, Tensor2) {
        let (_, ch, k) = Self::dims(&self.spec);
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut pre = Vec::with_capacity(self.blocks.len());
        let mut x = window.clone();
        for block in &self.blocks {
            let z = conv1d_causal_forward(&x, &block.conv_w, &block.conv_b, ch, k, block.dilation);
            let mut out = Tensor2::zeros(x.rows(), ch);
            let in_ch = x.cols();
            for t in 0..x.rows() {
                for o in 0..ch {
                    let mut v = relu(z.get(t, o));
                    v += match &block.proj_w {
                        Some(p) => (0..in_ch).map(|i| p[o * in_ch + i] * x.get(t, i)).sum::<f64>(),
                        None => x.get(t, o),
                    };
                    out.set(t, o, v);
                }
            }
            inputs.push(x);
            pre.push(z);
            x = out;
        }
        (inputs, pre, x)
    }

    /// Feature sequence after the final residual block (`window rows x
    /// channels`). Row `t` depends only on input rows `<= t`.
    pub fn features(&self, window: &Tensor2) -> Tensor2 {
        self.run_blocks(window).2
    }

    pub fn forward(&self, window: &Tensor2) -> Vec<f64> {
        let feats = self.features(window);
        linear_forward(feats.row(feats.rows() - 1), &self.head_w, &self.head_b, self.spec.output_dim)
    }

    pub fn forward_backward(
        &self,
        window: &Tensor2,
        upstream: &[f64],
    ) -> (Vec<f64>, Vec<Vec<f64>>, Tensor2) {
        let (_, ch, k) = Self::dims(&self.spec);
        let (inputs, pre, feats) = self.run_blocks(window);
        let last = feats.rows() - 1;
        let out = linear_forward(feats.row(last), &self.head_w, &self.head_b, self.spec.output_dim);

        let mut dw_head = vec![0.0; self.head_w.len()];
        let mut db_head = vec![0.0; self.head_b.len()];
        let dlast = linear_backward(feats.row(last), &self.head_w, upstream, &mut dw_head, &mut db_head);
        let mut dout = Tensor2::zeros(feats.rows(), ch);
        for (c, &v) in dlast.iter().enumerate() {
            dout.set(last, c, v);
        }

        let mut block_grads: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.blocks.len());
        for (b, block) in self.blocks.iter().enumerate().rev() {
            let x = &inputs[b];
            let z = &pre[b];
            let in_ch = x.cols();
            let mut dz = Tensor2::zeros(z.rows(), ch);
            for t in 0..z.rows() {
                for o in 0..ch {
                    if z.get(t, o) > 0.0 {
                        dz.set(t, o, dout.get(t, o));
                    }
                }
            }
            let mut dw = vec![0.0; block.conv_w.len()];
            let mut db = vec![0.0; block.conv_b.len()];
            let mut dx =
                conv1d_causal_backward(x, &block.conv_w, ch, k, block.dilation, &dz, &mut dw, &mut db);
            let mut grads = vec![dw, db];
            match &block.proj_w {
                Some(p) => {
                    let mut dp = vec![0.0; p.len()];
                    for t in 0..x.rows() {
                        for o in 0..ch {
                            let g = dout.get(t, o);
                            if g == 0.0 {
                                continue;
                            }
                            for i in 0..in_ch {
                                dp[o * in_ch + i] += g * x.get(t, i);
                                dx.add(t, i, g * p[o * in_ch + i]);
                            }
                        }
                    }
                    grads.push(dp);
                }
                None => {
                    for t in 0..x.rows() {
                        for o in 0..ch {
                            dx.add(t, o, dout.get(t, o));
                        }
                    }
                }
            }
            block_grads.push(grads);
            dout = dx;
        }

        let mut flat = Vec::new();
        for grads in block_grads.into_iter().rev() {
            flat.extend(grads);
        }
        flat.push(dw_head);
        flat.push(db_head);
        (out, flat, dout)
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
