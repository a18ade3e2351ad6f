//! Stacked unidirectional LSTM with a fully connected head on the last
//! hidden state. Gates are packed per layer in `[input, forget, cell,
//! output]` order; weights `wx` act on the layer input, `uh` on the previous
//! hidden state.

use super::arch::{Layout, ModelSpec};
use super::layers::{linear_backward, linear_forward};
use super::tensor::{NnError, Tensor2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
struct LstmLayer {
    wx: Vec<f64>, // 4*units x in_dim
    uh: Vec<f64>, // 4*units x units
    b: Vec<f64>,  // 4*units
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub(super) spec: ModelSpec,
    layers: Vec<LstmLayer>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-timestep cache of one layer's activations.
struct StepCache {
    gates: Vec<f64>, // post-activation [i, f, g, o]
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
}

impl Lstm {
    fn dims(spec: &ModelSpec) -> (usize, usize) {
        let Layout::Lstm { layers, units } = spec.layout else {
            unreachable!("lstm built from non-lstm layout")
        };
        (layers, units)
    }

    pub fn init(spec: ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let (n_layers, units) = Self::dims(&spec);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let a = (1.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-a..=a)).collect()
        };
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let in_dim = if l == 0 { spec.input_channels } else { units };
            layers.push(LstmLayer {
                wx: uniform(4 * units * in_dim, in_dim),
                uh: uniform(4 * units * units, units),
                b: vec![0.0; 4 * units],
            });
        }
        let head_w = uniform(spec.output_dim * units, units);
        Self { spec, layers, head_w, head_b: vec![0.0; spec.output_dim] }
    }

    pub fn blocks_named(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("lstm{l}.wx"), &layer.wx));
            out.push((format!("lstm{l}.uh"), &layer.uh));
            out.push((format!("lstm{l}.b"), &layer.b));
        }
        out.push(("head.w".to_string(), &self.head_w));
        out.push(("head.b".to_string(), &self.head_b));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.wx);
            out.push(&mut layer.uh);
            out.push(&mut layer.b);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// One cell step; `x` is the layer input at this time step.
    fn cell_forward(layer: &LstmLayer, units: usize, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let in_dim = x.len();
        let mut pre = layer.b.clone();
        for g in 0..4 * units {
            let mut acc = 0.0;
            for (d, xd) in x.iter().enumerate() {
                acc += layer.wx[g * in_dim + d] * xd;
            }
            for (v, hv) in h_prev.iter().enumerate() {
                acc += layer.uh[g * units + v] * hv;
            }
            pre[g] += acc;
        }
        let mut gates = vec![0.0; 4 * units];
        for u in 0..units {
            gates[u] = sigmoid(pre[u]); // input
            gates[units + u] = sigmoid(pre[units + u]); // forget
            gates[2 * units + u] = pre[2 * units + u].tanh(); // cell candidate
            gates[3 * units + u] = sigmoid(pre[3 * units + u]); // output
        }
        let mut c = vec![0.0; units];
        let mut tc = vec![0.0; units];
        let mut h = vec![0.0; units];
        for u in 0..units {
            c[u] = gates[units + u] * c_prev[u] + gates[u] * gates[2 * units + u];
            tc[u] = c[u].tanh();
            h[u] = gates[3 * units + u] * tc[u];
        }
        StepCache { gates, c, tc, h }
    }

    /// Runs all layers over the window; returns per-layer caches, per-layer
    /// input sequences, and the network output.
    #[allow(clippy::type_complexity)]
    fn run(&self, window: &Tensor2) -> (Vec<Vec<StepCache>>, Vec<Vec<Vec<f64>>>, Vec<f64>) {
        let (n_layers, units) = Self::dims(&self.spec);
        let steps = window.rows();
        let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(n_layers);
        let mut inputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_layers);
        let mut seq: Vec<Vec<f64>> = (0..steps).map(|t| window.row(t).to_vec()).collect();
        for layer in &self.layers {
            inputs.push(seq.clone());
            let mut layer_cache = Vec::with_capacity(steps);
            let mut h = vec![0.0; units];
            let mut c = vec![0.0; units];
            for x in &seq {
                let cache = Self::cell_forward(layer, units, x, &h, &c);
                h = cache.h.clone();
                c = cache.c.clone();
                layer_cache.push(cache);
            }
            seq = layer_cache.iter().map(|s| s.h.clone()).collect();
            caches.push(layer_cache);
        }
        let last_h = &caches[n_layers - 1][steps - 1].h;
        let out = linear_forward(last_h, &self.head_w, &self.head_b, self.spec.output_dim);
        (caches, inputs, out)
    }

    pub fn forward(&self, window: &Tensor2) -> Vec<f64> {
        self.run(window).2
    }

    pub fn forward_backward(
        &self,
        window: &Tensor2,
        upstream: &[f64],
    ) -> (Vec<f64>, Vec<Vec<f64>>, Tensor2) {
        let (n_layers, units) = Self::dims(&self.spec);
        let steps = window.rows();
        let (caches, inputs, out) = self.run(window);

        let mut dwx: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.wx.len()]).collect();
        let mut duh: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.uh.len()]).collect();
        let mut db: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect();
        let mut dw_head = vec![0.0; self.head_w.len()];
        let mut db_head = vec![0.0; self.head_b.len()];

        let last_h = &caches[n_layers - 1][steps - 1].h;
        let dh_last = linear_backward(last_h, &self.head_w, upstream, &mut dw_head, &mut db_head);

        // dh_seq[t]: gradient flowing into layer output h_t from above.
        let mut dh_seq: Vec<Vec<f64>> = vec![vec![0.0; units]; steps];
        dh_seq[steps - 1] = dh_last;

        let mut dx_seq: Vec<Vec<f64>> = Vec::new();
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let in_dim = if l == 0 { self.spec.input_channels } else { units };
            let mut dh_next = vec![0.0; units];
            let mut dc_next = vec![0.0; units];
            let mut dx_layer: Vec<Vec<f64>> = vec![vec![0.0; in_dim]; steps];
            for t in (0..steps).rev() {
                let cache = &caches[l][t];
                let c_prev: Vec<f64> =
                    if t == 0 { vec![0.0; units] } else { caches[l][t - 1].c.clone() };
                let h_prev: Vec<f64> =
                    if t == 0 { vec![0.0; units] } else { caches[l][t - 1].h.clone() };
                let mut dh: Vec<f64> = dh_seq[t].clone();
                for u in 0..units {
                    dh[u] += dh_next[u];
                }
                let mut dpre = vec![0.0; 4 * units];
                let mut dc_prev = vec![0.0; units];
                for u in 0..units {
                    let (i, f, g, o) = (
                        cache.gates[u],
                        cache.gates[units + u],
                        cache.gates[2 * units + u],
                        cache.gates[3 * units + u],
                    );
                    let d_o = dh[u] * cache.tc[u];
                    let dc = dh[u] * o * (1.0 - cache.tc[u] * cache.tc[u]) + dc_next[u];
                    let d_i = dc * g;
                    let d_g = dc * i;
                    let d_f = dc * c_prev[u];
                    dc_prev[u] = dc * f;
                    dpre[u] = d_i * i * (1.0 - i);
                    dpre[units + u] = d_f * f * (1.0 - f);
                    dpre[2 * units + u] = d_g * (1.0 - g * g);
                    dpre[3 * units + u] = d_o * o * (1.0 - o);
                }
                let x = &inputs[l][t];
                for g in 0..4 * units {
                    let gp = dpre[g];
                    if gp == 0.0 {
                        continue;
                    }
                    db[l][g] += gp;
                    for d in 0..in_dim {
                        dwx[l][g * in_dim + d] += gp * x[d];
                        dx_layer[t][d] += gp * layer.wx[g * in_dim + d];
                    }
                    for v in 0..units {
                        duh[l][g * units + v] += gp * h_prev[v];
                    }
                }
                let mut dh_prev = vec![0.0; units];
                for v in 0..units {
                    let mut acc = 0.0;
                    for g in 0..4 * units {
                        acc += dpre[g] * layer.uh[g * units + v];
                    }
                    dh_prev[v] = acc;
                }
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            dh_seq = dx_layer.clone();
            dx_seq = dx_layer;
        }

        let mut din = Tensor2::zeros(steps, self.spec.input_channels);
        for (t, dx) in dx_seq.iter().enumerate() {
            for (c, &v) in dx.iter().enumerate() {
                din.set(t, c, v);
            }
        }

        let mut grads = Vec::with_capacity(3 * n_layers + 2);
        for l in 0..n_layers {
            grads.push(std::mem::take(&mut dwx[l]));
            grads.push(std::mem::take(&mut duh[l]));
            grads.push(std::mem::take(&mut db[l]));
        }
        grads.push(dw_head);
        grads.push(db_head);
        (out, grads, din)
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
