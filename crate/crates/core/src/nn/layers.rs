//! Shared layer primitives: 1-D convolutions (valid and causal dilated), the
//! fully connected head, and activations, each with a hand-written backward
//! pass. Weight layout for convolutions is `w[out][in][tap]` flattened
//! row-major; biases are one value per output channel.

use super::tensor::Tensor2;

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Valid (uncropped) convolution along time: output has
/// `in.rows() - kernel + 1` rows.
pub fn conv1d_valid_forward(
    input: &Tensor2,
    w: &[f64],
    b: &[f64],
    out_ch: usize,
    kernel: usize,
) -> Tensor2 {
    let in_ch = input.cols();
    let out_rows = input.rows() + 1 - kernel;
    let mut out = Tensor2::zeros(out_rows, out_ch);
    for t in 0..out_rows {
        for o in 0..out_ch {
            let mut acc = b[o];
            for i in 0..in_ch {
                for j in 0..kernel {
                    acc += w[(o * in_ch + i) * kernel + j] * input.get(t + j, i);
                }
            }
            out.set(t, o, acc);
        }
    }
    out
}

/// Backward for [`conv1d_valid_forward`]: accumulates into `dw`/`db` and
/// returns the input gradient.
pub fn conv1d_valid_backward(
    input: &Tensor2,
    w: &[f64],
    out_ch: usize,
    kernel: usize,
    dout: &Tensor2,
    dw: &mut [f64],
    db: &mut [f64],
) -> Tensor2 {
    let in_ch = input.cols();
    let mut din = Tensor2::zeros(input.rows(), in_ch);
    for t in 0..dout.rows() {
        for o in 0..out_ch {
            let g = dout.get(t, o);
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            for i in 0..in_ch {
                for j in 0..kernel {
                    dw[(o * in_ch + i) * kernel + j] += g * input.get(t + j, i);
                    din.add(t + j, i, g * w[(o * in_ch + i) * kernel + j]);
                }
            }
        }
    }
    din
}

/// Causal dilated convolution: output row `t` reads input rows
/// `t - (kernel-1-j) * dilation` (zero where negative), so no output depends
/// on inputs after its own time step. Output has the same number of rows as
/// the input.
pub fn conv1d_causal_forward(
    input: &Tensor2,
    w: &[f64],
    b: &[f64],
    out_ch: usize,
    kernel: usize,
    dilation: usize,
) -> Tensor2 {
    let in_ch = input.cols();
    let rows = input.rows();
    let mut out = Tensor2::zeros(rows, out_ch);
    for t in 0..rows {
        for o in 0..out_ch {
            let mut acc = b[o];
            for j in 0..kernel {
                let offset = (kernel - 1 - j) * dilation;
                if offset > t {
                    continue;
                }
                let m = t - offset;
                for i in 0..in_ch {
                    acc += w[(o * in_ch + i) * kernel + j] * input.get(m, i);
                }
            }
            out.set(t, o, acc);
        }
    }
    out
}

/// Backward for [`conv1d_causal_forward`].
pub fn conv1d_causal_backward(
    input: &Tensor2,
    w: &[f64],
    out_ch: usize,
    kernel: usize,
    dilation: usize,
    dout: &Tensor2,
    dw: &mut [f64],
    db: &mut [f64],
) -> Tensor2 {
    let in_ch = input.cols();
    let rows = input.rows();
    let mut din = Tensor2::zeros(rows, in_ch);
    for t in 0..rows {
        for o in 0..out_ch {
            let g = dout.get(t, o);
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            for j in 0..kernel {
                let offset = (kernel - 1 - j) * dilation;
                if offset > t {
                    continue;
                }
                let m = t - offset;
                for i in 0..in_ch {
                    dw[(o * in_ch + i) * kernel + j] += g * input.get(m, i);
                    din.add(m, i, g * w[(o * in_ch + i) * kernel + j]);
                }
            }
        }
    }
    din
}

/// Fully connected map `y = W x + b` with `W` stored row-major `out x in`.
pub fn linear_forward(x: &[f64], w: &[f64], b: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = x.len();
    (0..out_dim)
        .map(|o| {
            let mut acc = b[o];
            for (i, xi) in x.iter().enumerate() {
                acc += w[o * in_dim + i] * xi;
            }
            acc
        })
        .collect()
}

/// Backward for [`linear_forward`]; returns the input gradient.
pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let in_dim = x.len();
    let mut dx = vec![0.0; in_dim];
    for (o, &g) in dy.iter().enumerate() {
        db[o] += g;
        for i in 0..in_dim {
            dw[o * in_dim + i] += g * x[i];
            dx[i] += g * w[o * in_dim + i];
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_conv_matches_hand_computation() {
        // 1 input channel, kernel [1, 2], bias 0.5 over series [1, 2, 3].
        let input = Tensor2::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let out = conv1d_valid_forward(&input, &[1.0, 2.0], &[0.5], 1, 2);
        assert_eq!(out.rows(), 2);
        assert_eq!(out.row(0), &[1.0 + 4.0 + 0.5]);
        assert_eq!(out.row(1), &[2.0 + 6.0 + 0.5]);
    }

    #[test]
    fn causal_conv_pads_left_and_preserves_length() {
        let input = Tensor2::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        // kernel taps [a=10 (oldest), b=1 (current)], dilation 2
        let out = conv1d_causal_forward(&input, &[10.0, 1.0], &[0.0], 1, 2, 2);
        assert_eq!(out.rows(), 4);
        assert_eq!(out.row(0), &[1.0]); // 10*pad + 1*x0
        assert_eq!(out.row(1), &[2.0]);
        assert_eq!(out.row(2), &[13.0]); // 10*x0 + x2
        assert_eq!(out.row(3), &[24.0]); // 10*x1 + x3
    }

    #[test]
    fn linear_round_trip_gradients_match_hand_values() {
        let x = [1.0, -2.0];
        let w = [3.0, 4.0, 5.0, 6.0]; // 2x2
        let b = [0.1, -0.1];
        let y = linear_forward(&x, &w, &b, 2);
        assert_eq!(y, vec![3.0 - 8.0 + 0.1, 5.0 - 12.0 - 0.1]);
        let mut dw = [0.0; 4];
        let mut db = [0.0; 2];
        let dx = linear_backward(&x, &w, &[1.0, 1.0], &mut dw, &mut db);
        assert_eq!(dx, vec![3.0 + 5.0, 4.0 + 6.0]);
        assert_eq!(dw, [1.0, -2.0, 1.0, -2.0]);
        assert_eq!(db, [1.0, 1.0]);
    }
}
