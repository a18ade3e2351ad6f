//! Central-difference gradient verification. A random linear functional of
//! the model output serves as the scalar loss; its analytic gradient from
//! the backward pass is compared against symmetric finite differences for
//! every parameter and every input-window entry.

use rand::Rng;

use super::model::SeqModel;
use super::tensor::{NnError, Tensor2};
use crate::base::stream_rng;

/// Worst observed deviation and where it occurred.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_location: String,
    pub entries_checked: usize,
}

/// Relative error with an absolute floor: tiny gradients are compared
/// absolutely, large ones relatively.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn linear_loss(model: &SeqModel, window: &Tensor2, coeffs: &[f64]) -> Result<f64, NnError> {
    let out = model.forward(window)?;
    Ok(out.iter().zip(coeffs).map(|(o, c)| o * c).sum())
}

/// Checks d(loss)/d(parameter) for every parameter block and d(loss)/d(input)
/// for every window entry, using step `eps` central differences. The loss is
/// `sum(c_i * out_i)` with coefficients drawn in `[0.5, 1.5]` from `seed` so
/// every output component contributes with order-one weight.
pub fn check_gradients(
    model: &SeqModel,
    window: &Tensor2,
    seed: u64,
    eps: f64,
) -> Result<GradCheckReport, NnError> {
    let mut rng = stream_rng(seed, "gradcheck.coeffs");
    let coeffs: Vec<f64> =
        (0..model.spec().output_dim).map(|_| rng.gen_range(0.5..=1.5)).collect();

    let (_, grads) = model.forward_backward(window, &coeffs)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_location: String::new(),
        entries_checked: 0,
    };
    let note = |err: f64, loc: String, report: &mut GradCheckReport| {
        report.entries_checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_location = loc;
        }
    };

    let names: Vec<String> = model.param_blocks().iter().map(|(n, _)| n.clone()).collect();
    let mut probe = model.clone();
    for (bi, name) in names.iter().enumerate() {
        let block_len = probe.param_blocks()[bi].1.len();
        for j in 0..block_len {
            let orig = probe.param_blocks()[bi].1[j];
            probe.param_blocks_mut()[bi][j] = orig + eps;
            let up = linear_loss(&probe, window, &coeffs)?;
            probe.param_blocks_mut()[bi][j] = orig - eps;
            let down = linear_loss(&probe, window, &coeffs)?;
            probe.param_blocks_mut()[bi][j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = rel_err(grads.blocks[bi][j], numeric);
            note(err, format!("{name}[{j}]"), &mut report);
        }
    }

    let mut win = window.clone();
    for r in 0..win.rows() {
        for c in 0..win.cols() {
            let orig = win.get(r, c);
            win.set(r, c, orig + eps);
            let up = linear_loss(model, &win, &coeffs)?;
            win.set(r, c, orig - eps);
            let down = linear_loss(model, &win, &coeffs)?;
            win.set(r, c, orig);
            let numeric = (up - down) / (2.0 * eps);
            let err = rel_err(grads.input.get(r, c), numeric);
            note(err, format!("input[{r},{c}]"), &mut report);
        }
    }
    Ok(report)
}
