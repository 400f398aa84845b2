//! Central finite-difference verification of the analytic gradients.

use super::config::TrainingConfig;
use super::network::ModelParameters;
use super::train::{batch_gradients, batch_loss, Dataset};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Flat index of the worst parameter.
    pub worst: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)` over every parameter.
pub fn check_gradients(
    params: &ModelParameters,
    ds: &Dataset,
    idx: &[usize],
    cfg: &TrainingConfig,
    eps: f64,
    floor: f64,
) -> Result<GradCheck> {
    let (_, grad) = batch_gradients(params, ds, idx, cfg)?;
    let analytic: Vec<f64> = grad.tensors().concat();
    let mut p = params.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        worst: 0,
    };
    let sizes: Vec<usize> = p.weights.tensors().iter().map(|t| t.len()).collect();
    let mut flat = 0;
    for (t, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = p.weights.tensors()[t][i];
            p.weights.tensors_mut()[t][i] = orig + eps;
            let up = batch_loss(&p, ds, idx, cfg)?.total;
            p.weights.tensors_mut()[t][i] = orig - eps;
            let down = batch_loss(&p, ds, idx, cfg)?.total;
            p.weights.tensors_mut()[t][i] = orig;
            let num = (up - down) / (2.0 * eps);
            let a = analytic[flat];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(floor);
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst = flat;
            }
            out.checked += 1;
            flat += 1;
        }
    }
    Ok(out)
}
