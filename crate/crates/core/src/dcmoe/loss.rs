//! Reconstruction and consistency losses with their gradients.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, OutputState, FUTURE, PHASE_DIM};
use crate::rotmath::Vec3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pos: f64,
    pub rot: f64,
    pub vel: f64,
    pub contacts: f64,
    pub traj: f64,
    pub phase: f64,
    /// Foot velocity weighted by predicted contact.
    pub contact_consistency: f64,
    /// Squared gap between predicted position and position integrated from velocity.
    pub velocity_consistency: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn reconstruction(&self) -> f64 {
        self.pos + self.rot + self.vel + self.contacts + self.traj + self.phase
    }

    pub fn consistency(&self) -> f64 {
        self.contact_consistency + self.velocity_consistency
    }
}

/// Mean Euclidean norm over consecutive groups of `width` values in `range`.
/// Adds `weight * d/dpred` into `grad`.
fn group_norm_term(
    pred: ArrayView2<f64>,
    truth: ArrayView2<f64>,
    start: usize,
    width: usize,
    groups: usize,
    weight: f64,
    grad: &mut Array2<f64>,
) -> f64 {
    let b = pred.nrows();
    let scale = 1.0 / (b * groups) as f64;
    let mut total = 0.0;
    for i in 0..b {
        for g in 0..groups {
            let o = start + g * width;
            let mut sq = 0.0;
            for k in o..o + width {
                let d = pred[[i, k]] - truth[[i, k]];
                sq += d * d;
            }
            let n = sq.sqrt();
            total += n;
            // Subgradient zero at the kink.
            if n > 0.0 {
                let c = weight * scale / n;
                for k in o..o + width {
                    grad[[i, k]] += c * (pred[[i, k]] - truth[[i, k]]);
                }
            }
        }
    }
    total * scale
}

/// Loss and its gradient with respect to `pred`.
///
/// `pred` and `truth` are physical-unit output rows; `current` holds each
/// sample's current joint positions (`B x 3J`) in the same root frame.
pub fn loss_and_grad(
    pred: ArrayView2<f64>,
    truth: ArrayView2<f64>,
    current: ArrayView2<f64>,
    layout: &FeatureLayout,
    foot_joints: &[usize],
    cfg: &TrainingConfig,
) -> Result<(LossBreakdown, Array2<f64>)> {
    let (b, yd, j) = (pred.nrows(), layout.y_dim(), layout.joints);
    if pred.dim() != (b, yd) || truth.dim() != (b, yd) || current.dim() != (b, 3 * j) {
        return Err(Error::ShapeMismatch(format!(
            "loss inputs {:?}/{:?}/{:?} for output width {yd}",
            pred.dim(),
            truth.dim(),
            current.dim()
        )));
    }
    if foot_joints.len() != layout.feet {
        return Err(Error::ShapeMismatch("foot joint count".into()));
    }
    if b == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut grad = Array2::zeros((b, yd));
    let (lr, lc) = (cfg.lambda_recon, cfg.lambda_consist);
    let mut l = LossBreakdown {
        pos: group_norm_term(pred, truth, layout.y_pos().start, 3, j, lr, &mut grad),
        rot: group_norm_term(pred, truth, layout.y_rot().start, 6, j, lr, &mut grad),
        vel: group_norm_term(pred, truth, layout.y_vel().start, 3, j, lr, &mut grad),
        contacts: group_norm_term(
            pred,
            truth,
            layout.y_contacts().start,
            layout.feet,
            FUTURE,
            lr,
            &mut grad,
        ),
        traj: group_norm_term(pred, truth, layout.y_traj().start, 4, FUTURE, lr, &mut grad),
        phase: group_norm_term(
            pred,
            truth,
            layout.y_phase().start,
            PHASE_DIM,
            FUTURE,
            lr,
            &mut grad,
        ),
        ..LossBreakdown::default()
    };

    let (c0, v0, p0) = (
        layout.y_contacts().start,
        layout.y_vel().start,
        layout.y_pos().start,
    );
    // Contact consistency on the next frame.
    let scale = 1.0 / (b * layout.feet) as f64;
    let mut cc = 0.0;
    for i in 0..b {
        for (f, &jt) in foot_joints.iter().enumerate() {
            let c = pred[[i, c0 + f]];
            let vo = v0 + 3 * jt;
            let v = pred.slice(s![i, vo..vo + 3]);
            let n = v.dot(&v).sqrt();
            cc += c * n;
            grad[[i, c0 + f]] += lc * scale * n;
            if n > 0.0 {
                for k in 0..3 {
                    grad[[i, vo + k]] += lc * scale * c * v[k] / n;
                }
            }
        }
    }
    l.contact_consistency = cc * scale;

    // Velocity consistency.
    let scale = 1.0 / (b * j) as f64;
    let mut vc = 0.0;
    for i in 0..b {
        for jt in 0..j {
            for k in 0..3 {
                let r = current[[i, 3 * jt + k]] + pred[[i, v0 + 3 * jt + k]] * cfg.dt
                    - pred[[i, p0 + 3 * jt + k]];
                vc += r * r;
                grad[[i, v0 + 3 * jt + k]] += lc * scale * 2.0 * r * cfg.dt;
                grad[[i, p0 + 3 * jt + k]] -= lc * scale * 2.0 * r;
            }
        }
    }
    l.velocity_consistency = vc * scale;
    l.total = lr * l.reconstruction() + lc * l.consistency();
    Ok((l, grad))
}

/// Loss over predicted and ground-truth output states.
pub fn compute_loss(
    pred: &[OutputState],
    truth: &[OutputState],
    current: &[Vec<Vec3>],
    layout: &FeatureLayout,
    foot_joints: &[usize],
    cfg: &TrainingConfig,
) -> Result<LossBreakdown> {
    if pred.len() != truth.len() || pred.len() != current.len() {
        return Err(Error::ShapeMismatch(format!(
            "batch sizes {}/{}/{}",
            pred.len(),
            truth.len(),
            current.len()
        )));
    }
    let rows = |v: Vec<Vec<f64>>, w: usize| -> Result<Array2<f64>> {
        if v.iter().any(|r| r.len() != w) {
            return Err(Error::ShapeMismatch("row width".into()));
        }
        Ok(Array2::from_shape_vec((v.len(), w), v.concat()).expect("checked"))
    };
    let yd = layout.y_dim();
    let p = rows(pred.iter().map(|o| o.to_vector()).collect(), yd)?;
    let t = rows(truth.iter().map(|o| o.to_vector()).collect(), yd)?;
    let c = rows(
        current
            .iter()
            .map(|c| c.iter().flat_map(|v| v.to_array()).collect())
            .collect(),
        3 * layout.joints,
    )?;
    Ok(loss_and_grad(p.view(), t.view(), c.view(), layout, foot_joints, cfg)?.0)
}
