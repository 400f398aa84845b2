use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureLayout, DEFAULT_TTA_DIM};
use crate::motion::{FootConfig, Skeleton};

/// Network shape. The expert bank sees only the pose input; the condition
/// reaches the output through the gating weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub experts: usize,
    /// Width of each of the two hidden expert layers.
    pub expert_hidden: usize,
    /// Hidden widths of the gating network; the output width is `experts`.
    pub gating_hidden: Vec<usize>,
    pub style_dim: usize,
    pub tta_dim: usize,
    pub n_styles: usize,
    pub layout: FeatureLayout,
    /// Joint indices of the contact feet, in output-contact order.
    pub foot_joints: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let foot_joints = FootConfig::default()
            .resolve(&Skeleton::humanoid())
            .expect("humanoid has feet");
        ModelConfig {
            experts: 16,
            expert_hidden: 512,
            gating_hidden: vec![512, 128],
            style_dim: 256,
            tta_dim: DEFAULT_TTA_DIM,
            n_styles: 4,
            layout: FeatureLayout::default(),
            foot_joints,
        }
    }
}

impl ModelConfig {
    /// Small network for desk-scale experiments.
    pub fn toy() -> Self {
        ModelConfig {
            experts: 4,
            expert_hidden: 128,
            gating_hidden: vec![64, 32],
            style_dim: 16,
            tta_dim: 32,
            ..ModelConfig::default()
        }
    }

    pub fn gating_input(&self) -> usize {
        self.layout.phase_dim() + self.style_dim + self.tta_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.experts == 0 || self.expert_hidden == 0 {
            return bad("expert count and width must be positive");
        }
        if self.gating_hidden.contains(&0) {
            return bad("gating widths must be positive");
        }
        if !self.tta_dim.is_multiple_of(2) {
            return Err(Error::OddDimension(self.tta_dim));
        }
        if self.n_styles == 0 {
            return bad("at least one style is required");
        }
        if self.foot_joints.len() != self.layout.feet {
            return bad("foot joint list does not match layout");
        }
        if self.foot_joints.iter().any(|&j| j >= self.layout.joints) {
            return bad("foot joint index out of range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from `lr` to zero over the run.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub lambda_recon: f64,
    pub lambda_consist: f64,
    pub dt: f64,
    pub mask_rate: f64,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub steps: Option<usize>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
    /// Longest frame gap between a sample and its target.
    pub max_target_gap: usize,
    /// Target draws per source frame when building a dataset.
    pub targets_per_frame: usize,
    pub mirror: bool,
    pub min_std: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 1e-4,
            weight_decay: 1e-4,
            batch_size: 32,
            lambda_recon: 1.0,
            lambda_consist: 2.5,
            dt: 1.0 / 30.0,
            mask_rate: 0.15,
            epochs: 10,
            steps: None,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule: LrSchedule::Constant,
            max_target_gap: crate::features::MAX_TARGET_GAP,
            targets_per_frame: 1,
            mirror: true,
            min_std: 0.01,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.weight_decay >= 0.0
            && self.batch_size > 0
            && self.lambda_recon >= 0.0
            && self.lambda_consist >= 0.0
            && self.dt > 0.0
            && (0.0..=1.0).contains(&self.mask_rate)
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.max_target_gap >= 1
            && self.targets_per_frame >= 1
            && self.min_std > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid training config: {self:?}")))
        }
    }

    pub fn total_steps(&self, samples: usize) -> usize {
        self.steps
            .unwrap_or_else(|| self.epochs * samples.div_ceil(self.batch_size))
    }

    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let t = step as f64 / total.max(1) as f64;
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}
