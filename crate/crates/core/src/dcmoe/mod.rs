//! Mixture-of-experts pose predictor: network, losses, training and rollout.

mod config;
mod gradcheck;
pub mod io;
mod loss;
mod network;
mod rollout;
mod train;

pub use config::{LrSchedule, ModelConfig, TrainingConfig};
pub use gradcheck::{check_gradients, GradCheck};
pub use loss::{compute_loss, loss_and_grad, LossBreakdown};
pub use network::{
    backward, expert_forward, forward_batch, gating_forward, gating_weights_batch, moe_forward,
    moe_forward_with_weights, predict_batch, BatchInput, Forward, Linear, Mlp, ModelParameters,
    Weights,
};
pub use rollout::{
    rollout, rollout_detailed, FrameState, Guidance, RolloutOutput, RolloutStart, TargetPose,
    MAX_TTA, MIN_TTA,
};
pub use train::{
    batch_gradients, batch_loss, build_dataset, fit_normalizers, prepare_clip, train,
    train_in_place, AdamW, Dataset, Sample, TrainReport,
};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureLayout;

/// Random features with binary contact labels, for gradient checks and benchmarks.
pub fn random_dataset(layout: FeatureLayout, n: usize, n_styles: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let contacts = layout.y_contacts();
    let samples = (0..n)
        .map(|_| {
            let mut y: Vec<f64> = (0..layout.y_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            for k in contacts.clone() {
                y[k] = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            }
            Sample {
                x: (0..layout.x_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                phase: (0..layout.phase_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                style: rng.random_range(0..n_styles),
                tta: rng.random_range(1..=90),
                y,
            }
        })
        .collect();
    Dataset { layout, samples }
}

/// Two experts of width 8 with small gating and embedding tables.
pub fn reduced_config() -> ModelConfig {
    ModelConfig {
        experts: 2,
        expert_hidden: 8,
        gating_hidden: vec![8, 8],
        style_dim: 4,
        tta_dim: 16,
        n_styles: 2,
        ..ModelConfig::default()
    }
}
