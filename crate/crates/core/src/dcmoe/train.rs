//! Dataset assembly, normalizer fitting and the AdamW training loop.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, TrainingConfig};
use super::loss::{loss_and_grad, LossBreakdown};
use super::network::{backward, forward_batch, BatchInput, ModelParameters, Weights};
use crate::error::{Error, Result};
use crate::features::{
    assemble, extract_phase_proxy, ground_truth, FeatureLayout, Normalizer,
};
use crate::motion::{ContactTrack, FootConfig, MotionClip};

/// One training pair with raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub phase: Vec<f64>,
    pub style: usize,
    pub tta: usize,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: FeatureLayout,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> (BatchInput, Array2<f64>, Array2<f64>) {
        let l = &self.layout;
        let b = idx.len();
        let mut x = Array2::zeros((b, l.x_dim()));
        let mut phase = Array2::zeros((b, l.phase_dim()));
        let mut y = Array2::zeros((b, l.y_dim()));
        let mut cur = Array2::zeros((b, 3 * l.joints));
        for (r, &i) in idx.iter().enumerate() {
            let s = &self.samples[i];
            for (d, v) in x.row_mut(r).iter_mut().zip(&s.x) {
                *d = *v;
            }
            for (d, v) in phase.row_mut(r).iter_mut().zip(&s.phase) {
                *d = *v;
            }
            for (d, v) in y.row_mut(r).iter_mut().zip(&s.y) {
                *d = *v;
            }
            for j in 0..l.joints {
                let o = l.x_current(j);
                for k in 0..3 {
                    cur[[r, 3 * j + k]] = s.x[o + k];
                }
            }
        }
        let input = BatchInput {
            x,
            phase,
            style: idx.iter().map(|&i| self.samples[i].style).collect(),
            tta: idx.iter().map(|&i| self.samples[i].tta as f64).collect(),
        };
        (input, y, cur)
    }
}

/// Clip with kinematic caches, phases and contact labels.
pub fn prepare_clip(clip: &MotionClip, feet: &FootConfig) -> Result<(MotionClip, ContactTrack)> {
    let mut c = clip.clone();
    if c.world.is_none() || c.velocities.is_none() {
        c.derive()?;
    }
    if c.phases.is_none() {
        c.phases = Some(extract_phase_proxy(&c)?);
    }
    let contacts = c.detect_contacts(feet)?;
    Ok((c, contacts))
}

/// Samples every transition of every clip (and its mirror image when
/// enabled) against randomly drawn targets with random joint masks.
pub fn build_dataset(clips: &[MotionClip], cfg: &TrainingConfig) -> Result<Dataset> {
    cfg.validate()?;
    let feet = FootConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
    let mut samples = Vec::new();
    let mut layout = None;
    for clip in clips {
        let mut variants = vec![clip.clone()];
        if cfg.mirror {
            variants.push(clip.mirror()?);
        }
        for v in &variants {
            let (c, contacts) = prepare_clip(v, &feet)?;
            let frames = c.num_frames();
            let nj = c.num_joints();
            layout.get_or_insert(FeatureLayout {
                joints: nj,
                feet: contacts.feet(),
            });
            for n in 0..frames.saturating_sub(1) {
                let hi = (n + cfg.max_target_gap).min(frames - 1);
                let y = ground_truth(&c, &contacts, n)?.to_vector();
                for _ in 0..cfg.targets_per_frame {
                    let t = rng.random_range(n + 1..=hi);
                    let mask: Vec<bool> = (0..nj)
                        .map(|j| j != 0 && rng.random_bool(cfg.mask_rate))
                        .collect();
                    let (x, cond) = assemble(&c, n, t, &mask)?;
                    samples.push(Sample {
                        x: x.to_vector(),
                        phase: cond.phase_vector(),
                        style: cond.style,
                        tta: cond.tta,
                        y: y.clone(),
                    });
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        layout: layout.expect("set with samples"),
        samples,
    })
}

/// Fits input, phase and output normalizers on `ds`. Contact outputs are
/// logits and stay unscaled.
pub fn fit_normalizers(params: &mut ModelParameters, ds: &Dataset, min_std: f64) {
    let l = &params.config.layout;
    params.x_norm = Normalizer::fit(ds.samples.iter().map(|s| s.x.as_slice()), l.x_dim(), min_std);
    params.phase_norm =
        Normalizer::fit(ds.samples.iter().map(|s| s.phase.as_slice()), l.phase_dim(), min_std);
    let mut y = Normalizer::fit(ds.samples.iter().map(|s| s.y.as_slice()), l.y_dim(), min_std);
    for k in l.y_contacts() {
        y.mean[k] = 0.0;
        y.std[k] = 1.0;
    }
    params.y_norm = y;
}

/// Bias-corrected Adam moments with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: Weights,
    v: Weights,
    t: u64,
}

impl AdamW {
    pub fn new(like: &Weights) -> AdamW {
        AdamW {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, w: &mut Weights, g: &Weights, lr: f64, cfg: &TrainingConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let grads = g.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in w.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * (mh / (vh.sqrt() + cfg.eps) + cfg.weight_decay * p[i]);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Total loss per step.
    pub losses: Vec<f64>,
    pub last: LossBreakdown,
    pub steps: usize,
}

/// Loss and gradients for one batch.
pub fn batch_gradients(
    params: &ModelParameters,
    ds: &Dataset,
    idx: &[usize],
    cfg: &TrainingConfig,
) -> Result<(LossBreakdown, Weights)> {
    let (input, y, cur) = ds.batch(idx);
    let fwd = forward_batch(params, &input)?;
    let (loss, dy) = loss_and_grad(
        fwd.y.view(),
        y.view(),
        cur.view(),
        &params.config.layout,
        &params.config.foot_joints,
        cfg,
    )?;
    let grad = backward(params, &input, &fwd, &dy)?;
    Ok((loss, grad))
}

/// Loss of one batch without gradients.
pub fn batch_loss(
    params: &ModelParameters,
    ds: &Dataset,
    idx: &[usize],
    cfg: &TrainingConfig,
) -> Result<LossBreakdown> {
    let (input, y, cur) = ds.batch(idx);
    let fwd = forward_batch(params, &input)?;
    Ok(loss_and_grad(
        fwd.y.view(),
        y.view(),
        cur.view(),
        &params.config.layout,
        &params.config.foot_joints,
        cfg,
    )?
    .0)
}

/// Continues training `params` in place. `on_step` sees each step's loss.
pub fn train_in_place(
    params: &mut ModelParameters,
    ds: &Dataset,
    cfg: &TrainingConfig,
    mut on_step: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainReport> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ds.layout != params.config.layout {
        return Err(Error::ShapeMismatch("dataset layout differs from model".into()));
    }
    let total = cfg.total_steps(ds.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(&params.weights);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(total);
    let mut last = LossBreakdown::default();
    for step in 0..total {
        let bs = cfg.batch_size.min(ds.len());
        if cursor + bs > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + bs];
        cursor += bs;
        let (loss, grad) = batch_gradients(params, ds, idx, cfg)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!("{loss:?}"),
            });
        }
        opt.step(&mut params.weights, &grad, cfg.lr_at(step, total), cfg);
        on_step(step, &loss);
        losses.push(loss.total);
        last = loss;
    }
    Ok(TrainReport {
        losses,
        last,
        steps: total,
    })
}

/// Fresh model fitted to `ds`.
pub fn train(
    ds: &Dataset,
    model: &ModelConfig,
    cfg: &TrainingConfig,
) -> Result<(ModelParameters, TrainReport)> {
    let mut params = ModelParameters::init(model, cfg.seed)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    fit_normalizers(&mut params, ds, cfg.min_std);
    let report = train_in_place(&mut params, ds, cfg, |_, _| {})?;
    Ok((params, report))
}
