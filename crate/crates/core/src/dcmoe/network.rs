//! Expert bank, gating network and the blended forward/backward passes.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::features::{encode_tta, Condition, Normalizer, OutputState, PoseState};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Fully connected layer; `w` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn zeros(out: usize, inp: usize) -> Linear {
        Linear {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }

    /// Uniform in `±sqrt(gain / fan_in)`, zero bias.
    fn init(out: usize, inp: usize, gain: f64, rng: &mut ChaCha8Rng) -> Linear {
        let bound = (gain / inp as f64).sqrt();
        let w = Array2::from_shape_simple_fn((out, inp), || rng.random_range(-bound..=bound));
        Linear {
            w,
            b: Array1::zeros(out),
        }
    }

    fn apply(&self, a: ArrayView2<f64>) -> Array2<f64> {
        a.dot(&self.w.t()) + &self.b
    }
}

/// SiLU after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

struct MlpTrace {
    /// Input of each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    fn init(widths: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { 3.0 } else { 6.0 };
                Linear::init(widths[i + 1], widths[i], gain, rng)
            })
            .collect();
        Mlp { layers }
    }

    fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.w.nrows(), l.w.ncols()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").w.nrows()
    }

    fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpTrace) {
        let mut trace = MlpTrace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len() - 1),
        };
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(a.view());
            trace.inputs.push(a);
            if i == last {
                return (z, trace);
            }
            a = z.mapv(silu);
            trace.pre.push(z);
        }
        unreachable!("mlp has at least one layer")
    }

    fn forward_only(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = self.layers[0].apply(x);
        for layer in &self.layers[1..] {
            a.mapv_inplace(silu);
            a = layer.apply(a.view());
        }
        a
    }

    /// Accumulates parameter gradients into `grad`, returns the input gradient.
    fn backward(&self, trace: &MlpTrace, d_out: Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let mut dz = d_out;
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                let z = &trace.pre[i];
                ndarray::Zip::from(&mut dz).and(z).for_each(|d, &z| *d *= silu_grad(z));
            }
            let g = &mut grad.layers[i];
            g.w += &dz.t().dot(&trace.inputs[i]);
            g.b += &dz.sum_axis(Axis(0));
            dz = dz.dot(&self.layers[i].w);
        }
        dz
    }

    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.w.as_slice().expect("standard layout"),
                    l.b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.w.as_slice_mut().expect("standard layout"),
                    l.b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub experts: Vec<Mlp>,
    pub gating: Mlp,
    /// `n_styles x style_dim`.
    pub style: Array2<f64>,
}

impl Weights {
    pub fn zeros_like(&self) -> Weights {
        Weights {
            experts: self.experts.iter().map(Mlp::zeros_like).collect(),
            gating: self.gating.zeros_like(),
            style: Array2::zeros(self.style.raw_dim()),
        }
    }

    /// Flat views in a fixed order: experts, gating, style table.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.experts.iter().flat_map(|e| e.tensors()).collect();
        out.extend(self.gating.tensors());
        out.push(self.style.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> =
            self.experts.iter_mut().flat_map(|e| e.tensors_mut()).collect();
        out.extend(self.gating.tensors_mut());
        out.push(self.style.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Weights, shape and the feature normalizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub weights: Weights,
    pub x_norm: Normalizer,
    pub phase_norm: Normalizer,
    pub y_norm: Normalizer,
}

impl ModelParameters {
    /// Fresh weights with identity normalizers.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<ModelParameters> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = &config.layout;
        let (xd, yd, h) = (l.x_dim(), l.y_dim(), config.expert_hidden);
        let experts = (0..config.experts)
            .map(|_| Mlp::init(&[xd, h, h, yd], &mut rng))
            .collect();
        let mut widths = vec![config.gating_input()];
        widths.extend(&config.gating_hidden);
        widths.push(config.experts);
        let gating = Mlp::init(&widths, &mut rng);
        let normal = Normal::new(0.0, 0.02).expect("valid");
        let style = Array2::from_shape_simple_fn((config.n_styles, config.style_dim), || {
            normal.sample(&mut rng)
        });
        Ok(ModelParameters {
            config: config.clone(),
            weights: Weights {
                experts,
                gating,
                style,
            },
            x_norm: Normalizer::identity(xd),
            phase_norm: Normalizer::identity(l.phase_dim()),
            y_norm: Normalizer::identity(yd),
        })
    }
}

/// Raw (unnormalized) inputs for a batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchInput {
    pub x: Array2<f64>,
    pub phase: Array2<f64>,
    pub style: Vec<usize>,
    pub tta: Vec<f64>,
}

impl BatchInput {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_states(params: &ModelParameters, items: &[(&PoseState, &Condition)]) -> Result<BatchInput> {
        let l = &params.config.layout;
        let mut x = Array2::zeros((items.len(), l.x_dim()));
        let mut phase = Array2::zeros((items.len(), l.phase_dim()));
        for (i, (ps, c)) in items.iter().enumerate() {
            let xv = ps.to_vector();
            let pv = c.phase_vector();
            if xv.len() != l.x_dim() || pv.len() != l.phase_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "input widths {}/{} vs model {}/{}",
                    xv.len(),
                    pv.len(),
                    l.x_dim(),
                    l.phase_dim()
                )));
            }
            x.row_mut(i).assign(&Array1::from(xv));
            phase.row_mut(i).assign(&Array1::from(pv));
        }
        Ok(BatchInput {
            x,
            phase,
            style: items.iter().map(|(_, c)| c.style).collect(),
            tta: items.iter().map(|(_, c)| c.tta as f64).collect(),
        })
    }

    fn check(&self, params: &ModelParameters) -> Result<()> {
        let l = &params.config.layout;
        let b = self.x.nrows();
        if self.x.ncols() != l.x_dim()
            || self.phase.ncols() != l.phase_dim()
            || self.phase.nrows() != b
            || self.style.len() != b
            || self.tta.len() != b
        {
            return Err(Error::ShapeMismatch("batch input does not match model".into()));
        }
        if let Some(&id) = self.style.iter().find(|&&s| s >= params.config.n_styles) {
            return Err(Error::UnknownStyle {
                id,
                count: params.config.n_styles,
            });
        }
        Ok(())
    }
}

fn normalize_rows(m: &Array2<f64>, n: &Normalizer) -> Array2<f64> {
    let mean = ArrayView2::from_shape((1, n.dim()), &n.mean).expect("row");
    let std = ArrayView2::from_shape((1, n.dim()), &n.std).expect("row");
    (m - &mean) / std
}

fn gating_input(params: &ModelParameters, input: &BatchInput) -> Result<Array2<f64>> {
    let c = &params.config;
    let p = c.layout.phase_dim();
    let mut g = Array2::zeros((input.len(), c.gating_input()));
    g.slice_mut(s![.., ..p])
        .assign(&normalize_rows(&input.phase, &params.phase_norm));
    for (i, (&st, &tta)) in input.style.iter().zip(&input.tta).enumerate() {
        g.slice_mut(s![i, p..p + c.style_dim])
            .assign(&params.weights.style.row(st));
        let enc = encode_tta(tta, c.tta_dim)?;
        g.slice_mut(s![i, p + c.style_dim..])
            .assign(&Array1::from(enc));
    }
    Ok(g)
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

/// Normalized network output to physical units; contact logits pass through a sigmoid.
fn to_physical(params: &ModelParameters, yn: &Array2<f64>) -> Array2<f64> {
    let mut y = normalize_inverse(yn, &params.y_norm);
    let contacts = params.config.layout.y_contacts();
    y.slice_mut(s![.., contacts]).mapv_inplace(sigmoid);
    y
}

fn normalize_inverse(m: &Array2<f64>, n: &Normalizer) -> Array2<f64> {
    let mean = ArrayView2::from_shape((1, n.dim()), &n.mean).expect("row");
    let std = ArrayView2::from_shape((1, n.dim()), &n.std).expect("row");
    m * &std + mean
}

/// Recorded forward pass.
pub struct Forward {
    /// Physical-unit outputs, `B x Y`.
    pub y: Array2<f64>,
    /// Blend weights, `B x K`.
    pub omega: Array2<f64>,
    expert_out: Vec<Array2<f64>>,
    expert_traces: Vec<MlpTrace>,
    gating_trace: MlpTrace,
}

pub fn forward_batch(params: &ModelParameters, input: &BatchInput) -> Result<Forward> {
    input.check(params)?;
    let xn = normalize_rows(&input.x, &params.x_norm);
    let g = gating_input(params, input)?;
    let (mut omega, gating_trace) = params.weights.gating.forward(g.view());
    softmax_rows(&mut omega);
    let mut yn = Array2::zeros((input.len(), params.config.layout.y_dim()));
    let mut expert_out = Vec::with_capacity(params.config.experts);
    let mut expert_traces = Vec::with_capacity(params.config.experts);
    for (k, e) in params.weights.experts.iter().enumerate() {
        let (yk, tr) = e.forward(xn.view());
        let w = omega.column(k).insert_axis(Axis(1));
        yn += &(&yk * &w);
        expert_out.push(yk);
        expert_traces.push(tr);
    }
    Ok(Forward {
        y: to_physical(params, &yn),
        omega,
        expert_out,
        expert_traces,
        gating_trace,
    })
}

/// Inference without recording intermediates.
pub fn predict_batch(params: &ModelParameters, input: &BatchInput) -> Result<(Array2<f64>, Array2<f64>)> {
    input.check(params)?;
    let xn = normalize_rows(&input.x, &params.x_norm);
    let omega = gating_weights_batch(params, input)?;
    let mut yn = Array2::zeros((input.len(), params.config.layout.y_dim()));
    for (k, e) in params.weights.experts.iter().enumerate() {
        let yk = e.forward_only(xn.view());
        yn += &(&yk * &omega.column(k).insert_axis(Axis(1)));
    }
    Ok((to_physical(params, &yn), omega))
}

pub fn gating_weights_batch(params: &ModelParameters, input: &BatchInput) -> Result<Array2<f64>> {
    input.check(params)?;
    let g = gating_input(params, input)?;
    let mut omega = params.weights.gating.forward_only(g.view());
    softmax_rows(&mut omega);
    Ok(omega)
}

/// Exact gradients of a scalar loss given its gradient `dy` with respect to
/// the physical outputs of `fwd`.
pub fn backward(
    params: &ModelParameters,
    input: &BatchInput,
    fwd: &Forward,
    dy: &Array2<f64>,
) -> Result<Weights> {
    let c = &params.config;
    let l = &c.layout;
    let mut grad = params.weights.zeros_like();
    // Through the denormalization and the contact sigmoid.
    let std = ArrayView2::from_shape((1, l.y_dim()), &params.y_norm.std).expect("row");
    let mut dyn_ = dy * &std;
    let contacts = l.y_contacts();
    ndarray::Zip::from(dyn_.slice_mut(s![.., contacts.clone()]))
        .and(fwd.y.slice(s![.., contacts]))
        .for_each(|d, &p| *d *= p * (1.0 - p));

    let (b, k) = (input.len(), c.experts);
    let mut domega = Array2::zeros((b, k));
    for (e, ((yk, tr), expert)) in fwd
        .expert_out
        .iter()
        .zip(&fwd.expert_traces)
        .zip(&params.weights.experts)
        .enumerate()
    {
        domega
            .column_mut(e)
            .assign(&(&dyn_ * yk).sum_axis(Axis(1)));
        let dyk = &dyn_ * &fwd.omega.column(e).insert_axis(Axis(1));
        expert.backward(tr, dyk, &mut grad.experts[e]);
    }
    // Softmax Jacobian.
    let dot = (&domega * &fwd.omega).sum_axis(Axis(1)).insert_axis(Axis(1));
    let dlogits = &fwd.omega * &(&domega - &dot);
    let dg = params
        .weights
        .gating
        .backward(&fwd.gating_trace, dlogits, &mut grad.gating);
    let p = l.phase_dim();
    for (i, &st) in input.style.iter().enumerate() {
        let mut row = grad.style.row_mut(st);
        row += &dg.slice(s![i, p..p + c.style_dim]);
    }
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient("backward produced NaN or infinity".into()));
    }
    Ok(grad)
}

fn single(params: &ModelParameters, x: &PoseState, cond: &Condition) -> Result<BatchInput> {
    BatchInput::from_states(params, &[(x, cond)])
}

/// Softmax blend weights for one condition.
pub fn gating_forward(cond: &Condition, params: &ModelParameters) -> Result<Vec<f64>> {
    let l = &params.config.layout;
    let pv = cond.phase_vector();
    if pv.len() != l.phase_dim() {
        return Err(Error::ShapeMismatch(format!(
            "phase window has {} values, model needs {}",
            pv.len(),
            l.phase_dim()
        )));
    }
    let input = BatchInput {
        x: Array2::zeros((1, l.x_dim())),
        phase: Array2::from_shape_vec((1, pv.len()), pv).expect("row"),
        style: vec![cond.style],
        tta: vec![cond.tta as f64],
    };
    Ok(gating_weights_batch(params, &input)?.row(0).to_vec())
}

pub fn moe_forward(x: &PoseState, cond: &Condition, params: &ModelParameters) -> Result<OutputState> {
    let input = single(params, x, cond)?;
    let (y, _) = predict_batch(params, &input)?;
    OutputState::from_vector(&params.config.layout, y.row(0).as_slice().expect("row"))
}

/// Blend with caller-supplied weights instead of the gating network.
pub fn moe_forward_with_weights(
    x: &PoseState,
    omega: &[f64],
    params: &ModelParameters,
) -> Result<OutputState> {
    if omega.len() != params.config.experts {
        return Err(Error::ShapeMismatch(format!(
            "{} blend weights for {} experts",
            omega.len(),
            params.config.experts
        )));
    }
    let xv = x.to_vector();
    if xv.len() != params.config.layout.x_dim() {
        return Err(Error::ShapeMismatch("pose state width".into()));
    }
    let xr = Array2::from_shape_vec((1, xv.len()), xv).expect("row");
    let xn = normalize_rows(&xr, &params.x_norm);
    let mut yn = Array2::zeros((1, params.config.layout.y_dim()));
    for (e, &w) in params.weights.experts.iter().zip(omega) {
        yn.scaled_add(w, &e.forward_only(xn.view()));
    }
    OutputState::from_vector(
        &params.config.layout,
        to_physical(params, &yn).row(0).as_slice().expect("row"),
    )
}

/// Output of expert `k` alone.
pub fn expert_forward(x: &PoseState, k: usize, params: &ModelParameters) -> Result<OutputState> {
    let mut omega = vec![0.0; params.config.experts];
    *omega.get_mut(k).ok_or(Error::IndexOutOfRange {
        index: k,
        len: params.config.experts,
    })? = 1.0;
    moe_forward_with_weights(x, &omega, params)
}
