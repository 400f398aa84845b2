//! Weight files: named little-endian f32 arrays plus JSON metadata.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::json;

use super::config::ModelConfig;
use super::network::{Linear, Mlp, ModelParameters, Weights};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::features::Normalizer;

pub const KIND: &str = "dcmoe-weights";
pub const VERSION: u32 = 1;

fn push_mlp(c: &mut Container, prefix: &str, m: &Mlp) {
    for (i, l) in m.layers.iter().enumerate() {
        let (o, n) = l.w.dim();
        c.push_f64(&format!("{prefix}/l{i}/w"), &[o, n], l.w.as_slice().expect("standard"));
        c.push_f64(&format!("{prefix}/l{i}/b"), &[o], l.b.as_slice().expect("standard"));
    }
}

fn read_mlp(c: &Container, prefix: &str, widths: &[usize]) -> Result<Mlp> {
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (inp, out) = (w[0], w[1]);
            Ok(Linear {
                w: Array2::from_shape_vec(
                    (out, inp),
                    c.f64s(&format!("{prefix}/l{i}/w"), &[out, inp])?,
                )
                .expect("shape checked"),
                b: Array1::from(c.f64s(&format!("{prefix}/l{i}/b"), &[out])?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mlp { layers })
}

fn push_norm(c: &mut Container, name: &str, n: &Normalizer) {
    c.push_f64(&format!("norm/{name}/mean"), &[n.dim()], &n.mean);
    c.push_f64(&format!("norm/{name}/std"), &[n.dim()], &n.std);
}

fn read_norm(c: &Container, name: &str, dim: usize) -> Result<Normalizer> {
    Ok(Normalizer {
        mean: c.f64s(&format!("norm/{name}/mean"), &[dim])?,
        std: c.f64s(&format!("norm/{name}/std"), &[dim])?,
    })
}

/// `extra` is stored verbatim under `metadata.extra` (e.g. a training config echo).
pub fn to_container(params: &ModelParameters, extra: serde_json::Value) -> Container {
    let cfg = &params.config;
    let mut c = Container::new(
        KIND,
        json!({
            "version": VERSION,
            "experts": cfg.experts,
            "n_styles": cfg.n_styles,
            "tta_dim": cfg.tta_dim,
            "config": cfg,
            "extra": extra,
        }),
    );
    for (k, e) in params.weights.experts.iter().enumerate() {
        push_mlp(&mut c, &format!("expert{k}"), e);
    }
    push_mlp(&mut c, "gating", &params.weights.gating);
    let (n, d) = params.weights.style.dim();
    c.push_f64("style", &[n, d], params.weights.style.as_slice().expect("standard"));
    push_norm(&mut c, "x", &params.x_norm);
    push_norm(&mut c, "phase", &params.phase_norm);
    push_norm(&mut c, "y", &params.y_norm);
    c
}

pub fn from_container(c: &Container) -> Result<ModelParameters> {
    let version = c.metadata.get("version").and_then(|v| v.as_u64());
    if version != Some(VERSION as u64) {
        return Err(Error::Format(format!("unsupported weights version {version:?}")));
    }
    let cfg: ModelConfig = serde_json::from_value(
        c.metadata
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Format("missing model config".into()))?,
    )?;
    cfg.validate()?;
    let l = &cfg.layout;
    let h = cfg.expert_hidden;
    let experts = (0..cfg.experts)
        .map(|k| read_mlp(c, &format!("expert{k}"), &[l.x_dim(), h, h, l.y_dim()]))
        .collect::<Result<Vec<_>>>()?;
    let mut widths = vec![cfg.gating_input()];
    widths.extend(&cfg.gating_hidden);
    widths.push(cfg.experts);
    let gating = read_mlp(c, "gating", &widths)?;
    let style = Array2::from_shape_vec(
        (cfg.n_styles, cfg.style_dim),
        c.f64s("style", &[cfg.n_styles, cfg.style_dim])?,
    )
    .expect("shape checked");
    let params = ModelParameters {
        x_norm: read_norm(c, "x", l.x_dim())?,
        phase_norm: read_norm(c, "phase", l.phase_dim())?,
        y_norm: read_norm(c, "y", l.y_dim())?,
        weights: Weights {
            experts,
            gating,
            style,
        },
        config: cfg,
    };
    if !params.weights.is_finite() {
        return Err(Error::Format("weights contain non-finite values".into()));
    }
    Ok(params)
}

pub fn save(path: &Path, params: &ModelParameters, extra: serde_json::Value) -> Result<()> {
    to_container(params, extra).save(path)
}

pub fn load(path: &Path) -> Result<ModelParameters> {
    from_container(&Container::load(path)?.expect_kind(KIND)?)
}

/// Rounds every stored value through f32, matching a save/load cycle.
pub fn quantize(params: &ModelParameters) -> ModelParameters {
    let mut p = params.clone();
    for t in p.weights.tensors_mut() {
        for v in t {
            *v = *v as f32 as f64;
        }
    }
    for n in [&mut p.x_norm, &mut p.phase_norm, &mut p.y_norm] {
        for v in n.mean.iter_mut().chain(n.std.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }
    p
}
