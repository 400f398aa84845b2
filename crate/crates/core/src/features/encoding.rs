use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TTA_DIM: usize = 128;

/// Sinusoidal time-to-arrive embedding: `z[2i] = sin(tta / 10000^(2i/d))`,
/// `z[2i+1] = cos(...)` for `i < d/2`.
pub fn encode_tta(tta: f64, dim: usize) -> Result<Vec<f64>> {
    if !dim.is_multiple_of(2) {
        return Err(Error::OddDimension(dim));
    }
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let denom = 10000f64.powf(2.0 * i as f64 / dim as f64);
        let (s, c) = (tta / denom).sin_cos();
        out.push(s);
        out.push(c);
    }
    Ok(out)
}

/// Row `id` of a row-major `rows x width` embedding table.
pub fn style_embed(id: usize, table: &[f64], width: usize) -> Result<&[f64]> {
    let rows = if width == 0 { 0 } else { table.len() / width };
    if id >= rows {
        return Err(Error::UnknownStyle { id, count: rows });
    }
    Ok(&table[id * width..(id + 1) * width])
}

/// Per-dimension standardization with a floored standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Normalizer {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits over row vectors; dimensions whose spread is below `min_std`
    /// keep `min_std` as their scale.
    pub fn fit<'a, I>(rows: I, dim: usize, min_std: f64) -> Normalizer
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            n += 1;
            for k in 0..dim {
                let d = row[k] - mean[k];
                mean[k] += d / n as f64;
                m2[k] += d * (row[k] - mean[k]);
            }
        }
        let std = m2
            .iter()
            .map(|&s| {
                let v = if n > 0 { s / n as f64 } else { 0.0 };
                v.sqrt().max(min_std)
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}
