//! Shared fixtures for the benchmarks.

use inbetween_core::dcmoe::{build_dataset, fit_normalizers, Dataset, ModelConfig, ModelParameters, TrainingConfig};
use inbetween_core::gallery::{GalleryConfig, GalleryIndex};
use inbetween_core::motion::{synthetic_corpus, CorpusSpec, MotionClip};

/// Derived synthetic clips, three styles.
pub fn corpus(minutes: f64) -> Vec<MotionClip> {
    let spec = CorpusSpec {
        styles: 3,
        minutes,
        seed: 11,
        ..CorpusSpec::default()
    };
    let mut clips = synthetic_corpus(&spec).expect("valid corpus spec");
    for c in &mut clips {
        c.derive().expect("synthetic clips are well formed");
    }
    clips
}

pub fn gallery(clips: &[MotionClip]) -> GalleryIndex {
    GalleryIndex::build(clips, GalleryConfig::default()).expect("default gallery config")
}

/// Untrained parameters with normalizers fitted to `clips`.
pub fn model(config: &ModelConfig, clips: &[MotionClip]) -> (ModelParameters, Dataset) {
    let cfg = TrainingConfig::default();
    let ds = build_dataset(clips, &cfg).expect("dataset");
    let mut params = ModelParameters::init(config, 1).expect("valid model config");
    fit_normalizers(&mut params, &ds, cfg.min_std);
    (params, ds)
}
