//! Motion in-betweening with a conditional mixture-of-experts pose predictor
//! and trajectory-gallery guidance.

pub mod container;
pub mod dcmoe;
pub mod error;
pub mod features;
pub mod gallery;
pub mod metrics;
pub mod motion;
pub mod rotmath;

pub use error::{Error, Result};
