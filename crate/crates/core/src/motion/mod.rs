//! Skeletons, clips, BVH interchange and the synthetic motion generator.

pub mod bvh;
pub mod cache;
mod clip;
mod skeleton;
pub mod synth;

pub use bvh::{parse_bvh, write_bvh};
pub use clip::{ContactTrack, FootConfig, MotionClip, WorldPose, FRAME_TIME};
pub use skeleton::{Axis, Joint, Skeleton, LAFAN_JOINTS};
pub use synth::{
    generate_synthetic_clip, synthetic_corpus, CorpusSpec, SyntheticClip, SyntheticStyleSpec,
    STYLE_NAMES,
};
