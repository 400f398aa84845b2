//! Expert inputs, gating conditions and their encodings.

mod encoding;
mod phase;
mod pose;

pub use encoding::{encode_tta, style_embed, Normalizer, DEFAULT_TTA_DIM};
pub use phase::{
    dominant_frequency, encode_phase, extract_phase_proxy, PhaseFrame, PHASE_CHANNELS, PHASE_DIM,
    PHASE_JOINTS,
};
pub use pose::{
    assemble, ground_truth, root_frame_at, sixd_rotation, trajectory_sample, window_frame,
    Condition, FeatureLayout, JointState, OutputState, PoseState, RootFrame, TargetJoint,
    TrajectorySample, FUTURE, MAX_TARGET_GAP, WINDOW, WINDOW_CENTER, WINDOW_STEP,
};
