//! Trajectory gallery: atomic root trajectories, error-bounded chain search
//! and duration labels.

mod atomic;
mod cluster;
mod index;
pub mod io;
mod search;

pub use atomic::{
    align_angle, error, extract_atomics, rotate_align, AtomicTrajectory, GalleryConfig, Query,
    RootTrack,
};
pub use cluster::{cluster_durations, Clustering, DurationLabel};
pub use index::{bin_key, GalleryIndex, KthBest, Scored};
pub use search::{
    candidates, chain_guidance, chain_path, place_chain, polyline_deviation, starting_error, subtract, tcs,
    Candidate, Placed, SearchConfig, SearchResult, Selection,
};
