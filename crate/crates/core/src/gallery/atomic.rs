//! Atomic root trajectories: extraction, error and alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::RootFrame;
use crate::motion::MotionClip;
use crate::rotmath::{angle2d, ground_facing, rotate2d, signed_angle2d, yaw_of, Vec2};

/// Root motion between two database frames, relative to its own start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicTrajectory {
    /// Start and end frame in the concatenated database.
    pub id: (usize, usize),
    pub o_s: Vec2,
    pub o_e: Vec2,
    pub v_p: Vec2,
    pub style: usize,
}

impl AtomicTrajectory {
    pub fn duration(&self) -> usize {
        self.id.1 - self.id.0
    }

    pub fn distance(&self) -> f64 {
        self.v_p.norm()
    }

    /// Rotated by `theta` (counter-clockwise in the ground plane).
    pub fn rotated(&self, theta: f64) -> AtomicTrajectory {
        AtomicTrajectory {
            o_s: rotate2d(self.o_s, theta),
            o_e: rotate2d(self.o_e, theta),
            v_p: rotate2d(self.v_p, theta),
            ..*self
        }
    }
}

/// Start and end facing plus displacement of a requested transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub o_s: Vec2,
    pub o_e: Vec2,
    pub v_p: Vec2,
    /// Restricts candidates to one style.
    #[serde(default)]
    pub style: Option<usize>,
}

impl Query {
    /// Normalizes the facings.
    pub fn new(o_s: Vec2, o_e: Vec2, v_p: Vec2) -> Result<Query> {
        Ok(Query {
            o_s: o_s.normalized()?,
            o_e: o_e.normalized()?,
            v_p,
            style: None,
        })
    }

    pub fn with_style(mut self, style: Option<usize>) -> Query {
        self.style = style;
        self
    }

    /// Query between two placed poses on the ground plane.
    pub fn between(start: Vec2, start_facing: Vec2, end: Vec2, end_facing: Vec2) -> Result<Query> {
        Query::new(start_facing, end_facing, end - start)
    }
}

/// Start-facing mismatch of the first trajectory plus end-facing mismatch
/// of the last, in radians.
pub fn error(chain: &[AtomicTrajectory], q: &Query) -> Result<f64> {
    let (first, last) = match (chain.first(), chain.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptySequence),
    };
    Ok(angle2d(first.o_s, q.o_s)? + angle2d(last.o_e, q.o_e)?)
}

/// Rotation angle taking `t.v_p` onto the direction of `target`.
pub fn align_angle(t: &AtomicTrajectory, target: Vec2) -> Result<f64> {
    if t.v_p.norm() < 1e-9 || target.norm() < 1e-9 {
        return Err(Error::ZeroDisplacement);
    }
    signed_angle2d(t.v_p, target)
}

pub fn rotate_align(t: &AtomicTrajectory, target: Vec2) -> Result<AtomicTrajectory> {
    Ok(t.rotated(align_angle(t, target)?))
}

/// Ground-plane root path of the whole database, one entry per frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RootTrack {
    pub positions: Vec<Vec2>,
    pub facings: Vec<Vec2>,
    /// First database frame of each source clip.
    pub clip_starts: Vec<usize>,
    /// Style id per source clip.
    pub clip_styles: Vec<usize>,
}

impl RootTrack {
    pub fn frames(&self) -> usize {
        self.positions.len()
    }

    /// Points `t_s..=t_e` relative to the start frame.
    pub fn relative_path(&self, t: &AtomicTrajectory) -> (Vec<Vec2>, Vec<Vec2>) {
        let (s, e) = t.id;
        let rf = RootFrame::new(self.positions[s], yaw_of(self.facings[s]));
        (
            (s..=e).map(|f| rf.point2(self.positions[f])).collect(),
            (s..=e).map(|f| rf.dir2(self.facings[f])).collect(),
        )
    }
}

/// Extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GalleryConfig {
    /// Window lengths in frames, each within `[15, 150]`.
    pub durations: Vec<usize>,
    /// Frames between consecutive window starts.
    pub stride: usize,
    /// Width of the distance bins in meters.
    pub bin_width: f64,
}

impl Default for GalleryConfig {
    fn default() -> Self {
        GalleryConfig {
            durations: (1..=10).map(|i| 15 * i).collect(),
            stride: 5,
            bin_width: 0.05,
        }
    }
}

impl GalleryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.durations.is_empty() || self.durations.iter().any(|d| !(15..=150).contains(d)) {
            return Err(Error::InvalidSpec("window durations must lie in [15, 150]".into()));
        }
        if self.stride == 0 || !(self.bin_width > 0.0) {
            return Err(Error::InvalidSpec("stride and bin width must be positive".into()));
        }
        Ok(())
    }
}

/// Root track of the concatenated clips and every sliding-window trajectory.
pub fn extract_atomics(
    clips: &[MotionClip],
    cfg: &GalleryConfig,
) -> Result<(Vec<AtomicTrajectory>, RootTrack)> {
    cfg.validate()?;
    let mut track = RootTrack::default();
    for clip in clips {
        if clip.world.is_none() {
            return Err(Error::MissingCache("forward kinematics"));
        }
        track.clip_starts.push(track.frames());
        track.clip_styles.push(clip.style);
        for f in 0..clip.num_frames() {
            track.positions.push(clip.world_positions(f)[0].ground());
            track.facings.push(ground_facing(clip.world_rotations(f)[0]));
        }
    }
    let mut out = Vec::new();
    for (c, clip) in clips.iter().enumerate() {
        let base = track.clip_starts[c];
        let frames = clip.num_frames();
        for &d in &cfg.durations {
            let mut s = 0;
            while s + d < frames {
                let (gs, ge) = (base + s, base + s + d);
                let rf = RootFrame::new(track.positions[gs], yaw_of(track.facings[gs]));
                out.push(AtomicTrajectory {
                    id: (gs, ge),
                    o_s: rf.dir2(track.facings[gs]),
                    o_e: rf.dir2(track.facings[ge]),
                    v_p: rf.point2(track.positions[ge]),
                    style: clip.style,
                });
                s += cfg.stride;
            }
        }
    }
    Ok((out, track))
}
