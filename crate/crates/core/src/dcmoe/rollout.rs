//! Autoregressive generation toward a target pose along a guidance path.

use super::network::{moe_forward, ModelParameters};
use crate::error::{Error, Result};
use crate::features::{
    sixd_rotation, Condition, JointState, PhaseFrame, PoseState, RootFrame, PHASE_CHANNELS,
    TargetJoint, TrajectorySample, WINDOW, WINDOW_CENTER, WINDOW_STEP,
};
use crate::motion::{MotionClip, Skeleton};
use crate::rotmath::{ground_facing, quat_to_sixd, Quat, SixD, Vec2, Vec3};

pub const MIN_TTA: usize = 15;
pub const MAX_TTA: usize = 150;
/// History frames kept from the source clip (one window's past half).
const HISTORY: usize = WINDOW_CENTER * WINDOW_STEP + 1;

/// World-space pose of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Quat>,
    pub velocities: Vec<Vec3>,
}

impl FrameState {
    pub fn from_clip(clip: &MotionClip, frame: usize) -> Result<FrameState> {
        if clip.world.is_none() || clip.velocities.is_none() {
            return Err(Error::MissingCache("forward kinematics"));
        }
        if frame >= clip.num_frames() {
            return Err(Error::IndexOutOfRange {
                index: frame,
                len: clip.num_frames(),
            });
        }
        Ok(FrameState {
            positions: clip.world_positions(frame).to_vec(),
            rotations: clip.world_rotations(frame).to_vec(),
            velocities: clip.joint_velocities(frame).to_vec(),
        })
    }

    fn root_sample(&self) -> RootSample {
        RootSample {
            pos: self.positions[0].ground(),
            vel: self.velocities[0].ground(),
            dir: ground_facing(self.rotations[0]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RootSample {
    pos: Vec2,
    vel: Vec2,
    dir: Vec2,
}

/// Context the rollout starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStart {
    pub skeleton: Skeleton,
    pub style: usize,
    /// Oldest first; the last entry is the start frame.
    pub history: Vec<FrameState>,
    /// One per history frame.
    pub phases: Vec<PhaseFrame>,
    /// Phase values for the future window slots at the start frame.
    pub future_phases: Vec<PhaseFrame>,
}

impl RolloutStart {
    /// Start at `frame` of a clip with kinematic and phase caches.
    pub fn from_clip(clip: &MotionClip, frame: usize) -> Result<RolloutStart> {
        let phases = clip.phases.as_ref().ok_or(Error::MissingCache("phase"))?;
        let first = (frame + 1).saturating_sub(HISTORY);
        let history = (first..=frame)
            .map(|f| FrameState::from_clip(clip, f))
            .collect::<Result<Vec<_>>>()?;
        let last = clip.num_frames() - 1;
        Ok(RolloutStart {
            skeleton: clip.skeleton.clone(),
            style: clip.style,
            history,
            phases: phases[first..=frame].to_vec(),
            future_phases: (1..=WINDOW_CENTER)
                .map(|i| phases[(frame + i * WINDOW_STEP).min(last)].clone())
                .collect(),
        })
    }

    /// Start from a single standing pose with no motion history.
    pub fn from_pose(skeleton: &Skeleton, style: usize, root: Vec3, local: &[Quat]) -> Result<RolloutStart> {
        let frame = single_frame(skeleton, root, local)?;
        let zero = PhaseFrame::zeros(PHASE_CHANNELS);
        Ok(RolloutStart {
            skeleton: skeleton.clone(),
            style,
            history: vec![frame],
            phases: vec![zero.clone()],
            future_phases: vec![zero; WINDOW - WINDOW_CENTER - 1],
        })
    }
}

/// World transforms of one pose given by its root position and local rotations.
fn single_frame(skeleton: &Skeleton, root: Vec3, local: &[Quat]) -> Result<FrameState> {
    if local.len() != skeleton.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rotations for {} joints",
            local.len(),
            skeleton.len()
        )));
    }
    if !root.is_finite() || local.iter().any(|q| !q.is_finite() || q.norm() < 1e-6) {
        return Err(Error::InvalidSpec("pose has non-finite or zero rotations".into()));
    }
    let rots: Vec<Quat> = local.iter().map(|q| q.normalized()).collect();
    let clip = MotionClip::new(skeleton.clone(), crate::motion::FRAME_TIME, vec![root], rots, 0)?;
    let (positions, rotations) = clip.forward_kinematics(0)?;
    Ok(FrameState {
        velocities: vec![Vec3::ZERO; positions.len()],
        positions,
        rotations,
    })
}

/// Target pose in world space; `mask[j]` hides joint `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPose {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Quat>,
    pub mask: Vec<bool>,
}

impl TargetPose {
    pub fn from_clip(clip: &MotionClip, frame: usize) -> Result<TargetPose> {
        let s = FrameState::from_clip(clip, frame)?;
        Ok(TargetPose {
            mask: vec![false; s.positions.len()],
            positions: s.positions,
            rotations: s.rotations,
        })
    }

    pub fn from_local(skeleton: &Skeleton, root: Vec3, local: &[Quat]) -> Result<TargetPose> {
        let s = single_frame(skeleton, root, local)?;
        Ok(TargetPose {
            mask: vec![false; s.positions.len()],
            positions: s.positions,
            rotations: s.rotations,
        })
    }
}

/// Root path per frame: entry 0 is the start frame, the last entry the target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Guidance {
    pub points: Vec<Vec2>,
    pub facings: Vec<Vec2>,
}

impl Guidance {
    pub fn from_clip(clip: &MotionClip, start: usize, end: usize) -> Result<Guidance> {
        if clip.world.is_none() {
            return Err(Error::MissingCache("forward kinematics"));
        }
        if end >= clip.num_frames() || start > end {
            return Err(Error::IndexOutOfRange {
                index: end,
                len: clip.num_frames(),
            });
        }
        Ok(Guidance {
            points: (start..=end)
                .map(|f| clip.world_positions(f)[0].ground())
                .collect(),
            facings: (start..=end)
                .map(|f| ground_facing(clip.world_rotations(f)[0]))
                .collect(),
        })
    }

    /// Frames to generate.
    pub fn tta(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    /// Sample `g` frames after the start; extrapolated at constant velocity
    /// past the end.
    fn sample(&self, g: usize, dt: f64) -> RootSample {
        let n = self.tta();
        let step = self.points[n] - self.points[n - 1];
        if g > n {
            return RootSample {
                pos: self.points[n] + step.scale((g - n) as f64),
                vel: step.scale(1.0 / dt),
                dir: self.facings[n],
            };
        }
        let prev = if g == 0 { 1 } else { g };
        RootSample {
            pos: self.points[g],
            vel: (self.points[prev] - self.points[prev - 1]).scale(1.0 / dt),
            dir: self.facings[g],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutput {
    /// Exactly `tta0` generated frames.
    pub clip: MotionClip,
    /// Predicted world joint positions per generated frame.
    pub positions: Vec<Vec<Vec3>>,
}

fn check(start: &RolloutStart, target: &TargetPose, guidance: &Guidance, params: &ModelParameters) -> Result<usize> {
    let tta0 = guidance.tta();
    if guidance.points.len() != guidance.facings.len() {
        return Err(Error::ShapeMismatch("guidance points and facings differ".into()));
    }
    if tta0 < MIN_TTA {
        return Err(Error::GuidanceTooShort(format!(
            "{tta0} frames of guidance, at least {MIN_TTA} needed"
        )));
    }
    if tta0 > MAX_TTA {
        return Err(Error::InvalidSpec(format!(
            "{tta0} frames of guidance exceed {MAX_TTA}"
        )));
    }
    let nj = params.config.layout.joints;
    if start.history.is_empty() || start.phases.len() != start.history.len() {
        return Err(Error::ShapeMismatch("start history and phases differ".into()));
    }
    if start.future_phases.len() != WINDOW - WINDOW_CENTER - 1 {
        return Err(Error::ShapeMismatch("future phase slots".into()));
    }
    if start.skeleton.len() != nj
        || target.positions.len() != nj
        || target.rotations.len() != nj
        || target.mask.len() != nj
        || start.history.iter().any(|h| h.positions.len() != nj)
    {
        return Err(Error::ShapeMismatch("joint count differs from model".into()));
    }
    if start.style >= params.config.n_styles {
        return Err(Error::UnknownStyle {
            id: start.style,
            count: params.config.n_styles,
        });
    }
    Ok(tta0)
}

pub fn rollout(
    start: &RolloutStart,
    target: &TargetPose,
    guidance: &Guidance,
    params: &ModelParameters,
) -> Result<MotionClip> {
    Ok(rollout_detailed(start, target, guidance, params)?.clip)
}

pub fn rollout_detailed(
    start: &RolloutStart,
    target: &TargetPose,
    guidance: &Guidance,
    params: &ModelParameters,
) -> Result<RolloutOutput> {
    let tta0 = check(start, target, guidance, params)?;
    let dt = crate::motion::FRAME_TIME;
    let nj = params.config.layout.joints;
    let mut roots: Vec<RootSample> = start.history.iter().map(FrameState::root_sample).collect();
    let mut phases = start.phases.clone();
    let mut future = start.future_phases.clone();
    let mut state = start.history.last().expect("checked").clone();
    let base = roots.len() - 1;

    let mut out_roots = Vec::with_capacity(tta0);
    let mut out_rots = Vec::with_capacity(tta0 * nj);
    let mut positions = Vec::with_capacity(tta0);
    for s in 0..tta0 {
        let cur = base + s;
        let rf = RootFrame::of(state.positions[0], state.rotations[0]);
        let current = (0..nj)
            .map(|j| JointState {
                pos: rf.point(state.positions[j]),
                vel: rf.dir(state.velocities[j]),
                rot: quat_to_sixd(rf.rot(state.rotations[j])),
            })
            .collect();
        let tgt = (0..nj)
            .map(|j| {
                if target.mask[j] {
                    TargetJoint {
                        pos: Vec3::ZERO,
                        rot: SixD {
                            a: Vec3::ZERO,
                            b: Vec3::ZERO,
                        },
                        present: false,
                    }
                } else {
                    TargetJoint {
                        pos: rf.point(target.positions[j]),
                        rot: quat_to_sixd(rf.rot(target.rotations[j])),
                        present: true,
                    }
                }
            })
            .collect();
        let mut trajectory = Vec::with_capacity(WINDOW);
        let mut window_phases = Vec::with_capacity(WINDOW);
        for i in 0..WINDOW {
            let (sample, phase) = if i <= WINDOW_CENTER {
                let back = (WINDOW_CENTER - i) * WINDOW_STEP;
                let idx = cur.saturating_sub(back);
                (roots[idx], phases[idx].clone())
            } else {
                let ahead = (i - WINDOW_CENTER) * WINDOW_STEP;
                (guidance.sample(s + ahead, dt), future[i - WINDOW_CENTER - 1].clone())
            };
            trajectory.push(TrajectorySample {
                pos: rf.point2(sample.pos),
                vel: rf.dir2(sample.vel),
                dir: rf.dir2(sample.dir),
            });
            window_phases.push(phase);
        }
        let x = PoseState {
            current,
            target: tgt,
            trajectory,
        };
        let cond = Condition {
            phases: window_phases,
            style: start.style,
            tta: tta0 - s,
        };
        let y = moe_forward(&x, &cond, params)?;
        if !y.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: s,
                detail: "rollout prediction is not finite".into(),
            });
        }
        state = FrameState {
            positions: y.pos.iter().map(|&p| rf.world_point(p)).collect(),
            rotations: y
                .rot
                .iter()
                .map(|&r| rf.world_rot(sixd_rotation(r)))
                .collect(),
            velocities: y.vel.iter().map(|&v| rf.world_dir(v)).collect(),
        };
        roots.push(state.root_sample());
        let decoded: Vec<PhaseFrame> = y.phases.iter().map(|p| PhaseFrame::from_encoded(p)).collect();
        phases.push(decoded[0].clone());
        future = decoded[1..].to_vec();

        let hips = state.positions[0];
        out_roots.push(hips - start.skeleton.joints()[0].offset);
        for j in 0..nj {
            let local = match start.skeleton.parent(j) {
                Some(p) => state.rotations[p].conjugate() * state.rotations[j],
                None => state.rotations[j],
            };
            out_rots.push(local.normalized());
        }
        positions.push(state.positions.clone());
    }
    let mut clip = MotionClip::new(
        start.skeleton.clone(),
        dt,
        out_roots,
        out_rots,
        start.style,
    )?;
    clip.compute_fk();
    Ok(RolloutOutput { clip, positions })
}
