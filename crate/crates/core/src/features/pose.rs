//! Network-facing views of a clip: the expert input (current pose, target
//! pose, root trajectory window), the gating condition, and the output state.
//!
//! Everything is expressed in the *root frame* of the current frame: origin
//! at the hips projected onto the ground, +z along the hips' ground facing.

use serde::{Deserialize, Serialize};

use super::phase::{encode_phase, PhaseFrame, PHASE_DIM};
use crate::error::{Error, Result};
use crate::motion::{ContactTrack, MotionClip};
use crate::rotmath::{
    ground_facing, quat_to_sixd, sixd_to_quat, yaw_of, yaw_rotate2d, Quat, SixD, Vec2, Vec3,
};

/// Samples in the trajectory and phase windows; index 6 is the current frame.
pub const WINDOW: usize = 13;
pub const WINDOW_CENTER: usize = 6;
/// Frames between window samples (13 samples span 2 s at 30 fps).
pub const WINDOW_STEP: usize = 5;
/// Samples in the predicted future window, starting at the next frame.
pub const FUTURE: usize = 7;
/// Longest target horizon used when assembling training pairs.
pub const MAX_TARGET_GAP: usize = 90;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootFrame {
    pub origin: Vec2,
    pub yaw: f64,
}

impl RootFrame {
    pub fn new(origin: Vec2, yaw: f64) -> RootFrame {
        RootFrame { origin, yaw }
    }

    /// Root frame of a hips world transform.
    pub fn of(hips_pos: Vec3, hips_rot: Quat) -> RootFrame {
        RootFrame {
            origin: hips_pos.ground(),
            yaw: yaw_of(ground_facing(hips_rot)),
        }
    }

    pub fn point(&self, p: Vec3) -> Vec3 {
        let g = yaw_rotate2d(p.ground() - self.origin, -self.yaw);
        Vec3::new(g.x, p.y, g.y)
    }

    pub fn dir(&self, v: Vec3) -> Vec3 {
        Quat::from_yaw(-self.yaw).rotate(v)
    }

    pub fn rot(&self, q: Quat) -> Quat {
        Quat::from_yaw(-self.yaw) * q
    }

    pub fn point2(&self, p: Vec2) -> Vec2 {
        yaw_rotate2d(p - self.origin, -self.yaw)
    }

    pub fn dir2(&self, v: Vec2) -> Vec2 {
        yaw_rotate2d(v, -self.yaw)
    }

    pub fn world_point(&self, p: Vec3) -> Vec3 {
        let g = yaw_rotate2d(p.ground(), self.yaw) + self.origin;
        Vec3::new(g.x, p.y, g.y)
    }

    pub fn world_dir(&self, v: Vec3) -> Vec3 {
        Quat::from_yaw(self.yaw).rotate(v)
    }

    pub fn world_rot(&self, q: Quat) -> Quat {
        Quat::from_yaw(self.yaw) * q
    }

    pub fn world_point2(&self, p: Vec2) -> Vec2 {
        yaw_rotate2d(p, self.yaw) + self.origin
    }

    pub fn world_dir2(&self, v: Vec2) -> Vec2 {
        yaw_rotate2d(v, self.yaw)
    }
}

/// Sizes of the flattened feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub joints: usize,
    pub feet: usize,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        FeatureLayout { joints: 22, feet: 4 }
    }
}

impl FeatureLayout {
    /// Current (12/joint) + target (9/joint) + target mask (1/joint) + trajectory (6/sample).
    pub fn x_dim(&self) -> usize {
        self.joints * 22 + WINDOW * 6
    }

    /// Encoded phase window.
    pub fn phase_dim(&self) -> usize {
        WINDOW * PHASE_DIM
    }

    pub fn y_dim(&self) -> usize {
        self.joints * 12 + FUTURE * (self.feet + 4 + PHASE_DIM)
    }

    pub fn y_pos(&self) -> std::ops::Range<usize> {
        0..self.joints * 3
    }

    pub fn y_rot(&self) -> std::ops::Range<usize> {
        self.joints * 3..self.joints * 9
    }

    pub fn y_vel(&self) -> std::ops::Range<usize> {
        self.joints * 9..self.joints * 12
    }

    pub fn y_contacts(&self) -> std::ops::Range<usize> {
        let s = self.joints * 12;
        s..s + FUTURE * self.feet
    }

    pub fn y_traj(&self) -> std::ops::Range<usize> {
        let s = self.y_contacts().end;
        s..s + FUTURE * 4
    }

    pub fn y_phase(&self) -> std::ops::Range<usize> {
        let s = self.y_traj().end;
        s..s + FUTURE * PHASE_DIM
    }

    /// Offset of the current-position block of joint `j` in the input vector.
    pub fn x_current(&self, j: usize) -> usize {
        j * 12
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub pos: Vec3,
    pub vel: Vec3,
    pub rot: SixD,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetJoint {
    pub pos: Vec3,
    pub rot: SixD,
    pub present: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub pos: Vec2,
    pub vel: Vec2,
    pub dir: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseState {
    pub current: Vec<JointState>,
    pub target: Vec<TargetJoint>,
    pub trajectory: Vec<TrajectorySample>,
}

impl PoseState {
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.current.len() * 22 + WINDOW * 6);
        for c in &self.current {
            out.extend(c.pos.to_array());
            out.extend(c.vel.to_array());
            out.extend(c.rot.to_array());
        }
        for t in &self.target {
            out.extend(t.pos.to_array());
            out.extend(t.rot.to_array());
        }
        out.extend(self.target.iter().map(|t| if t.present { 1.0 } else { 0.0 }));
        for s in &self.trajectory {
            out.extend([s.pos.x, s.pos.y, s.vel.x, s.vel.y, s.dir.x, s.dir.y]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub phases: Vec<PhaseFrame>,
    pub style: usize,
    /// Frames remaining until the target, at least 1.
    pub tta: usize,
}

impl Condition {
    pub fn phase_vector(&self) -> Vec<f64> {
        self.phases.iter().flat_map(encode_phase).collect()
    }
}

/// Next-frame pose plus the predicted future window.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputState {
    pub pos: Vec<Vec3>,
    pub rot: Vec<SixD>,
    pub vel: Vec<Vec3>,
    /// `FUTURE x feet` contact probabilities (or labels).
    pub contacts: Vec<Vec<f64>>,
    /// `FUTURE` root samples: ground position and facing.
    pub traj: Vec<(Vec2, Vec2)>,
    /// `FUTURE` encoded phase frames.
    pub phases: Vec<Vec<f64>>,
}

impl OutputState {
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.pos.iter().flat_map(|p| p.to_array()));
        out.extend(self.rot.iter().flat_map(|r| r.to_array()));
        out.extend(self.vel.iter().flat_map(|v| v.to_array()));
        out.extend(self.contacts.iter().flatten());
        out.extend(self.traj.iter().flat_map(|(p, d)| [p.x, p.y, d.x, d.y]));
        out.extend(self.phases.iter().flatten());
        out
    }

    pub fn from_vector(layout: &FeatureLayout, y: &[f64]) -> Result<OutputState> {
        if y.len() != layout.y_dim() {
            return Err(Error::ShapeMismatch(format!(
                "output vector has {} values, layout needs {}",
                y.len(),
                layout.y_dim()
            )));
        }
        let v3 = |s: &[f64]| Vec3::new(s[0], s[1], s[2]);
        Ok(OutputState {
            pos: y[layout.y_pos()].chunks_exact(3).map(v3).collect(),
            rot: y[layout.y_rot()].chunks_exact(6).map(SixD::from_slice).collect(),
            vel: y[layout.y_vel()].chunks_exact(3).map(v3).collect(),
            contacts: y[layout.y_contacts()]
                .chunks_exact(layout.feet)
                .map(|c| c.to_vec())
                .collect(),
            traj: y[layout.y_traj()]
                .chunks_exact(4)
                .map(|c| (Vec2::new(c[0], c[1]), Vec2::new(c[2], c[3])))
                .collect(),
            phases: y[layout.y_phase()]
                .chunks_exact(PHASE_DIM)
                .map(|c| c.to_vec())
                .collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Window sample frame for window slot `i` around `frame`, clamped to `[0, frames)`.
pub fn window_frame(frame: usize, i: usize, frames: usize) -> usize {
    let off = (i as i64 - WINDOW_CENTER as i64) * WINDOW_STEP as i64;
    (frame as i64 + off).clamp(0, frames as i64 - 1) as usize
}

fn require_caches(clip: &MotionClip) -> Result<()> {
    if clip.world.is_none() {
        return Err(Error::MissingCache("forward kinematics"));
    }
    if clip.velocities.is_none() {
        return Err(Error::MissingCache("velocity"));
    }
    if clip.phases.is_none() {
        return Err(Error::MissingCache("phase"));
    }
    Ok(())
}

pub fn root_frame_at(clip: &MotionClip, frame: usize) -> RootFrame {
    RootFrame::of(clip.world_positions(frame)[0], clip.world_rotations(frame)[0])
}

/// Root trajectory sample of `frame` seen from `rf`.
pub fn trajectory_sample(clip: &MotionClip, rf: &RootFrame, frame: usize) -> TrajectorySample {
    let pos = clip.world_positions(frame)[0];
    let vel = clip.joint_velocities(frame)[0];
    let dir = ground_facing(clip.world_rotations(frame)[0]);
    TrajectorySample {
        pos: rf.point2(pos.ground()),
        vel: rf.dir2(vel.ground()),
        dir: rf.dir2(dir),
    }
}

/// Expert input and gating condition for predicting `frame + 1` toward `target`.
///
/// `masked[j]` hides joint `j` of the target pose (its entries become zero).
pub fn assemble(
    clip: &MotionClip,
    frame: usize,
    target: usize,
    masked: &[bool],
) -> Result<(PoseState, Condition)> {
    require_caches(clip)?;
    let frames = clip.num_frames();
    if target >= frames {
        return Err(Error::IndexOutOfRange {
            index: target,
            len: frames,
        });
    }
    if frame >= target || target - frame > MAX_TARGET_GAP {
        return Err(Error::IndexOutOfRange {
            index: frame,
            len: target,
        });
    }
    let nj = clip.num_joints();
    if masked.len() != nj {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries for {nj} joints",
            masked.len()
        )));
    }
    let rf = root_frame_at(clip, frame);
    let (pos, rot, vel) = (
        clip.world_positions(frame),
        clip.world_rotations(frame),
        clip.joint_velocities(frame),
    );
    let current = (0..nj)
        .map(|j| JointState {
            pos: rf.point(pos[j]),
            vel: rf.dir(vel[j]),
            rot: quat_to_sixd(rf.rot(rot[j])),
        })
        .collect();
    let (tpos, trot) = (clip.world_positions(target), clip.world_rotations(target));
    let target_joints = (0..nj)
        .map(|j| {
            if masked[j] {
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
                    pos: rf.point(tpos[j]),
                    rot: quat_to_sixd(rf.rot(trot[j])),
                    present: true,
                }
            }
        })
        .collect();
    let trajectory = (0..WINDOW)
        .map(|i| trajectory_sample(clip, &rf, window_frame(frame, i, frames)))
        .collect();
    let phases = clip.phases.as_ref().expect("checked");
    let phase_window = (0..WINDOW)
        .map(|i| phases[window_frame(frame, i, frames)].clone())
        .collect();
    Ok((
        PoseState {
            current,
            target: target_joints,
            trajectory,
        },
        Condition {
            phases: phase_window,
            style: clip.style,
            tta: target - frame,
        },
    ))
}

/// Ground-truth output for the transition `frame -> frame + 1`.
pub fn ground_truth(clip: &MotionClip, contacts: &ContactTrack, frame: usize) -> Result<OutputState> {
    require_caches(clip)?;
    let frames = clip.num_frames();
    if frame + 1 >= frames {
        return Err(Error::IndexOutOfRange {
            index: frame + 1,
            len: frames,
        });
    }
    let rf = root_frame_at(clip, frame);
    let next = frame + 1;
    let (pos, rot, vel) = (
        clip.world_positions(next),
        clip.world_rotations(next),
        clip.joint_velocities(next),
    );
    let future: Vec<usize> = (0..FUTURE)
        .map(|i| (next + i * WINDOW_STEP).min(frames - 1))
        .collect();
    let phases = clip.phases.as_ref().expect("checked");
    Ok(OutputState {
        pos: pos.iter().map(|&p| rf.point(p)).collect(),
        rot: rot.iter().map(|&q| quat_to_sixd(rf.rot(q))).collect(),
        vel: vel.iter().map(|&v| rf.dir(v)).collect(),
        contacts: future
            .iter()
            .map(|&f| {
                (0..contacts.feet())
                    .map(|k| if contacts.get(f, k) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect(),
        traj: future
            .iter()
            .map(|&f| {
                let s = trajectory_sample(clip, &rf, f);
                (s.pos, s.dir)
            })
            .collect(),
        phases: future.iter().map(|&f| encode_phase(&phases[f])).collect(),
    })
}

/// Rotation of a 6D prediction re-orthonormalized, falling back to identity
/// on degenerate input.
pub fn sixd_rotation(s: SixD) -> Quat {
    sixd_to_quat(s).unwrap_or(Quat::IDENTITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::extract_phase_proxy;
    use crate::motion::{generate_synthetic_clip, FootConfig, SyntheticStyleSpec};

    fn prepared(spec: SyntheticStyleSpec, seed: u64) -> MotionClip {
        let mut c = generate_synthetic_clip(&spec, 4.0, seed).unwrap().clip;
        c.derive().unwrap();
        c.phases = Some(extract_phase_proxy(&c).unwrap());
        c
    }

    #[test]
    fn layout_sizes() {
        let l = FeatureLayout::default();
        assert_eq!(l.x_dim(), 22 * 12 + 22 * 9 + 22 + 78);
        assert_eq!(l.y_dim(), 264 + 28 + 28 + 140);
        assert_eq!(l.y_phase().end, l.y_dim());
        assert_eq!(l.phase_dim(), 260);
    }

    #[test]
    fn tta_and_vector_sizes() {
        let c = prepared(SyntheticStyleSpec::walk(), 1);
        let (x, cond) = assemble(&c, 40, 41, &[false; 22]).unwrap();
        assert_eq!(cond.tta, 1);
        assert_eq!(cond.phases.len(), WINDOW);
        assert_eq!(x.trajectory.len(), WINDOW);
        assert_eq!(x.to_vector().len(), FeatureLayout::default().x_dim());
        for s in &x.trajectory {
            assert!((s.dir.norm() - 1.0).abs() < 1e-6);
        }
        let cur = x.trajectory[WINDOW_CENTER];
        assert!(cur.pos.norm() < 1e-12);
        assert!((cur.dir - Vec2::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn identity_pose_positions_are_offsets() {
        let mut c = prepared(SyntheticStyleSpec::idle(), 1);
        let j = c.num_joints();
        for f in 0..c.num_frames() {
            c.root_positions[f] = Vec3::ZERO;
            for q in &mut c.local_rotations[f * j..(f + 1) * j] {
                *q = Quat::IDENTITY;
            }
        }
        let phases = c.phases.take();
        c.derive().unwrap();
        c.phases = phases;
        let (x, _) = assemble(&c, 10, 20, &[false; 22]).unwrap();
        for (s, r) in x.current.iter().zip(c.skeleton.rest_positions()) {
            assert!((s.pos - r).norm() < 1e-12);
        }
    }

    #[test]
    fn masking_zeroes_targets() {
        let c = prepared(SyntheticStyleSpec::walk(), 2);
        let mut mask = [false; 22];
        mask[3] = true;
        mask[17] = true;
        let (x, _) = assemble(&c, 10, 50, &mask).unwrap();
        for (j, t) in x.target.iter().enumerate() {
            assert_eq!(t.present, !mask[j]);
            if mask[j] {
                assert_eq!(t.pos, Vec3::ZERO);
                assert_eq!(t.rot.to_array(), [0.0; 6]);
            }
        }
    }

    #[test]
    fn yaw_and_translation_invariance() {
        let c = prepared(SyntheticStyleSpec::walk().with_turn(0.5, 0.3), 3);
        let mut moved = c.transformed(1.234, Vec3::new(4.0, 0.0, -7.5));
        moved.derive().unwrap();
        moved.phases = c.phases.clone();
        for (f, t) in [(5, 30), (40, 100), (100, 119)] {
            let (a, ca) = assemble(&c, f, t, &[false; 22]).unwrap();
            let (b, cb) = assemble(&moved, f, t, &[false; 22]).unwrap();
            let (va, vb) = (a.to_vector(), b.to_vector());
            let d = va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(d < 1e-5, "max diff {d}");
            assert_eq!(ca, cb);
        }
    }

    #[test]
    fn range_errors() {
        let c = prepared(SyntheticStyleSpec::walk(), 4);
        let n = c.num_frames();
        assert!(matches!(assemble(&c, 5, n, &[false; 22]), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(assemble(&c, 5, 5, &[false; 22]), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(assemble(&c, 5, 96, &[false; 22]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn ground_truth_is_self_consistent() {
        let c = prepared(SyntheticStyleSpec::run().with_turn(0.7, 0.2), 5);
        let contacts = c.detect_contacts(&FootConfig::default()).unwrap();
        let (x, _) = assemble(&c, 30, 60, &[false; 22]).unwrap();
        let y = ground_truth(&c, &contacts, 30).unwrap();
        // p_next = p_cur + v_next * dt holds in the shared root frame.
        for (cur, (p, v)) in x.current.iter().zip(y.pos.iter().zip(&y.vel)) {
            assert!((cur.pos + v.scale(c.frame_time) - *p).norm() < 1e-9);
        }
        let l = FeatureLayout::default();
        let back = OutputState::from_vector(&l, &y.to_vector()).unwrap();
        assert_eq!(back, y);
    }
}
