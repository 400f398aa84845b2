use serde::{Deserialize, Serialize};

use super::skeleton::Skeleton;
use crate::error::{Error, Result};
use crate::features::PhaseFrame;
use crate::rotmath::{slerp, Quat, Vec3};

pub const FRAME_TIME: f64 = 1.0 / 30.0;

/// Per-frame world transforms, frame-major (`frame * joints + joint`).
#[derive(Debug, Clone, PartialEq)]
pub struct WorldPose {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Quat>,
}

/// A skeleton animated over a sequence of frames.
///
/// `root_positions` and `local_rotations` are the source of truth. `world`,
/// `velocities` and `phases` are derived caches; they are dropped by any
/// method that edits transforms and rebuilt with [`MotionClip::derive`].
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub skeleton: Skeleton,
    pub frame_time: f64,
    pub root_positions: Vec<Vec3>,
    /// Frame-major local joint rotations.
    pub local_rotations: Vec<Quat>,
    pub style: usize,
    pub world: Option<WorldPose>,
    pub velocities: Option<Vec<Vec3>>,
    pub phases: Option<Vec<PhaseFrame>>,
}

/// Foot joints and thresholds for contact labeling and foot-slide scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootConfig {
    pub joints: Vec<String>,
    /// Meters above the joint's rest-pose ground clearance.
    pub height_thresh: f64,
    /// Meters per second.
    pub speed_thresh: f64,
}

impl Default for FootConfig {
    fn default() -> Self {
        FootConfig {
            joints: ["LeftFoot", "LeftToe", "RightFoot", "RightToe"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            height_thresh: 0.025,
            speed_thresh: 0.15,
        }
    }
}

impl FootConfig {
    pub fn resolve(&self, skeleton: &Skeleton) -> Result<Vec<usize>> {
        self.joints
            .iter()
            .map(|n| {
                skeleton
                    .index_of(n)
                    .ok_or_else(|| Error::MissingFootJoint(n.clone()))
            })
            .collect()
    }
}

/// Binary contact labels, frame-major (`frame * feet + foot`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactTrack {
    pub joints: Vec<usize>,
    pub flags: Vec<bool>,
}

impl ContactTrack {
    pub fn feet(&self) -> usize {
        self.joints.len()
    }

    pub fn frames(&self) -> usize {
        self.flags.len() / self.joints.len().max(1)
    }

    pub fn get(&self, frame: usize, foot: usize) -> bool {
        self.flags[frame * self.joints.len() + foot]
    }
}

impl MotionClip {
    pub fn new(
        skeleton: Skeleton,
        frame_time: f64,
        root_positions: Vec<Vec3>,
        local_rotations: Vec<Quat>,
        style: usize,
    ) -> Result<MotionClip> {
        if root_positions.len() * skeleton.len() != local_rotations.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} frames need {} rotations, got {}",
                root_positions.len(),
                root_positions.len() * skeleton.len(),
                local_rotations.len()
            )));
        }
        if !(frame_time > 0.0 && frame_time.is_finite()) {
            return Err(Error::InvalidSpec(format!("frame time {frame_time}")));
        }
        Ok(MotionClip {
            skeleton,
            frame_time,
            root_positions,
            local_rotations,
            style,
            world: None,
            velocities: None,
            phases: None,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.root_positions.len()
    }

    pub fn num_joints(&self) -> usize {
        self.skeleton.len()
    }

    pub fn local(&self, frame: usize) -> &[Quat] {
        let j = self.num_joints();
        &self.local_rotations[frame * j..(frame + 1) * j]
    }

    fn check_frame(&self, frame: usize) -> Result<()> {
        if frame >= self.num_frames() {
            return Err(Error::IndexOutOfRange {
                index: frame,
                len: self.num_frames(),
            });
        }
        Ok(())
    }

    /// World positions and rotations of every joint at `frame`.
    pub fn forward_kinematics(&self, frame: usize) -> Result<(Vec<Vec3>, Vec<Quat>)> {
        self.check_frame(frame)?;
        let local = self.local(frame);
        let n = self.num_joints();
        let mut pos = Vec::with_capacity(n);
        let mut rot: Vec<Quat> = Vec::with_capacity(n);
        for (j, joint) in self.skeleton.joints().iter().enumerate() {
            match joint.parent {
                None => {
                    rot.push(local[j]);
                    pos.push(self.root_positions[frame] + joint.offset);
                }
                Some(p) => {
                    pos.push(pos[p] + rot[p].rotate(joint.offset));
                    rot.push(rot[p] * local[j]);
                }
            }
        }
        Ok((pos, rot))
    }

    pub fn compute_fk(&mut self) {
        let n = self.num_frames() * self.num_joints();
        let mut positions = Vec::with_capacity(n);
        let mut rotations = Vec::with_capacity(n);
        for f in 0..self.num_frames() {
            let (p, r) = self.forward_kinematics(f).expect("frame in range");
            positions.extend(p);
            rotations.extend(r);
        }
        self.world = Some(WorldPose {
            positions,
            rotations,
        });
    }

    /// Backward-difference joint velocities; frame 0 copies frame 1.
    pub fn compute_velocities(&mut self) -> Result<()> {
        let frames = self.num_frames();
        if frames < 2 {
            return Err(Error::TooShort(format!("velocities need 2 frames, got {frames}")));
        }
        if self.world.is_none() {
            self.compute_fk();
        }
        let j = self.num_joints();
        let pos = &self.world.as_ref().expect("fk cache").positions;
        let inv_dt = 1.0 / self.frame_time;
        let mut vel = vec![Vec3::ZERO; frames * j];
        for f in 1..frames {
            for k in 0..j {
                vel[f * j + k] = (pos[f * j + k] - pos[(f - 1) * j + k]).scale(inv_dt);
            }
        }
        for k in 0..j {
            vel[k] = vel[j + k];
        }
        self.velocities = Some(vel);
        Ok(())
    }

    /// FK and velocity caches.
    pub fn derive(&mut self) -> Result<()> {
        self.compute_fk();
        self.compute_velocities()
    }

    pub fn world_positions(&self, frame: usize) -> &[Vec3] {
        let j = self.num_joints();
        &self.world.as_ref().expect("fk cache").positions[frame * j..(frame + 1) * j]
    }

    pub fn world_rotations(&self, frame: usize) -> &[Quat] {
        let j = self.num_joints();
        &self.world.as_ref().expect("fk cache").rotations[frame * j..(frame + 1) * j]
    }

    pub fn joint_velocities(&self, frame: usize) -> &[Vec3] {
        let j = self.num_joints();
        &self.velocities.as_ref().expect("velocity cache")[frame * j..(frame + 1) * j]
    }

    /// Height of `joint` above its rest-pose ground clearance, for every frame.
    fn foot_heights(&self, joint: usize, clearance: f64) -> impl Iterator<Item = f64> + '_ {
        let j = self.num_joints();
        let pos = &self.world.as_ref().expect("fk cache").positions;
        (0..self.num_frames()).map(move |f| pos[f * j + joint].y - clearance)
    }

    /// A foot is in contact iff it is below the height threshold and slower
    /// than the speed threshold.
    pub fn detect_contacts(&self, cfg: &FootConfig) -> Result<ContactTrack> {
        let joints = cfg.resolve(&self.skeleton)?;
        if self.world.is_none() || self.velocities.is_none() {
            return Err(Error::TooShort("contact detection needs FK and velocity caches".into()));
        }
        let clearance = self.skeleton.rest_clearance();
        let nj = self.num_joints();
        let vel = self.velocities.as_ref().expect("checked");
        let frames = self.num_frames();
        let mut flags = vec![false; frames * joints.len()];
        for (fi, &joint) in joints.iter().enumerate() {
            for (f, h) in self.foot_heights(joint, clearance[joint]).enumerate() {
                let speed = vel[f * nj + joint].norm();
                flags[f * joints.len() + fi] = h < cfg.height_thresh && speed < cfg.speed_thresh;
            }
        }
        Ok(ContactTrack { joints, flags })
    }

    /// Reflection across the x = 0 plane with left/right joints swapped.
    ///
    /// Derived caches are not carried over.
    pub fn mirror(&self) -> Result<MotionClip> {
        let table = self.skeleton.mirror_table()?;
        let reflect = |q: Quat| Quat::new(q.w, q.x, -q.y, -q.z);
        let j = self.num_joints();
        let mut rots = Vec::with_capacity(self.local_rotations.len());
        for f in 0..self.num_frames() {
            let local = self.local(f);
            for &src in table.iter().take(j) {
                rots.push(reflect(local[src]));
            }
        }
        let roots = self
            .root_positions
            .iter()
            .map(|p| Vec3::new(-p.x, p.y, p.z))
            .collect();
        MotionClip::new(self.skeleton.clone(), self.frame_time, roots, rots, self.style)
    }

    /// Frames `[start, end)` with caches sliced alongside.
    pub fn slice(&self, start: usize, end: usize) -> MotionClip {
        let j = self.num_joints();
        MotionClip {
            skeleton: self.skeleton.clone(),
            frame_time: self.frame_time,
            root_positions: self.root_positions[start..end].to_vec(),
            local_rotations: self.local_rotations[start * j..end * j].to_vec(),
            style: self.style,
            world: self.world.as_ref().map(|w| WorldPose {
                positions: w.positions[start * j..end * j].to_vec(),
                rotations: w.rotations[start * j..end * j].to_vec(),
            }),
            velocities: self.velocities.as_ref().map(|v| v[start * j..end * j].to_vec()),
            phases: self.phases.as_ref().map(|p| p[start..end].to_vec()),
        }
    }

    /// Applies a global yaw about the world origin followed by a horizontal
    /// translation. Caches are dropped.
    pub fn transformed(&self, yaw: f64, shift: Vec3) -> MotionClip {
        let q = Quat::from_yaw(yaw);
        let shift = Vec3::new(shift.x, 0.0, shift.z);
        let j = self.num_joints();
        let roots = self
            .root_positions
            .iter()
            .map(|&p| q.rotate(p) + shift)
            .collect();
        let mut rots = self.local_rotations.clone();
        for f in 0..self.num_frames() {
            rots[f * j] = (q * rots[f * j]).normalized();
        }
        MotionClip::new(self.skeleton.clone(), self.frame_time, roots, rots, self.style)
            .expect("same shape")
    }

    /// Multiplies bone offsets and root positions by `factor` (unit
    /// conversion). Caches are dropped.
    pub fn scaled(&self, factor: f64) -> Result<MotionClip> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidSpec(format!("scale factor {factor}")));
        }
        let mut joints = self.skeleton.joints().to_vec();
        for j in &mut joints {
            j.offset = j.offset.scale(factor);
            j.end_site = j.end_site.map(|e| e.scale(factor));
        }
        MotionClip::new(
            Skeleton::new(joints)?,
            self.frame_time,
            self.root_positions.iter().map(|p| p.scale(factor)).collect(),
            self.local_rotations.clone(),
            self.style,
        )
    }

    /// Resamples to a new frame time by lerping the root and slerping rotations.
    pub fn resample(&self, frame_time: f64) -> MotionClip {
        if (frame_time - self.frame_time).abs() < 1e-12 || self.num_frames() < 2 {
            let mut c = self.clone();
            c.frame_time = frame_time;
            return c;
        }
        let duration = (self.num_frames() - 1) as f64 * self.frame_time;
        let frames = (duration / frame_time + 1e-9).floor() as usize + 1;
        let j = self.num_joints();
        let mut roots = Vec::with_capacity(frames);
        let mut rots = Vec::with_capacity(frames * j);
        for f in 0..frames {
            let s = f as f64 * frame_time / self.frame_time;
            let i0 = (s.floor() as usize).min(self.num_frames() - 1);
            let i1 = (i0 + 1).min(self.num_frames() - 1);
            let t = s - i0 as f64;
            roots.push(self.root_positions[i0].lerp(self.root_positions[i1], t));
            let (a, b) = (self.local(i0), self.local(i1));
            for k in 0..j {
                rots.push(slerp(a[k], b[k], t));
            }
        }
        MotionClip::new(self.skeleton.clone(), frame_time, roots, rots, self.style)
            .expect("consistent shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::skeleton::{Axis, Joint};
    use std::f64::consts::FRAC_PI_2;

    fn chain() -> Skeleton {
        let j = |name: &str, parent, off| Joint {
            name: name.into(),
            parent,
            offset: off,
            rotation_order: [Axis::Z, Axis::X, Axis::Y],
            has_position: parent.is_none(),
            end_site: None,
        };
        Skeleton::new(vec![
            j("Root", None, Vec3::ZERO),
            j("A", Some(0), Vec3::new(0.0, 1.0, 0.0)),
            j("B", Some(1), Vec3::new(0.0, 1.0, 0.0)),
        ])
        .unwrap()
    }

    fn static_clip(frames: usize) -> MotionClip {
        let s = Skeleton::humanoid();
        let n = s.len();
        MotionClip::new(
            s,
            FRAME_TIME,
            vec![Vec3::new(0.0, 0.9, 0.0); frames],
            vec![Quat::IDENTITY; frames * n],
            0,
        )
        .unwrap()
    }

    #[test]
    fn scaling_scales_world_positions() {
        let mut c = static_clip(3);
        c.root_positions[1] = Vec3::new(1.0, 0.8, -2.0);
        let mut s = c.scaled(0.01).unwrap();
        c.compute_fk();
        s.compute_fk();
        for (a, b) in c.world_positions(1).iter().zip(s.world_positions(1)) {
            assert!((a.scale(0.01) - *b).norm() < 1e-12);
        }
        assert!(c.scaled(0.0).is_err());
    }

    #[test]
    fn fk_chain_identity() {
        let s = chain();
        let clip = MotionClip::new(s, FRAME_TIME, vec![Vec3::ZERO], vec![Quat::IDENTITY; 3], 0).unwrap();
        let (p, _) = clip.forward_kinematics(0).unwrap();
        assert!((p[2] - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
        assert!(matches!(
            clip.forward_kinematics(1),
            Err(Error::IndexOutOfRange { index: 1, len: 1 })
        ));
    }

    #[test]
    fn fk_root_yaw() {
        let mut s = chain().joints().to_vec();
        s[1].offset = Vec3::new(1.0, 0.0, 0.0);
        let s = Skeleton::new(s).unwrap();
        let root = Vec3::new(2.0, 0.5, -1.0);
        let rots = vec![Quat::from_yaw(FRAC_PI_2), Quat::IDENTITY, Quat::IDENTITY];
        let clip = MotionClip::new(s, FRAME_TIME, vec![root], rots, 0).unwrap();
        let (p, _) = clip.forward_kinematics(0).unwrap();
        assert!((p[1] - (root + Vec3::new(0.0, 0.0, -1.0))).norm() < 1e-12);
    }

    #[test]
    fn fk_identity_is_cumulative_offsets() {
        let mut clip = static_clip(1);
        clip.root_positions[0] = Vec3::ZERO;
        let (p, _) = clip.forward_kinematics(0).unwrap();
        for (a, b) in p.iter().zip(clip.skeleton.rest_positions()) {
            assert!((*a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn velocities_static_and_translating() {
        let mut clip = static_clip(10);
        clip.derive().unwrap();
        assert!(clip.velocities.as_ref().unwrap().iter().all(|v| v.norm() == 0.0));

        let mut clip = static_clip(10);
        for (f, p) in clip.root_positions.iter_mut().enumerate() {
            p.x = 1.5 * f as f64 * FRAME_TIME;
        }
        clip.derive().unwrap();
        for v in clip.velocities.as_ref().unwrap() {
            assert!((*v - Vec3::new(1.5, 0.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn velocities_too_short() {
        let mut clip = static_clip(1);
        assert!(matches!(clip.compute_velocities(), Err(Error::TooShort(_))));
    }

    #[test]
    fn contacts_pinned_and_lifted() {
        let mut clip = static_clip(5);
        // Hips at 0.88 puts toes on the ground.
        for p in clip.root_positions.iter_mut() {
            p.y = 0.88 + 1e-4;
        }
        clip.derive().unwrap();
        let c = clip.detect_contacts(&FootConfig::default()).unwrap();
        assert!(c.flags.iter().all(|&f| f));

        let mut clip = static_clip(5);
        for p in clip.root_positions.iter_mut() {
            p.y = 0.98;
        }
        clip.derive().unwrap();
        let c = clip.detect_contacts(&FootConfig::default()).unwrap();
        assert!(c.flags.iter().all(|&f| !f));
    }

    #[test]
    fn contacts_missing_joint() {
        let mut clip = static_clip(3);
        clip.derive().unwrap();
        let cfg = FootConfig {
            joints: vec!["LeftPaw".into()],
            ..FootConfig::default()
        };
        assert!(matches!(clip.detect_contacts(&cfg), Err(Error::MissingFootJoint(_))));
    }

    #[test]
    fn mirror_root_direction() {
        let mut clip = static_clip(4);
        for (f, p) in clip.root_positions.iter_mut().enumerate() {
            p.x = f as f64 * 0.1;
        }
        let m = clip.mirror().unwrap();
        assert!(m.root_positions[3].x < 0.0);
        assert_eq!(m.mirror().unwrap(), clip);
    }

    #[test]
    fn resample_halves_rate() {
        let mut clip = static_clip(31);
        for (f, p) in clip.root_positions.iter_mut().enumerate() {
            p.z = f as f64;
        }
        let r = clip.resample(2.0 * FRAME_TIME);
        assert_eq!(r.num_frames(), 16);
        assert!((r.root_positions[5].z - 10.0).abs() < 1e-9);
    }
}
