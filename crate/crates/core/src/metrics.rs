//! Pose error metrics, foot sliding and the interpolation baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{FootConfig, MotionClip, Skeleton};
use crate::rotmath::{slerp, Quat, Vec3};

/// Transition lengths reported by default.
pub const TRANSITION_LENGTHS: [usize; 6] = [15, 30, 45, 60, 75, 90];

fn check_pair(pred: &MotionClip, truth: &MotionClip) -> Result<()> {
    if pred.num_frames() != truth.num_frames() {
        return Err(Error::LengthMismatch(pred.num_frames(), truth.num_frames()));
    }
    if pred.num_joints() != truth.num_joints() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} joints",
            pred.num_joints(),
            truth.num_joints()
        )));
    }
    if pred.world.is_none() || truth.world.is_none() {
        return Err(Error::MissingCache("forward kinematics"));
    }
    Ok(())
}

fn mean_per_frame(frames: usize, dist: impl Fn(usize) -> f64) -> f64 {
    if frames == 0 {
        return 0.0;
    }
    (0..frames).map(dist).sum::<f64>() / frames as f64
}

/// Mean over frames of the distance between stacked global joint positions (meters).
pub fn l2p(pred: &MotionClip, truth: &MotionClip) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(mean_per_frame(pred.num_frames(), |f| {
        pred.world_positions(f)
            .iter()
            .zip(truth.world_positions(f))
            .map(|(&a, &b)| {
                let d = a - b;
                d.dot(d)
            })
            .sum::<f64>()
            .sqrt()
    }))
}

/// Mean over frames of the distance between stacked global quaternions,
/// each flipped onto the hemisphere of its counterpart first.
pub fn l2q(pred: &MotionClip, truth: &MotionClip) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(mean_per_frame(pred.num_frames(), |f| {
        pred.world_rotations(f)
            .iter()
            .zip(truth.world_rotations(f))
            .map(|(&a, &b)| quat_sq_dist(a, b))
            .sum::<f64>()
            .sqrt()
    }))
}

fn quat_sq_dist(a: Quat, b: Quat) -> f64 {
    let a = if a.dot(b) < 0.0 { a.neg() } else { a };
    let d = [a.w - b.w, a.x - b.x, a.y - b.y, a.z - b.z];
    d.iter().map(|x| x * x).sum()
}

/// Height weighting for the foot-slide score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlideVariant {
    /// `v * (2 - 2h/H)`.
    #[default]
    Linear,
    /// `v * (2 - 2^(h/H))`.
    Exponential,
}

impl SlideVariant {
    pub fn weight(self, h: f64, limit: f64) -> f64 {
        match self {
            SlideVariant::Linear => 2.0 - 2.0 * h / limit,
            SlideVariant::Exponential => 2.0 - 2f64.powf(h / limit),
        }
    }
}

/// Slide score for one foot sample; zero at or above the height limit.
pub fn slide_sample(speed: f64, h: f64, limit: f64, variant: SlideVariant) -> f64 {
    if h < limit {
        speed * variant.weight(h, limit)
    } else {
        0.0
    }
}

/// Mean slide score over frames and feet.
///
/// Height is measured above each foot joint's rest-pose ground clearance,
/// speed is the horizontal velocity magnitude, and the height limit is
/// `feet.height_thresh`.
pub fn foot_slide(clip: &MotionClip, feet: &FootConfig, variant: SlideVariant) -> Result<f64> {
    let joints = feet.resolve(&clip.skeleton)?;
    if clip.world.is_none() || clip.velocities.is_none() {
        return Err(Error::MissingCache("forward kinematics and velocity"));
    }
    let frames = clip.num_frames();
    if frames == 0 || joints.is_empty() {
        return Ok(0.0);
    }
    let clearance = clip.skeleton.rest_clearance();
    let mut total = 0.0;
    for f in 0..frames {
        let pos = clip.world_positions(f);
        let vel = clip.joint_velocities(f);
        for &j in &joints {
            let h = pos[j].y - clearance[j];
            total += slide_sample(vel[j].ground().norm(), h, feet.height_thresh, variant);
        }
    }
    Ok(total / (frames * joints.len()) as f64)
}

/// Root position and local joint rotations of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub root: Vec3,
    pub rotations: Vec<Quat>,
}

impl PoseFrame {
    pub fn from_clip(clip: &MotionClip, frame: usize) -> Result<PoseFrame> {
        if frame >= clip.num_frames() {
            return Err(Error::IndexOutOfRange {
                index: frame,
                len: clip.num_frames(),
            });
        }
        Ok(PoseFrame {
            root: clip.root_positions[frame],
            rotations: clip.local(frame).to_vec(),
        })
    }
}

/// `n` frames from `a` to `b` inclusive: lerped root, slerped rotations.
/// The returned clip carries FK and velocity caches.
pub fn interpolate_baseline(
    skeleton: &Skeleton,
    a: &PoseFrame,
    b: &PoseFrame,
    n: usize,
    frame_time: f64,
) -> Result<MotionClip> {
    if n < 2 {
        return Err(Error::TooShort(format!("interpolation needs 2 frames, got {n}")));
    }
    let nj = skeleton.len();
    if a.rotations.len() != nj || b.rotations.len() != nj {
        return Err(Error::ShapeMismatch("pose joint count differs from skeleton".into()));
    }
    let mut roots = Vec::with_capacity(n);
    let mut rots = Vec::with_capacity(n * nj);
    for i in 0..n {
        // Endpoints are copied so they match bit for bit.
        if i == 0 || i == n - 1 {
            let p = if i == 0 { a } else { b };
            roots.push(p.root);
            rots.extend_from_slice(&p.rotations);
            continue;
        }
        let t = i as f64 / (n - 1) as f64;
        roots.push(a.root.lerp(b.root, t));
        rots.extend(a.rotations.iter().zip(&b.rotations).map(|(&q0, &q1)| slerp(q0, q1, t)));
    }
    let mut clip = MotionClip::new(skeleton.clone(), frame_time, roots, rots, 0)?;
    clip.derive()?;
    Ok(clip)
}

/// Scores of one method at one transition length, averaged over transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub frames: usize,
    pub transitions: usize,
    /// Meters.
    pub l2p: f64,
    /// Unitless quaternion distance.
    pub l2q: f64,
    /// Meters per second, linear height weighting.
    pub foot_slide: f64,
    /// Meters per second, exponential height weighting.
    pub foot_slide_exp: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Running sums for one (method, length) cell.
#[derive(Debug, Clone, Default)]
pub struct EvalAccumulator {
    sums: [f64; 4],
    count: usize,
}

impl EvalAccumulator {
    pub fn add(&mut self, pred: &MotionClip, truth: &MotionClip, feet: &FootConfig) -> Result<()> {
        let v = [
            l2p(pred, truth)?,
            l2q(pred, truth)?,
            foot_slide(pred, feet, SlideVariant::Linear)?,
            foot_slide(pred, feet, SlideVariant::Exponential)?,
        ];
        for (s, x) in self.sums.iter_mut().zip(v) {
            *s += x;
        }
        self.count += 1;
        Ok(())
    }

    pub fn row(&self, method: &str, frames: usize) -> EvalRow {
        let n = self.count.max(1) as f64;
        EvalRow {
            method: method.to_string(),
            frames,
            transitions: self.count,
            l2p: self.sums[0] / n,
            l2q: self.sums[1] / n,
            foot_slide: self.sums[2] / n,
            foot_slide_exp: self.sums[3] / n,
        }
    }
}

impl EvalReport {
    /// Rows ordered by transition length, then method.
    pub fn new(mut rows: Vec<EvalRow>) -> EvalReport {
        rows.sort_by(|a, b| a.frames.cmp(&b.frames).then_with(|| a.method.cmp(&b.method)));
        EvalReport { rows }
    }

    pub fn is_valid(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].frames <= w[1].frames)
            && self.rows.iter().all(|r| {
                [r.l2p, r.l2q, r.foot_slide, r.foot_slide_exp]
                    .iter()
                    .all(|v| v.is_finite() && *v >= 0.0)
            })
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<10} {:>6} {:>5} {:>10} {:>10} {:>12} {:>12}\n",
            "method", "frames", "n", "L2P[m]", "L2Q", "slide[m/s]", "slide-exp"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<10} {:>6} {:>5} {:>10.4} {:>10.4} {:>12.4} {:>12.4}\n",
                r.method, r.frames, r.transitions, r.l2p, r.l2q, r.foot_slide, r.foot_slide_exp
            ));
        }
        s
    }

    /// One JSON record per row.
    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain struct") + "\n")
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{generate_synthetic_clip, SyntheticStyleSpec};

    fn walk() -> MotionClip {
        let mut c = generate_synthetic_clip(&SyntheticStyleSpec::walk(), 2.0, 3)
            .unwrap()
            .clip;
        c.derive().unwrap();
        c
    }

    #[test]
    fn identical_clips_score_zero() {
        let c = walk();
        assert_eq!(l2p(&c, &c).unwrap(), 0.0);
        assert_eq!(l2q(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn uniform_offset_l2p() {
        let c = walk();
        let mut d = c.clone();
        for p in &mut d.world.as_mut().unwrap().positions {
            *p += Vec3::new(0.3, 0.0, 0.0);
        }
        assert!((l2p(&d, &c).unwrap() - 0.3 * 22f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn l2q_sign_invariant_and_half_turn() {
        let c = walk();
        let mut d = c.clone();
        for q in &mut d.world.as_mut().unwrap().rotations {
            *q = q.neg();
        }
        assert!(l2q(&d, &c).unwrap() < 1e-12);
        let half = Quat::from_axis_angle(Vec3::Z, std::f64::consts::PI);
        assert!((quat_sq_dist(Quat::IDENTITY, half).sqrt() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let c = walk();
        let s = c.slice(0, 10);
        assert!(matches!(l2p(&s, &c), Err(Error::LengthMismatch(10, _))));
    }

    #[test]
    fn slide_formula() {
        let h = 0.025;
        assert!((slide_sample(0.1, 0.0, h, SlideVariant::Linear) - 0.2).abs() < 1e-12);
        assert!((slide_sample(0.1, h / 2.0, h, SlideVariant::Linear) - 0.1).abs() < 1e-12);
        assert_eq!(slide_sample(0.1, h, h, SlideVariant::Linear), 0.0);
        assert!((slide_sample(0.1, 0.0, h, SlideVariant::Exponential) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn slide_invariant_under_yaw_and_shift() {
        let c = walk();
        let mut t = c.transformed(1.1, Vec3::new(3.0, 0.0, -2.0));
        t.derive().unwrap();
        let cfg = FootConfig::default();
        let a = foot_slide(&c, &cfg, SlideVariant::Linear).unwrap();
        let b = foot_slide(&t, &cfg, SlideVariant::Linear).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} {b}");
    }

    #[test]
    fn baseline_endpoints_and_midpoint() {
        let c = walk();
        let a = PoseFrame::from_clip(&c, 0).unwrap();
        let b = PoseFrame::from_clip(&c, 40).unwrap();
        let out = interpolate_baseline(&c.skeleton, &a, &b, 21, c.frame_time).unwrap();
        assert_eq!(PoseFrame::from_clip(&out, 0).unwrap(), a);
        assert_eq!(PoseFrame::from_clip(&out, 20).unwrap(), b);
        let mid = out.root_positions[10];
        let mean = (a.root + b.root).scale(0.5);
        assert!((mid - mean).norm() < 1e-9);
        let still = interpolate_baseline(&c.skeleton, &a, &a, 5, c.frame_time).unwrap();
        for f in 1..5 {
            assert_eq!(still.root_positions[f], a.root);
            for (q, r) in still.local(f).iter().zip(&a.rotations) {
                assert!(q.angle_to(*r) < 1e-9);
            }
        }
        assert!(interpolate_baseline(&c.skeleton, &a, &b, 1, c.frame_time).is_err());
    }

    #[test]
    fn report_sorted_and_serialized() {
        let c = walk();
        let mut acc = EvalAccumulator::default();
        acc.add(&c, &c, &FootConfig::default()).unwrap();
        let r = EvalReport::new(vec![acc.row("truth", 30), acc.row("interp", 15)]);
        assert!(r.is_valid());
        assert_eq!(r.rows[0].frames, 15);
        assert_eq!(r.rows[1].l2p, 0.0);
        assert_eq!(r.to_jsonl().lines().count(), 2);
        assert!(r.to_table().contains("interp"));
    }
}
