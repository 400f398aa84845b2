//! Procedural locomotion for the 22-joint humanoid.
//!
//! The root follows a planar path at constant speed whose heading turns at a
//! configured rate plus a seeded low-frequency wander. Feet are planted at
//! fixed world points during stance and carried on an arc during swing; leg
//! rotations come from analytic two-bone IK so planted feet are exactly
//! stationary. The generator reports its own stance schedule.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clip::{MotionClip, FRAME_TIME};
use super::skeleton::Skeleton;
use crate::error::{Error, Result};
use crate::rotmath::{facing_of_yaw, wrap_angle, yaw_rotate2d, Mat3, Quat, Vec2, Vec3};

pub const STYLE_IDLE: usize = 0;
pub const STYLE_WALK: usize = 1;
pub const STYLE_RUN: usize = 2;
pub const STYLE_CROUCH: usize = 3;
pub const STYLE_NAMES: [&str; 4] = ["idle", "walk", "run", "crouch-walk"];

const HIP_HEIGHT: f64 = 0.9;
const FOOT_LATERAL: f64 = 0.1;
const ANKLE_CLEARANCE: f64 = 0.06;
const THIGH: f64 = 0.42;
const SHIN: f64 = 0.40;
const REACH: f64 = 0.985 * (THIGH + SHIN);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStyleSpec {
    pub style_id: usize,
    /// Root speed along the path, m/s.
    pub speed: f64,
    /// Constant heading rate, rad/s.
    pub turn_rate: f64,
    /// Amplitude of the seeded heading wander, rad.
    pub wander: f64,
    /// Peak arm swing, rad.
    pub arm_swing: f64,
    /// Hip drop below standing height, m.
    pub crouch: f64,
    /// Gait cycles per second.
    pub stride_freq: f64,
    /// Fraction of a cycle each foot spends planted.
    pub duty: f64,
    pub step_height: f64,
    pub bob: f64,
}

impl SyntheticStyleSpec {
    pub fn idle() -> Self {
        SyntheticStyleSpec {
            style_id: STYLE_IDLE,
            speed: 0.0,
            turn_rate: 0.0,
            wander: 0.0,
            arm_swing: 0.06,
            crouch: 0.0,
            stride_freq: 0.3,
            duty: 1.0,
            step_height: 0.0,
            bob: 0.01,
        }
    }

    pub fn walk() -> Self {
        SyntheticStyleSpec {
            style_id: STYLE_WALK,
            speed: 1.2,
            turn_rate: 0.0,
            wander: 0.0,
            arm_swing: 0.35,
            crouch: 0.0,
            stride_freq: 1.0,
            duty: 0.6,
            step_height: 0.08,
            bob: 0.02,
        }
    }

    pub fn run() -> Self {
        SyntheticStyleSpec {
            style_id: STYLE_RUN,
            speed: 2.8,
            turn_rate: 0.0,
            wander: 0.0,
            arm_swing: 0.6,
            crouch: 0.05,
            stride_freq: 1.45,
            duty: 0.35,
            step_height: 0.14,
            bob: 0.03,
        }
    }

    pub fn crouch_walk() -> Self {
        SyntheticStyleSpec {
            style_id: STYLE_CROUCH,
            speed: 0.6,
            turn_rate: 0.0,
            wander: 0.0,
            arm_swing: 0.15,
            crouch: 0.22,
            stride_freq: 0.8,
            duty: 0.65,
            step_height: 0.06,
            bob: 0.01,
        }
    }

    pub fn preset(style: usize) -> Option<Self> {
        match style {
            STYLE_IDLE => Some(Self::idle()),
            STYLE_WALK => Some(Self::walk()),
            STYLE_RUN => Some(Self::run()),
            STYLE_CROUCH => Some(Self::crouch_walk()),
            _ => None,
        }
    }

    pub fn with_turn(mut self, turn_rate: f64, wander: f64) -> Self {
        self.turn_rate = turn_rate;
        self.wander = wander;
        self
    }

    pub fn with_speed(mut self, speed: f64) -> Self {
        self.speed = speed;
        self
    }

    fn validate(&self) -> Result<()> {
        let vals = [
            self.speed,
            self.turn_rate,
            self.wander,
            self.arm_swing,
            self.crouch,
            self.stride_freq,
            self.duty,
            self.step_height,
            self.bob,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("non-finite parameter".into()));
        }
        if self.speed < 0.0 || self.stride_freq <= 0.0 {
            return Err(Error::InvalidSpec("speed must be >= 0 and stride frequency > 0".into()));
        }
        if self.speed > 0.0 && !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::InvalidSpec("moving gaits need duty in (0, 1)".into()));
        }
        if !(0.0..0.4).contains(&self.crouch) {
            return Err(Error::InvalidSpec("crouch must be in [0, 0.4) m".into()));
        }
        Ok(())
    }
}

/// A generated clip with the stance schedule used to build it.
#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub clip: MotionClip,
    /// Frame-major flags for `[LeftFoot, LeftToe, RightFoot, RightToe]`.
    pub stance: Vec<bool>,
    pub spec: SyntheticStyleSpec,
}

struct Heading {
    base: f64,
    rate: f64,
    wander: f64,
    phases: [f64; 2],
}

impl Heading {
    fn at(&self, t: f64) -> f64 {
        self.base
            + self.rate * t
            + self.wander
                * (0.6 * (2.0 * PI * t / 4.1 + self.phases[0]).sin()
                    + 0.4 * (2.0 * PI * t / 2.3 + self.phases[1]).sin())
    }
}

#[derive(Clone, Copy)]
struct Plant {
    first: i64,
    last: i64,
    pos: Vec2,
    yaw: f64,
}

/// Rotation taking `(rest_dir, rest_fwd)` onto `(dir, fwd)`, with both
/// forward vectors orthogonalized against their direction.
fn frame_rotation(rest_dir: Vec3, rest_fwd: Vec3, dir: Vec3, fwd: Vec3) -> Quat {
    let basis = |d: Vec3, f: Vec3| {
        let d = d.scale(1.0 / d.norm());
        let f = f - d.scale(d.dot(f));
        let f = f.scale(1.0 / f.norm());
        Mat3::from_cols(d, f, d.cross(f))
    };
    let target = basis(dir, fwd);
    let rest = basis(rest_dir, rest_fwd);
    Quat::from_matrix(&(target * rest.transpose()))
}

/// World rotations of thigh and shin placing the ankle at `ankle`, knee bent toward `pole`.
fn two_bone_ik(hip: Vec3, ankle: Vec3, pole: Vec3) -> (Quat, Quat) {
    let d = ankle - hip;
    let dist = d.norm().clamp(1e-6, THIGH + SHIN - 1e-9);
    let dn = d.scale(1.0 / d.norm());
    let cos_a = ((THIGH * THIGH + dist * dist - SHIN * SHIN) / (2.0 * THIGH * dist)).clamp(-1.0, 1.0);
    let sin_a = (1.0 - cos_a * cos_a).sqrt();
    let p = pole - dn.scale(dn.dot(pole));
    let p = p.scale(1.0 / p.norm());
    let knee = hip + (dn.scale(cos_a) + p.scale(sin_a)).scale(THIGH);
    let down = Vec3::new(0.0, -1.0, 0.0);
    let thigh = frame_rotation(down, Vec3::Z, knee - hip, pole);
    let shin = frame_rotation(down, Vec3::Z, ankle - knee, pole);
    (thigh, shin)
}

fn to3(v: Vec2, y: f64) -> Vec3 {
    Vec3::new(v.x, y, v.y)
}

pub fn generate_synthetic_clip(
    spec: &SyntheticStyleSpec,
    duration: f64,
    seed: u64,
) -> Result<SyntheticClip> {
    spec.validate()?;
    if !duration.is_finite() || duration < 1.0 {
        return Err(Error::InvalidSpec(format!("duration {duration} s < 1 s")));
    }
    let dt = FRAME_TIME;
    let frames = (duration / dt).round() as i64 + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heading = Heading {
        base: rng.random_range(-PI..PI),
        rate: spec.turn_rate,
        wander: spec.wander,
        phases: [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)],
    };
    let gait_offset: f64 = rng.random_range(0.0..1.0);
    let moving = spec.speed > 0.0;
    let pad = if moving {
        (1.0 / (spec.stride_freq * dt)).ceil() as i64 + 2
    } else {
        0
    };
    let (lo, hi) = (-pad, frames + pad);
    let idx = |e: i64| (e - lo) as usize;
    let ext = (hi - lo) as usize;

    // Root path: constant-length chords along the heading at mid-step times.
    let mut path = vec![Vec2::ZERO; ext];
    for e in 1..hi {
        let step = facing_of_yaw(heading.at((e as f64 - 0.5) * dt)).scale(spec.speed * dt);
        path[idx(e)] = path[idx(e - 1)] + step;
    }
    for e in (lo..0).rev() {
        let step = facing_of_yaw(heading.at((e as f64 + 0.5) * dt)).scale(spec.speed * dt);
        path[idx(e)] = path[idx(e + 1)] - step;
    }
    let yaw = |e: i64| heading.at(e as f64 * dt);
    let gait = |e: i64, shift: f64| (spec.stride_freq * e as f64 * dt + gait_offset + shift).rem_euclid(1.0);

    // Plants per foot (0 = left on +x, 1 = right).
    let lateral = [FOOT_LATERAL, -FOOT_LATERAL];
    let mut plants: [Vec<Plant>; 2] = [Vec::new(), Vec::new()];
    for (foot, list) in plants.iter_mut().enumerate() {
        let shift = 0.5 * foot as f64;
        let planted = |e: i64| !moving || gait(e, shift) < spec.duty;
        let mut e = lo;
        while e < hi {
            if planted(e) {
                let first = e;
                while e + 1 < hi && planted(e + 1) {
                    e += 1;
                }
                let mid = (first + e) / 2;
                let y = yaw(mid);
                let pos = path[idx(mid)] + yaw_rotate2d(Vec2::new(lateral[foot], 0.0), y);
                list.push(Plant { first, last: e, pos, yaw: y });
            }
            e += 1;
        }
    }

    // Ankle target (ground position, height, yaw) and planted flag.
    let foot_state = |foot: usize, e: i64| -> (Vec2, f64, f64, bool) {
        let list = &plants[foot];
        if let Some(p) = list.iter().find(|p| p.first <= e && e <= p.last) {
            return (p.pos, ANKLE_CLEARANCE, p.yaw, true);
        }
        let next = list.iter().position(|p| p.first > e);
        match next {
            Some(n) if n > 0 => {
                let (a, b) = (list[n - 1], list[n]);
                let u = (e - a.last) as f64 / (b.first - a.last) as f64;
                let pos = a.pos + (b.pos - a.pos).scale(u);
                let y = a.yaw + wrap_angle(b.yaw - a.yaw) * u;
                let h = ANKLE_CLEARANCE + spec.step_height * (PI * u).sin();
                (pos, h, y, false)
            }
            Some(_) => (list[0].pos, ANKLE_CLEARANCE, list[0].yaw, false),
            None => {
                let p = list.last().expect("at least one plant");
                (p.pos, ANKLE_CLEARANCE, p.yaw, false)
            }
        }
    };

    let skeleton = Skeleton::humanoid();
    let nj = skeleton.len();
    let id = |n: &str| skeleton.index_of(n).expect("humanoid joint");
    let (l_up, l_leg, l_foot) = (id("LeftUpLeg"), id("LeftLeg"), id("LeftFoot"));
    let (r_up, r_leg, r_foot) = (id("RightUpLeg"), id("RightLeg"), id("RightFoot"));
    let legs = [(l_up, l_leg, l_foot), (r_up, r_leg, r_foot)];
    let up_offsets = [skeleton.joints()[l_up].offset, skeleton.joints()[r_up].offset];

    let mut roots = Vec::with_capacity(frames as usize);
    let mut rots = Vec::with_capacity(frames as usize * nj);
    let mut planted_flags = Vec::with_capacity(frames as usize);
    for e in 0..frames {
        let t = e as f64 * dt;
        let y = yaw(e);
        let hips_rot = Quat::from_yaw(y);
        let ground = path[idx(e)];
        let feet = [foot_state(0, e), foot_state(1, e)];
        planted_flags.push([feet[0].3, feet[1].3]);

        let cycle = 2.0 * PI * (spec.stride_freq * t + gait_offset);
        let mut hips_y = HIP_HEIGHT - spec.crouch + spec.bob * (2.0 * cycle).cos();
        for (foot, st) in feet.iter().enumerate() {
            let hip_off = hips_rot.rotate(up_offsets[foot]);
            let hip_ground = ground + hip_off.ground();
            let dh = (hip_ground - st.0).norm();
            let room = (REACH * REACH - dh * dh).max(0.0).sqrt();
            hips_y = hips_y.min(st.1 + room - hip_off.y);
        }
        let root = to3(ground, hips_y);
        roots.push(root);

        let mut local = vec![Quat::IDENTITY; nj];
        local[0] = hips_rot;
        let pole = to3(facing_of_yaw(y), 0.0);
        for (foot, st) in feet.iter().enumerate() {
            let (up, _leg, fj) = legs[foot];
            let hip = root + hips_rot.rotate(up_offsets[foot]);
            let ankle = to3(st.0, st.1);
            let (thigh, shin) = two_bone_ik(hip, ankle, pole);
            let foot_rot = Quat::from_yaw(st.2);
            local[up] = (hips_rot.conjugate() * thigh).normalized();
            local[up + 1] = (thigh.conjugate() * shin).normalized();
            local[fj] = (shin.conjugate() * foot_rot).normalized();
        }

        let lean = 1.2 * spec.crouch;
        let swing = spec.arm_swing * cycle.sin();
        local[id("Spine")] = Quat::from_axis_angle(Vec3::X, lean);
        local[id("Spine1")] = Quat::from_axis_angle(Vec3::Y, -0.2 * swing);
        local[id("Neck")] = Quat::from_axis_angle(Vec3::X, -0.5 * lean);
        local[id("LeftArm")] = Quat::from_axis_angle(Vec3::X, swing) * Quat::from_axis_angle(Vec3::Z, -1.3);
        local[id("RightArm")] = Quat::from_axis_angle(Vec3::X, -swing) * Quat::from_axis_angle(Vec3::Z, 1.3);
        local[id("LeftForeArm")] = Quat::from_axis_angle(Vec3::Y, -0.3 - 0.5 * spec.arm_swing);
        local[id("RightForeArm")] = Quat::from_axis_angle(Vec3::Y, 0.3 + 0.5 * spec.arm_swing);
        rots.extend(local);
    }

    // A foot is stationary on the ground at frame n when it was planted on
    // the same plant at n - 1; frame 0 shares frame 1's backward difference.
    let n = frames as usize;
    let mut stance = vec![false; n * 4];
    for f in 0..n {
        for foot in 0..2 {
            let prev = if f == 0 { 1 } else { f - 1 };
            let s = planted_flags[f][foot] && planted_flags[prev.min(n - 1)][foot];
            stance[f * 4 + foot * 2] = s;
            stance[f * 4 + foot * 2 + 1] = s;
        }
    }

    let clip = MotionClip::new(skeleton, dt, roots, rots, spec.style_id)?;
    Ok(SyntheticClip {
        clip,
        stance,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::clip::FootConfig;

    fn planar_length(clip: &MotionClip) -> f64 {
        clip.root_positions
            .windows(2)
            .map(|w| (w[1].ground() - w[0].ground()).norm())
            .sum()
    }

    #[test]
    fn idle_stays_put() {
        let s = generate_synthetic_clip(&SyntheticStyleSpec::idle(), 3.0, 1).unwrap();
        let c = &s.clip;
        let d = (c.root_positions.last().unwrap().ground() - c.root_positions[0].ground()).norm();
        assert!(d < 1e-12);
    }

    #[test]
    fn straight_walk_displacement() {
        let s = generate_synthetic_clip(&SyntheticStyleSpec::walk(), 3.0, 5).unwrap();
        let c = &s.clip;
        let d = (c.root_positions.last().unwrap().ground() - c.root_positions[0].ground()).norm();
        assert!((d - 3.6).abs() / 3.6 < 0.02, "displacement {d}");
    }

    #[test]
    fn path_length_matches_speed() {
        for spec in [
            SyntheticStyleSpec::walk().with_turn(0.8, 0.4),
            SyntheticStyleSpec::run().with_turn(-0.5, 0.3),
            SyntheticStyleSpec::crouch_walk().with_turn(0.3, 0.6),
        ] {
            let s = generate_synthetic_clip(&spec, 4.0, 11).unwrap();
            let len = planar_length(&s.clip) / 4.0;
            assert!((len - spec.speed).abs() / spec.speed < 0.02);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = SyntheticStyleSpec::run().with_turn(0.2, 0.5);
        let a = generate_synthetic_clip(&spec, 2.0, 42).unwrap();
        let b = generate_synthetic_clip(&spec, 2.0, 42).unwrap();
        assert_eq!(a.clip, b.clip);
        let c = generate_synthetic_clip(&spec, 2.0, 43).unwrap();
        assert_ne!(a.clip, c.clip);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SyntheticStyleSpec::walk().with_speed(f64::NAN);
        assert!(matches!(generate_synthetic_clip(&bad, 2.0, 0), Err(Error::InvalidSpec(_))));
        assert!(matches!(
            generate_synthetic_clip(&SyntheticStyleSpec::walk(), 0.5, 0),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn contacts_follow_stance_schedule() {
        for spec in [
            SyntheticStyleSpec::walk().with_turn(0.4, 0.3),
            SyntheticStyleSpec::run(),
            SyntheticStyleSpec::crouch_walk().with_turn(-0.6, 0.2),
            SyntheticStyleSpec::idle(),
        ] {
            let mut s = generate_synthetic_clip(&spec, 4.0, 3).unwrap();
            s.clip.derive().unwrap();
            let track = s.clip.detect_contacts(&FootConfig::default()).unwrap();
            assert_eq!(track.flags, s.stance, "style {}", spec.style_id);
            let planted = s.stance.iter().filter(|&&f| f).count();
            if spec.speed > 0.0 {
                assert!(planted > 0 && planted < s.stance.len());
            }
        }
    }

    #[test]
    fn bones_keep_length() {
        let mut s = generate_synthetic_clip(&SyntheticStyleSpec::run().with_turn(1.0, 0.5), 2.0, 9).unwrap();
        s.clip.compute_fk();
        let sk = s.clip.skeleton.clone();
        for f in 0..s.clip.num_frames() {
            let p = s.clip.world_positions(f);
            for j in 1..sk.len() {
                let parent = sk.parent(j).unwrap();
                assert!(((p[j] - p[parent]).norm() - sk.bone_length(j)).abs() < 1e-9);
            }
        }
    }
}

/// Parameters of a seeded multi-clip corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    /// Number of gait presets used, taken in the order walk, run, crouch-walk, idle.
    pub styles: usize,
    pub minutes: f64,
    pub clip_seconds: f64,
    /// Heading rates are drawn uniformly from `[-max_turn, max_turn]` rad/s.
    pub max_turn: f64,
    pub wander: f64,
    /// Relative speed jitter around each preset.
    pub speed_jitter: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            styles: 4,
            minutes: 2.0,
            clip_seconds: 10.0,
            max_turn: 1.5,
            wander: 0.5,
            speed_jitter: 0.25,
            seed: 0,
        }
    }
}

const CORPUS_ORDER: [usize; 4] = [STYLE_WALK, STYLE_RUN, STYLE_CROUCH, STYLE_IDLE];

/// Clips cycling through the chosen styles until `minutes` of motion exist.
pub fn synthetic_corpus(spec: &CorpusSpec) -> Result<Vec<MotionClip>> {
    if !(1..=CORPUS_ORDER.len()).contains(&spec.styles) {
        return Err(Error::InvalidSpec(format!("{} styles, 1 to 4 available", spec.styles)));
    }
    if !(spec.minutes > 0.0 && spec.clip_seconds >= 1.0 && spec.max_turn >= 0.0)
        || !(0.0..1.0).contains(&spec.speed_jitter)
    {
        return Err(Error::InvalidSpec(format!("corpus spec {spec:?}")));
    }
    let count = ((spec.minutes * 60.0) / spec.clip_seconds).ceil().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xc0ff_ee00);
    (0..count)
        .map(|i| {
            let style = CORPUS_ORDER[i % spec.styles];
            let base = SyntheticStyleSpec::preset(style).expect("known preset");
            let turn = if spec.max_turn > 0.0 {
                rng.random_range(-spec.max_turn..=spec.max_turn)
            } else {
                0.0
            };
            let jitter = 1.0 + spec.speed_jitter * rng.random_range(-1.0..=1.0);
            let s = if style == STYLE_IDLE {
                base
            } else {
                let speed = base.speed * jitter;
                base.with_turn(turn, spec.wander).with_speed(speed)
            };
            let clip_seed = rng.random::<u64>();
            Ok(generate_synthetic_clip(&s, spec.clip_seconds, clip_seed)?.clip)
        })
        .collect()
}
