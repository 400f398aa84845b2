//! Periodic phase features: the (A sin 2πS, A cos 2πS) encoding and a
//! deterministic sinusoid-fit extractor over joint-velocity channels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::MotionClip;
use crate::rotmath::{ground_facing, Vec3};

pub const PHASE_CHANNELS: usize = 10;
pub const PHASE_DIM: usize = 2 * PHASE_CHANNELS;

/// Joints whose vertical and forward velocities drive the ten channels.
pub const PHASE_JOINTS: [&str; 5] = ["LeftToe", "RightToe", "LeftHand", "RightHand", "Hips"];

const MIN_FREQ: f64 = 0.4;
const MAX_FREQ: f64 = 4.0;
const FREQ_STEP: f64 = 0.05;

/// Per-channel amplitude and phase (phase in cycles, wrapped to `[0, 1)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFrame {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl PhaseFrame {
    pub fn zeros(channels: usize) -> PhaseFrame {
        PhaseFrame {
            amplitude: vec![0.0; channels],
            phase: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.amplitude.len()
    }

    /// Inverse of [`encode_phase`]: amplitude is the pair norm.
    pub fn from_encoded(enc: &[f64]) -> PhaseFrame {
        let n = enc.len() / 2;
        let mut out = PhaseFrame::zeros(n);
        for i in 0..n {
            let (s, c) = (enc[2 * i], enc[2 * i + 1]);
            out.amplitude[i] = s.hypot(c);
            out.phase[i] = if out.amplitude[i] > 0.0 {
                (s.atan2(c) / (2.0 * PI)).rem_euclid(1.0)
            } else {
                0.0
            };
        }
        out
    }
}

/// Interleaved `(A·sin 2πS, A·cos 2πS)` per channel.
pub fn encode_phase(frame: &PhaseFrame) -> Vec<f64> {
    frame
        .amplitude
        .iter()
        .zip(&frame.phase)
        .flat_map(|(&a, &s)| {
            let (sn, cs) = (2.0 * PI * s).sin_cos();
            [a * sn, a * cs]
        })
        .collect()
}

/// The ten velocity signals, channel-major.
fn channel_signals(clip: &MotionClip) -> Result<Vec<Vec<f64>>> {
    let joints = PHASE_JOINTS
        .iter()
        .map(|n| {
            clip.skeleton
                .index_of(n)
                .ok_or_else(|| Error::MissingFootJoint(n.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let frames = clip.num_frames();
    let mut out = (0..PHASE_CHANNELS).map(|_| Vec::with_capacity(frames)).collect::<Vec<Vec<f64>>>();
    for f in 0..frames {
        let facing = ground_facing(clip.world_rotations(f)[0]);
        let fwd = Vec3::new(facing.x, 0.0, facing.y);
        let vel = clip.joint_velocities(f);
        for (k, &j) in joints.iter().enumerate() {
            out[2 * k].push(vel[j].y);
            out[2 * k + 1].push(vel[j].dot(fwd));
        }
    }
    Ok(out)
}

struct Fit {
    score: f64,
    a: f64,
    b: f64,
}

/// Least-squares `x ≈ m + a cos ωt + b sin ωt`; score is the explained sum of squares.
fn fit_at(times: &[f64], xs: &[f64], freq: f64) -> Fit {
    let w = 2.0 * PI * freq;
    let n = xs.len() as f64;
    let (mut sc, mut ss, mut scc, mut sss, mut scs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sx, mut sxc, mut sxs) = (0.0, 0.0, 0.0);
    for (&t, &x) in times.iter().zip(xs) {
        let (s, c) = (w * t).sin_cos();
        sc += c;
        ss += s;
        scc += c * c;
        sss += s * s;
        scs += c * s;
        sx += x;
        sxc += x * c;
        sxs += x * s;
    }
    // Eliminate the mean term.
    let a11 = scc - sc * sc / n;
    let a12 = scs - sc * ss / n;
    let a22 = sss - ss * ss / n;
    let b1 = sxc - sc * sx / n;
    let b2 = sxs - ss * sx / n;
    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-12 {
        return Fit {
            score: 0.0,
            a: 0.0,
            b: 0.0,
        };
    }
    let a = (b1 * a22 - b2 * a12) / det;
    let b = (a11 * b2 - a12 * b1) / det;
    Fit {
        score: a * b1 + b * b2,
        a,
        b,
    }
}

fn best_fit(times: &[f64], xs: &[f64]) -> (f64, Fit) {
    let mut best_f = MIN_FREQ;
    let mut best = fit_at(times, xs, best_f);
    let steps = ((MAX_FREQ - MIN_FREQ) / FREQ_STEP).round() as usize;
    for i in 1..=steps {
        let f = MIN_FREQ + i as f64 * FREQ_STEP;
        let fit = fit_at(times, xs, f);
        if fit.score > best.score {
            best = fit;
            best_f = f;
        }
    }
    // Golden-section refinement around the coarse peak.
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = ((best_f - FREQ_STEP).max(MIN_FREQ), (best_f + FREQ_STEP).min(MAX_FREQ));
    for _ in 0..30 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if fit_at(times, xs, m1).score > fit_at(times, xs, m2).score {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let f = 0.5 * (lo + hi);
    let fit = fit_at(times, xs, f);
    if fit.score >= best.score {
        (f, fit)
    } else {
        (best_f, best)
    }
}

/// Dominant-sinusoid phase features over a sliding 2 s window.
///
/// Each channel's window is fitted with `m + A sin(2π(f t + S))` where `t`
/// is measured from the frame being labeled, so `S` advances by `f·Δt` per
/// frame on a periodic signal.
pub fn extract_phase_proxy(clip: &MotionClip) -> Result<Vec<PhaseFrame>> {
    if clip.world.is_none() || clip.velocities.is_none() {
        return Err(Error::MissingCache("velocity"));
    }
    let dt = clip.frame_time;
    let half = (1.0 / dt).round() as usize;
    let len = 2 * half + 1;
    let frames = clip.num_frames();
    if frames < len {
        return Err(Error::TooShort(format!(
            "phase extraction needs a 2 s window ({len} frames), clip has {frames}"
        )));
    }
    let signals = channel_signals(clip)?;
    let mut out = vec![PhaseFrame::zeros(PHASE_CHANNELS); frames];
    let mut times = vec![0.0; len];
    for n in 0..frames {
        let start = n.saturating_sub(half).min(frames - len);
        for (k, t) in times.iter_mut().enumerate() {
            *t = (start + k) as f64 * dt - n as f64 * dt;
        }
        for (ch, sig) in signals.iter().enumerate() {
            let xs = &sig[start..start + len];
            let mean = xs.iter().sum::<f64>() / len as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len as f64;
            if var < 1e-12 {
                continue;
            }
            let (_, fit) = best_fit(&times, xs);
            let amp = fit.a.hypot(fit.b);
            out[n].amplitude[ch] = amp;
            out[n].phase[ch] = (fit.a.atan2(fit.b) / (2.0 * PI)).rem_euclid(1.0);
        }
    }
    Ok(out)
}

/// Stride frequency estimate on one channel at one frame; used by tests and diagnostics.
pub fn dominant_frequency(clip: &MotionClip, channel: usize, frame: usize) -> Result<f64> {
    let signals = channel_signals(clip)?;
    let dt = clip.frame_time;
    let half = (1.0 / dt).round() as usize;
    let len = 2 * half + 1;
    let frames = clip.num_frames();
    if frames < len {
        return Err(Error::TooShort("window".into()));
    }
    let start = frame.saturating_sub(half).min(frames - len);
    let times: Vec<f64> = (0..len).map(|k| (start + k) as f64 * dt - frame as f64 * dt).collect();
    Ok(best_fit(&times, &signals[channel][start..start + len]).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{generate_synthetic_clip, SyntheticStyleSpec};
    use proptest::prelude::*;

    #[test]
    fn encode_examples() {
        let f = PhaseFrame {
            amplitude: vec![1.0, 2.0],
            phase: vec![0.0, 0.25],
        };
        let e = encode_phase(&f);
        assert!((e[0] - 0.0).abs() < 1e-15 && (e[1] - 1.0).abs() < 1e-15);
        assert!((e[2] - 2.0).abs() < 1e-15 && e[3].abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn pair_norm_is_amplitude(a in 0.0f64..10.0, s in 0.0f64..1.0) {
            let e = encode_phase(&PhaseFrame { amplitude: vec![a], phase: vec![s] });
            prop_assert!((e[0].hypot(e[1]) - a).abs() < 1e-9);
            let back = PhaseFrame::from_encoded(&e);
            prop_assert!((back.amplitude[0] - a).abs() < 1e-9);
            if a > 1e-6 {
                let d = (back.phase[0] - s).rem_euclid(1.0);
                prop_assert!(d.min(1.0 - d) < 1e-9);
            }
        }
    }

    #[test]
    fn constant_velocity_has_no_amplitude() {
        let mut clip = generate_synthetic_clip(&SyntheticStyleSpec::idle(), 3.0, 2).unwrap().clip;
        // Freeze every frame to the first pose and translate uniformly.
        let first = clip.local(0).to_vec();
        let j = clip.num_joints();
        let p0 = clip.root_positions[0];
        for f in 0..clip.num_frames() {
            clip.local_rotations[f * j..(f + 1) * j].copy_from_slice(&first);
            clip.root_positions[f] = p0 + Vec3::new(0.0, 0.0, 1.1 * f as f64 * clip.frame_time);
        }
        clip.derive().unwrap();
        let ph = extract_phase_proxy(&clip).unwrap();
        assert!(ph.iter().all(|p| p.amplitude.iter().all(|&a| a < 1e-3)));
    }

    #[test]
    fn walk_phase_advances_at_stride_frequency() {
        let spec = SyntheticStyleSpec::walk();
        let mut clip = generate_synthetic_clip(&spec, 6.0, 4).unwrap().clip;
        clip.derive().unwrap();
        let ph = extract_phase_proxy(&clip).unwrap();
        // Channel 1: left toe forward velocity.
        let expect = spec.stride_freq * clip.frame_time;
        let (lo, hi) = (40, clip.num_frames() - 40);
        let mut total = 0.0;
        for n in lo..hi {
            total += (ph[n + 1].phase[1] - ph[n].phase[1]).rem_euclid(1.0);
        }
        let mean = total / (hi - lo) as f64;
        assert!((mean - expect).abs() / expect < 0.05, "advance {mean} vs {expect}");
        let f = dominant_frequency(&clip, 1, 90).unwrap();
        assert!((f - spec.stride_freq).abs() / spec.stride_freq < 0.05, "freq {f}");
    }

    #[test]
    fn deterministic_and_guarded() {
        let mut clip = generate_synthetic_clip(&SyntheticStyleSpec::run(), 2.5, 8).unwrap().clip;
        assert!(matches!(extract_phase_proxy(&clip), Err(Error::MissingCache(_))));
        clip.derive().unwrap();
        assert_eq!(extract_phase_proxy(&clip).unwrap(), extract_phase_proxy(&clip).unwrap());
        let mut short = clip.slice(0, 40);
        short.derive().unwrap();
        assert!(matches!(extract_phase_proxy(&short), Err(Error::TooShort(_))));
    }
}
