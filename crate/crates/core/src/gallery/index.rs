//! Distance-binned gallery with duration labels.

use std::collections::BTreeMap;

use super::atomic::{align_angle, error, AtomicTrajectory, GalleryConfig, Query, RootTrack};
use super::cluster::{cluster_durations, DurationLabel};
use crate::error::{Error, Result};
use crate::rotmath::angle2d;

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryIndex {
    pub config: GalleryConfig,
    pub trajectories: Vec<AtomicTrajectory>,
    /// Distance bin key to trajectory indices, ascending.
    pub bins: BTreeMap<u64, Vec<usize>>,
    pub labels: Vec<DurationLabel>,
    pub track: RootTrack,
}

/// A trajectory rotated onto a query direction, with its error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub index: usize,
    pub aligned: AtomicTrajectory,
    /// Counter-clockwise rotation applied to the stored trajectory.
    pub rotation: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KthBest {
    pub items: Vec<Scored>,
    /// Fewer than the requested number were available.
    pub insufficient: bool,
}

impl GalleryIndex {
    pub fn new(
        trajectories: Vec<AtomicTrajectory>,
        track: RootTrack,
        config: GalleryConfig,
    ) -> Result<GalleryIndex> {
        config.validate()?;
        if let Some(t) = trajectories.iter().find(|t| t.id.1 >= track.frames() || t.id.0 >= t.id.1) {
            return Err(Error::IndexOutOfRange {
                index: t.id.1,
                len: track.frames(),
            });
        }
        let mut bins: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, t) in trajectories.iter().enumerate() {
            bins.entry(bin_key(t.distance(), config.bin_width)).or_default().push(i);
        }
        let durations: Vec<usize> = trajectories.iter().map(|t| t.duration()).collect();
        let labels = cluster_durations(&durations).labels;
        Ok(GalleryIndex {
            config,
            trajectories,
            bins,
            labels,
            track,
        })
    }

    pub fn build(clips: &[crate::motion::MotionClip], config: GalleryConfig) -> Result<GalleryIndex> {
        let (atoms, track) = super::atomic::extract_atomics(clips, &config)?;
        GalleryIndex::new(atoms, track, config)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    fn style_ok(&self, i: usize, q: &Query) -> bool {
        q.style.is_none_or(|s| self.trajectories[i].style == s)
    }

    /// Aligns trajectory `i` to `q` and scores it with the full error; zero
    /// displacement trajectories are scored unrotated.
    pub fn score(&self, i: usize, q: &Query) -> Result<Scored> {
        let t = &self.trajectories[i];
        let rotation = align_angle(t, q.v_p).unwrap_or(0.0);
        let aligned = t.rotated(rotation);
        Ok(Scored {
            index: i,
            aligned,
            rotation,
            error: error(&[aligned], q)?,
        })
    }

    /// The `k` lowest-error trajectories in nondecreasing error, ties by
    /// shorter duration then lower index.
    pub fn kth_best(&self, q: &Query, k: usize) -> Result<KthBest> {
        let mut all = (0..self.len())
            .filter(|&i| self.style_ok(i, q))
            .map(|i| self.score(i, q))
            .collect::<Result<Vec<_>>>()?;
        self.sort(&mut all);
        let insufficient = all.len() < k;
        all.truncate(k);
        Ok(KthBest {
            items: all,
            insufficient,
        })
    }

    pub(crate) fn sort(&self, v: &mut [Scored]) {
        v.sort_by(|a, b| {
            a.error
                .total_cmp(&b.error)
                .then(self.trajectories[a.index].duration().cmp(&self.trajectories[b.index].duration()))
                .then(a.index.cmp(&b.index))
        });
    }

    /// Trajectories within one bin width of the query distance whose aligned
    /// error is at most `alpha`, sorted as in [`GalleryIndex::kth_best`].
    pub fn direct_candidates(&self, q: &Query, alpha: f64) -> Result<Vec<Scored>> {
        let d = q.v_p.norm();
        let bw = self.config.bin_width;
        let key = bin_key(d, bw);
        let mut out = Vec::new();
        for (_, members) in self.bins.range(key.saturating_sub(2)..=key + 2) {
            for &i in members {
                let t = &self.trajectories[i];
                if (t.distance() - d).abs() > bw || t.distance() < 1e-9 || !self.style_ok(i, q) {
                    continue;
                }
                let s = self.score(i, q)?;
                if s.error <= alpha {
                    out.push(s);
                }
            }
        }
        self.sort(&mut out);
        Ok(out)
    }

    /// Shorter trajectories that could open a chain: distance below the
    /// query's by more than one bin, start-facing error within `alpha`.
    pub(crate) fn split_candidates(&self, q: &Query, alpha: f64) -> Result<Vec<Scored>> {
        let limit = q.v_p.norm() - self.config.bin_width;
        let mut out = Vec::new();
        for i in 0..self.len() {
            let t = &self.trajectories[i];
            if t.distance() >= limit || t.distance() < 1e-9 || !self.style_ok(i, q) {
                continue;
            }
            let rotation = align_angle(t, q.v_p)?;
            let aligned = t.rotated(rotation);
            let e = angle2d(aligned.o_s, q.o_s)?;
            if e <= alpha {
                out.push(Scored {
                    index: i,
                    aligned,
                    rotation,
                    error: e,
                });
            }
        }
        Ok(out)
    }
}

pub fn bin_key(distance: f64, width: f64) -> u64 {
    (distance / width).floor().max(0.0) as u64
}
