//! Recursive trajectory candidate search and chain placement.

use rand::seq::IndexedRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::atomic::{error, AtomicTrajectory, Query};
use super::cluster::{cluster_durations, DurationLabel};
use super::index::{GalleryIndex, Scored};
use crate::dcmoe::Guidance;
use crate::error::{Error, Result};
use crate::rotmath::{angle2d, rotate2d, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Lowest error, then shorter duration, then lower index.
    Best,
    /// Weighted by inverse error.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Total error budget in radians.
    pub alpha: f64,
    /// Branches kept per level.
    pub k: usize,
    pub max_depth: usize,
    /// Direct matches are ignored above this depth, forcing longer chains.
    pub min_depth: usize,
    pub seed: u64,
    pub selection: Selection,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            alpha: 0.35,
            k: 4,
            max_depth: 5,
            min_depth: 1,
            seed: 0,
            selection: Selection::Best,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha >= 0.0 && self.k >= 1 && (1..=self.max_depth).contains(&self.min_depth) {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid search config: {self:?}")))
        }
    }
}

/// One chain element placed in the query frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placed {
    pub index: usize,
    pub trajectory: AtomicTrajectory,
    /// Counter-clockwise rotation applied to the stored trajectory.
    pub rotation: f64,
    /// Start position relative to the query start.
    pub start: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub chain: Vec<Placed>,
    /// Start and end facing mismatch of the chain against the query.
    pub error: f64,
    /// Error charged during the search, including facing jumps between links.
    pub charged: f64,
}

impl SearchResult {
    pub fn duration(&self) -> usize {
        self.chain.iter().map(|p| p.trajectory.duration()).sum()
    }

    pub fn depth(&self) -> usize {
        self.chain.len()
    }

    /// End of the chain relative to the query start.
    pub fn end(&self) -> Vec2 {
        self.chain
            .last()
            .map(|p| p.start + rotate2d(p.trajectory.v_p, p.rotation))
            .unwrap_or(Vec2::ZERO)
    }

    pub fn ids(&self) -> Vec<(usize, usize)> {
        self.chain.iter().map(|p| p.trajectory.id).collect()
    }
}

/// Remaining query after committing to the aligned trajectory `y`.
pub fn subtract(q: &Query, y: &AtomicTrajectory) -> Query {
    Query {
        o_s: y.o_e,
        o_e: q.o_e,
        v_p: q.v_p - y.v_p,
        style: q.style,
    }
}

fn select(direct: &[Scored], mode: Selection, rng: &mut ChaCha8Rng) -> Scored {
    match mode {
        Selection::Best => direct[0],
        Selection::Sample => *direct
                .choose_weighted(rng, |s| 1.0 / (s.error + 1e-6))
                .expect("nonempty with positive weights"),
    }
}

fn search(
    g: &GalleryIndex,
    q: &Query,
    budget: f64,
    depth: usize,
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(Vec<Scored>, f64)>> {
    if q.v_p.norm() < 1e-9 {
        return Ok(None);
    }
    if depth >= cfg.min_depth {
        let direct = g.direct_candidates(q, budget)?;
        if !direct.is_empty() {
            let s = select(&direct, cfg.selection, rng);
            return Ok(Some((vec![s], s.error)));
        }
    }
    if depth >= cfg.max_depth {
        return Ok(None);
    }
    let candidates = g.split_candidates(q, budget)?;
    if candidates.is_empty() {
        return Ok(None);
    }
    let mut kept: Vec<Scored> = candidates
        .choose_multiple_weighted(rng, cfg.k, |s| 1.0 / (s.error + 1e-6))
        .map_err(|e| Error::InvalidSpec(format!("branch sampling: {e}")))?
        .copied()
        .collect();
    g.sort(&mut kept);
    for y in kept {
        let rest = subtract(q, &y.aligned);
        if let Some((mut tail, e)) = search(g, &rest, budget - y.error, depth + 1, cfg, rng)? {
            tail.insert(0, y);
            return Ok(Some((tail, e + y.error)));
        }
    }
    Ok(None)
}

/// Chains gallery trajectories from the query start to its end. `None`
/// when no chain fits the error budget within the depth limit.
pub fn tcs(g: &GalleryIndex, q: &Query, cfg: &SearchConfig) -> Result<Option<SearchResult>> {
    cfg.validate()?;
    if q.v_p.norm() < 1e-9 {
        return Err(Error::ZeroDisplacement);
    }
    q.o_s.normalized()?;
    q.o_e.normalized()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let Some((links, charged)) = search(g, q, cfg.alpha, 1, cfg, &mut rng)? else {
        return Ok(None);
    };
    let mut start = Vec2::ZERO;
    let mut chain = Vec::with_capacity(links.len());
    for s in &links {
        chain.push(Placed {
            index: s.index,
            trajectory: g.trajectories[s.index],
            rotation: s.rotation,
            start,
        });
        start += s.aligned.v_p;
    }
    let aligned: Vec<AtomicTrajectory> = links.iter().map(|s| s.aligned).collect();
    let err = error(&aligned, q)?;
    let result = SearchResult {
        chain,
        error: err,
        charged,
    };
    // Both guarantees hold by construction; keep them checked.
    if err > cfg.alpha + 1e-9 || (result.end() - q.v_p).norm() > g.config.bin_width + 1e-9 {
        return Err(Error::InvalidSpec(format!(
            "search produced an out-of-tolerance chain (error {err}, closure {})",
            (result.end() - q.v_p).norm()
        )));
    }
    Ok(Some(result))
}

/// Re-places a chain given by trajectory ids along the query direction, as
/// the search would. `None` when an id is not in the gallery.
pub fn place_chain(
    g: &GalleryIndex,
    ids: &[(usize, usize)],
    q: &Query,
) -> Result<Option<SearchResult>> {
    if ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut chain = Vec::with_capacity(ids.len());
    let mut aligned = Vec::with_capacity(ids.len());
    let mut start = Vec2::ZERO;
    for id in ids {
        let Some(index) = g.trajectories.iter().position(|t| t.id == *id) else {
            return Ok(None);
        };
        let t = g.trajectories[index];
        let rotation = super::atomic::align_angle(&t, q.v_p)?;
        let a = t.rotated(rotation);
        chain.push(Placed {
            index,
            trajectory: t,
            rotation,
            start,
        });
        start += a.v_p;
        aligned.push(a);
    }
    let err = error(&aligned, q)?;
    Ok(Some(SearchResult {
        chain,
        error: err,
        charged: err,
    }))
}

/// A candidate chain with its duration label among the returned set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub result: SearchResult,
    pub label: DurationLabel,
}

/// Up to `n` distinct chains from `attempts` seeded sampling searches, in
/// ascending duration, labeled fast/medium/slow among themselves.
///
/// Attempts cycle the minimum chain length through 1, 2 and 3 links so that
/// a query with direct matches still yields multi-link alternatives.
pub fn candidates(
    g: &GalleryIndex,
    q: &Query,
    cfg: &SearchConfig,
    n: usize,
    attempts: usize,
) -> Result<Vec<Candidate>> {
    let mut found: Vec<SearchResult> = Vec::new();
    for a in 0..attempts.max(n) {
        if found.len() >= n {
            break;
        }
        let c = SearchConfig {
            seed: cfg.seed.wrapping_add(a as u64),
            selection: if a == 0 { cfg.selection } else { Selection::Sample },
            min_depth: (cfg.min_depth + a % 3).min(cfg.max_depth),
            ..cfg.clone()
        };
        if let Some(r) = tcs(g, q, &c)? {
            if !found.iter().any(|f| f.ids() == r.ids()) {
                found.push(r);
            }
        }
    }
    found.sort_by(|a, b| a.duration().cmp(&b.duration()).then(a.error.total_cmp(&b.error)));
    let labels = cluster_durations(&found.iter().map(|r| r.duration()).collect::<Vec<_>>()).labels;
    Ok(found
        .into_iter()
        .zip(labels)
        .map(|(result, label)| Candidate { result, label })
        .collect())
}

/// Per-frame root path of a chain in the query frame, starting at the origin.
pub fn chain_path(g: &GalleryIndex, r: &SearchResult) -> (Vec<Vec2>, Vec<Vec2>) {
    let mut pts = vec![Vec2::ZERO];
    let mut dirs = Vec::new();
    for (n, p) in r.chain.iter().enumerate() {
        let (path, facings) = g.track.relative_path(&p.trajectory);
        if n == 0 {
            dirs.push(rotate2d(facings[0], p.rotation));
        }
        for (pt, f) in path.iter().zip(&facings).skip(1) {
            pts.push(p.start + rotate2d(*pt, p.rotation));
            dirs.push(rotate2d(*f, p.rotation));
        }
    }
    (pts, dirs)
}

/// World-space guidance for a chain found for a query starting at `origin`.
/// With `end`, the closure residual is spread linearly along the path so the
/// last point lands on it.
pub fn chain_guidance(g: &GalleryIndex, r: &SearchResult, origin: Vec2, end: Option<Vec2>) -> Guidance {
    let (pts, facings) = chain_path(g, r);
    let n = pts.len() - 1;
    let mut points: Vec<Vec2> = pts.iter().map(|&p| p + origin).collect();
    if let Some(e) = end {
        let residual = e - points[n];
        for (i, p) in points.iter_mut().enumerate() {
            *p += residual.scale(i as f64 / n.max(1) as f64);
        }
    }
    Guidance { points, facings }
}

/// Mean distance between two polylines resampled to the same number of points.
pub fn polyline_deviation(a: &[Vec2], b: &[Vec2], samples: usize) -> f64 {
    let at = |p: &[Vec2], s: f64| {
        let x = s * (p.len() - 1) as f64;
        let i = (x.floor() as usize).min(p.len() - 1);
        let j = (i + 1).min(p.len() - 1);
        let t = x - i as f64;
        p[i].scale(1.0 - t) + p[j].scale(t)
    };
    let n = samples.max(2);
    (0..n)
        .map(|k| {
            let s = k as f64 / (n - 1) as f64;
            (at(a, s) - at(b, s)).norm()
        })
        .sum::<f64>()
        / n as f64
}

/// Start-facing mismatch used to rank split candidates.
pub fn starting_error(y: &AtomicTrajectory, q: &Query) -> Result<f64> {
    angle2d(y.o_s, q.o_s)
}
