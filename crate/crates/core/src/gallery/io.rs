//! Gallery files and line-delimited JSON export.

use std::io::Write;
use std::path::Path;

use serde_json::json;

use super::atomic::{AtomicTrajectory, GalleryConfig, RootTrack};
use super::cluster::DurationLabel;
use super::index::{bin_key, GalleryIndex};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::rotmath::Vec2;

pub const KIND: &str = "trajectory-gallery";
pub const VERSION: u32 = 1;

fn flat2(v: impl Iterator<Item = Vec2>) -> Vec<f64> {
    v.flat_map(|p| [p.x, p.y]).collect()
}

fn vec2s(d: &[f64]) -> Vec<Vec2> {
    d.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

pub fn to_container(g: &GalleryIndex) -> Container {
    let n = g.len();
    let mut c = Container::new(
        KIND,
        json!({"version": VERSION, "config": g.config, "trajectories": n}),
    );
    let ts = &g.trajectories;
    c.push_u32(
        "traj/id",
        &[n, 2],
        ts.iter().flat_map(|t| [t.id.0 as u32, t.id.1 as u32]).collect(),
    );
    c.push_f64("traj/o_s", &[n, 2], &flat2(ts.iter().map(|t| t.o_s)));
    c.push_f64("traj/o_e", &[n, 2], &flat2(ts.iter().map(|t| t.o_e)));
    c.push_f64("traj/v_p", &[n, 2], &flat2(ts.iter().map(|t| t.v_p)));
    c.push_u32("traj/style", &[n], ts.iter().map(|t| t.style as u32).collect());
    c.push_u32(
        "traj/bin",
        &[n],
        ts.iter().map(|t| bin_key(t.distance(), g.config.bin_width) as u32).collect(),
    );
    c.push_u32("traj/label", &[n], g.labels.iter().map(|l| l.index()).collect());
    let f = g.track.frames();
    c.push_f64("track/pos", &[f, 2], &flat2(g.track.positions.iter().copied()));
    c.push_f64("track/facing", &[f, 2], &flat2(g.track.facings.iter().copied()));
    let nc = g.track.clip_starts.len();
    c.push_u32("track/clip_start", &[nc], g.track.clip_starts.iter().map(|&s| s as u32).collect());
    c.push_u32("track/clip_style", &[nc], g.track.clip_styles.iter().map(|&s| s as u32).collect());
    c
}

/// Rebuilds the bins from the stored (f32-rounded) displacements; stored
/// labels are kept.
pub fn from_container(c: &Container) -> Result<GalleryIndex> {
    let version = c.metadata.get("version").and_then(|v| v.as_u64());
    if version != Some(VERSION as u64) {
        return Err(Error::Format(format!("unsupported gallery version {version:?}")));
    }
    let config: GalleryConfig = serde_json::from_value(
        c.metadata
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Format("missing gallery config".into()))?,
    )?;
    let (shape, ids) = c.u32s("traj/id")?;
    let n = *shape.first().unwrap_or(&0);
    let o_s = vec2s(&c.f64s("traj/o_s", &[n, 2])?);
    let o_e = vec2s(&c.f64s("traj/o_e", &[n, 2])?);
    let v_p = vec2s(&c.f64s("traj/v_p", &[n, 2])?);
    let (_, style) = c.u32s("traj/style")?;
    let (_, labels) = c.u32s("traj/label")?;
    if ids.len() != 2 * n || style.len() != n || labels.len() != n {
        return Err(Error::Format("trajectory table columns differ in length".into()));
    }
    let pos_arr = c.get("track/pos")?;
    let frames = pos_arr.shape.first().copied().unwrap_or(0);
    let track = RootTrack {
        positions: vec2s(&c.f64s("track/pos", &[frames, 2])?),
        facings: vec2s(&c.f64s("track/facing", &[frames, 2])?),
        clip_starts: c.u32s("track/clip_start")?.1.iter().map(|&s| s as usize).collect(),
        clip_styles: c.u32s("track/clip_style")?.1.iter().map(|&s| s as usize).collect(),
    };
    let trajectories = (0..n)
        .map(|i| AtomicTrajectory {
            id: (ids[2 * i] as usize, ids[2 * i + 1] as usize),
            o_s: o_s[i],
            o_e: o_e[i],
            v_p: v_p[i],
            style: style[i] as usize,
        })
        .collect();
    let mut g = GalleryIndex::new(trajectories, track, config)?;
    g.labels = labels
        .iter()
        .map(|&l| DurationLabel::from_index(l).ok_or_else(|| Error::Format(format!("label {l}"))))
        .collect::<Result<_>>()?;
    Ok(g)
}

pub fn save(path: &Path, g: &GalleryIndex) -> Result<()> {
    to_container(g).save(path)
}

pub fn load(path: &Path) -> Result<GalleryIndex> {
    from_container(&Container::load(path)?.expect_kind(KIND)?)
}

/// One JSON object per trajectory.
pub fn export_jsonl<W: Write>(g: &GalleryIndex, w: &mut W) -> Result<()> {
    for (t, l) in g.trajectories.iter().zip(&g.labels) {
        let line = json!({
            "id": [t.id.0, t.id.1],
            "o_s": [t.o_s.x, t.o_s.y],
            "o_e": [t.o_e.x, t.o_e.y],
            "v_p": [t.v_p.x, t.v_p.y],
            "style": t.style,
            "duration": t.duration(),
            "label": l.as_str(),
        });
        writeln!(w, "{line}")?;
    }
    Ok(())
}
