//! Clip cache files: a set of clips sharing one skeleton.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::clip::MotionClip;
use super::skeleton::Skeleton;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::features::PhaseFrame;
use crate::rotmath::{Quat, Vec3};

pub const KIND: &str = "clip-cache";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ClipMeta {
    name: String,
    style: usize,
    frame_time: f64,
    frames: usize,
    has_phases: bool,
    has_stance: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheMeta {
    version: u32,
    skeleton: Skeleton,
    clips: Vec<ClipMeta>,
}

/// One cached clip plus optional ground-truth stance flags.
#[derive(Debug, Clone)]
pub struct CachedClip {
    pub name: String,
    pub clip: MotionClip,
    pub stance: Option<Vec<bool>>,
}

pub fn to_container(clips: &[CachedClip]) -> Result<Container> {
    let skeleton = clips
        .first()
        .map(|c| c.clip.skeleton.clone())
        .ok_or_else(|| Error::Format("clip cache needs at least one clip".into()))?;
    let mut metas = Vec::new();
    let mut arrays = Vec::new();
    for (i, c) in clips.iter().enumerate() {
        if c.clip.skeleton != skeleton {
            return Err(Error::Format(format!("clip `{}` uses a different skeleton", c.name)));
        }
        let f = c.clip.num_frames();
        let j = c.clip.num_joints();
        let root: Vec<f64> = c.clip.root_positions.iter().flat_map(|p| p.to_array()).collect();
        let rot: Vec<f64> = c.clip.local_rotations.iter().flat_map(|q| q.to_array()).collect();
        arrays.push((format!("clip{i}/root"), vec![f, 3], root));
        arrays.push((format!("clip{i}/rot"), vec![f, j, 4], rot));
        if let Some(ph) = &c.clip.phases {
            let n = ph.first().map(|p| p.channels()).unwrap_or(0);
            let v: Vec<f64> = ph
                .iter()
                .flat_map(|p| p.amplitude.iter().zip(&p.phase).flat_map(|(a, s)| [*a, *s]).collect::<Vec<_>>())
                .collect();
            arrays.push((format!("clip{i}/phase"), vec![f, n, 2], v));
        }
        if let Some(st) = &c.stance {
            let feet = st.len() / f.max(1);
            let v: Vec<f64> = st.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            arrays.push((format!("clip{i}/stance"), vec![f, feet], v));
        }
        metas.push(ClipMeta {
            name: c.name.clone(),
            style: c.clip.style,
            frame_time: c.clip.frame_time,
            frames: f,
            has_phases: c.clip.phases.is_some(),
            has_stance: c.stance.is_some(),
        });
    }
    let meta = CacheMeta {
        version: VERSION,
        skeleton,
        clips: metas,
    };
    let mut out = Container::new(KIND, serde_json::to_value(meta)?);
    for (name, shape, data) in arrays {
        out.push_f64(&name, &shape, &data);
    }
    Ok(out)
}

pub fn from_container(c: &Container) -> Result<Vec<CachedClip>> {
    if c.kind != KIND {
        return Err(Error::Format(format!("expected `{KIND}`, found `{}`", c.kind)));
    }
    let meta: CacheMeta = serde_json::from_value(c.metadata.clone())?;
    if meta.version != VERSION {
        return Err(Error::Format(format!("clip cache version {}", meta.version)));
    }
    let j = meta.skeleton.len();
    let mut out = Vec::with_capacity(meta.clips.len());
    for (i, m) in meta.clips.iter().enumerate() {
        let f = m.frames;
        let root = c.f64s(&format!("clip{i}/root"), &[f, 3])?;
        let rot = c.f64s(&format!("clip{i}/rot"), &[f, j, 4])?;
        let roots = root.chunks_exact(3).map(|v| Vec3::new(v[0], v[1], v[2])).collect();
        let rots = rot
            .chunks_exact(4)
            .map(|v| Quat::new(v[0], v[1], v[2], v[3]).normalized())
            .collect();
        let mut clip = MotionClip::new(meta.skeleton.clone(), m.frame_time, roots, rots, m.style)?;
        if m.has_phases {
            let a = c.get(&format!("clip{i}/phase"))?;
            let n = a.shape.get(1).copied().unwrap_or(0);
            let v = c.f64s(&format!("clip{i}/phase"), &[f, n, 2])?;
            clip.phases = Some(
                v.chunks_exact(n * 2)
                    .map(|row| PhaseFrame {
                        amplitude: row.iter().step_by(2).copied().collect(),
                        phase: row.iter().skip(1).step_by(2).copied().collect(),
                    })
                    .collect(),
            );
        }
        let stance = if m.has_stance {
            let a = c.get(&format!("clip{i}/stance"))?;
            let feet = a.shape.get(1).copied().unwrap_or(0);
            Some(c.f64s(&format!("clip{i}/stance"), &[f, feet])?.iter().map(|&v| v > 0.5).collect())
        } else {
            None
        };
        out.push(CachedClip {
            name: m.name.clone(),
            clip,
            stance,
        });
    }
    Ok(out)
}

pub fn save(path: &Path, clips: &[CachedClip]) -> Result<()> {
    to_container(clips)?.save(path)
}

pub fn load(path: &Path) -> Result<Vec<CachedClip>> {
    from_container(&Container::load(path)?)
}
