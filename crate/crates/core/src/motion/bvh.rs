//! BVH (BioVision hierarchy) reading and writing.
//!
//! Rotation channels are intrinsic Euler angles in degrees applied in the
//! order they are listed. Root position channels are added to the root
//! offset. Position channels on non-root joints are folded into the joint
//! offset using the first frame's values.

use std::fmt::Write as _;

use super::clip::MotionClip;
use super::skeleton::{Axis, Joint, Skeleton};
use crate::error::{Error, Result};
use crate::rotmath::{Mat3, Quat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Pos(Axis),
    Rot(Axis),
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

struct Tokens<'a> {
    toks: Vec<Token<'a>>,
    pos: usize,
    last: (usize, usize),
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut toks = Vec::new();
        for (li, line) in text.lines().enumerate() {
            let mut start = None;
            for (ci, ch) in line.char_indices().chain(std::iter::once((line.len(), ' '))) {
                if ch.is_whitespace() {
                    if let Some(s) = start.take() {
                        toks.push(Token {
                            text: &line[s..ci],
                            line: li + 1,
                            column: s + 1,
                        });
                    }
                } else if start.is_none() {
                    start = Some(ci);
                }
            }
        }
        let last = toks.last().map(|t| (t.line, t.column)).unwrap_or((1, 1));
        Tokens { toks, pos: 0, last }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        let (line, column) = self
            .toks
            .get(self.pos.saturating_sub(1).min(self.toks.len().saturating_sub(1)))
            .map(|t| (t.line, t.column))
            .unwrap_or(self.last);
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(|t| t.text)
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.text)
            }
            None => {
                let (line, column) = self.last;
                Err(Error::Parse {
                    line,
                    column,
                    message: "unexpected end of input".into(),
                })
            }
        }
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let t = self.next()?;
        if t != word {
            return Err(self.err(format!("expected `{word}`, found `{t}`")));
        }
        Ok(())
    }

    fn number(&mut self) -> Result<f64> {
        let t = self.next()?;
        t.parse::<f64>()
            .map_err(|_| self.err(format!("expected a number, found `{t}`")))
    }

    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.number()?, self.number()?, self.number()?))
    }
}

struct RawJoint {
    name: String,
    parent: Option<usize>,
    offset: Vec3,
    channels: Vec<Channel>,
    end_site: Option<Vec3>,
}

fn parse_channel(tokens: &Tokens, word: &str) -> Result<Channel> {
    let ch = match word {
        "Xposition" => Channel::Pos(Axis::X),
        "Yposition" => Channel::Pos(Axis::Y),
        "Zposition" => Channel::Pos(Axis::Z),
        "Xrotation" => Channel::Rot(Axis::X),
        "Yrotation" => Channel::Rot(Axis::Y),
        "Zrotation" => Channel::Rot(Axis::Z),
        other => return Err(tokens.err(format!("unknown channel `{other}`"))),
    };
    Ok(ch)
}

fn parse_joint(tokens: &mut Tokens, parent: Option<usize>, out: &mut Vec<RawJoint>) -> Result<()> {
    let name = tokens.next()?.to_string();
    tokens.expect("{")?;
    tokens.expect("OFFSET")?;
    let offset = tokens.vec3()?;
    tokens.expect("CHANNELS")?;
    let count = tokens.number()?;
    if count.fract() != 0.0 || !(0.0..=6.0).contains(&count) {
        return Err(tokens.err(format!("bad channel count {count}")));
    }
    let mut channels = Vec::new();
    for _ in 0..count as usize {
        let w = tokens.next()?;
        channels.push(parse_channel(tokens, w)?);
    }
    let index = out.len();
    out.push(RawJoint {
        name,
        parent,
        offset,
        channels,
        end_site: None,
    });
    loop {
        match tokens.next()? {
            "JOINT" => parse_joint(tokens, Some(index), out)?,
            "End" => {
                tokens.expect("Site")?;
                tokens.expect("{")?;
                tokens.expect("OFFSET")?;
                let off = tokens.vec3()?;
                tokens.expect("}")?;
                out[index].end_site = Some(off);
            }
            "}" => return Ok(()),
            other => return Err(tokens.err(format!("unexpected `{other}` in joint block"))),
        }
    }
}

fn axis_layout(raw: &RawJoint) -> Result<([Axis; 3], Option<[Axis; 3]>)> {
    let unsupported = || Error::UnsupportedChannel {
        joint: raw.name.clone(),
        channels: format!("{:?}", raw.channels),
    };
    let rots = |chs: &[Channel]| -> Option<[Axis; 3]> {
        let mut out = [Axis::X; 3];
        for (o, c) in out.iter_mut().zip(chs) {
            match c {
                Channel::Rot(a) => *o = *a,
                Channel::Pos(_) => return None,
            }
        }
        (out[0] != out[1] && out[1] != out[2] && out[0] != out[2]).then_some(out)
    };
    let pos = |chs: &[Channel]| -> Option<[Axis; 3]> {
        let mut out = [Axis::X; 3];
        for (o, c) in out.iter_mut().zip(chs) {
            match c {
                Channel::Pos(a) => *o = *a,
                Channel::Rot(_) => return None,
            }
        }
        (out[0] != out[1] && out[1] != out[2] && out[0] != out[2]).then_some(out)
    };
    match raw.channels.len() {
        3 => Ok((rots(&raw.channels).ok_or_else(unsupported)?, None)),
        6 => {
            let p = pos(&raw.channels[..3]).ok_or_else(unsupported)?;
            let r = rots(&raw.channels[3..]).ok_or_else(unsupported)?;
            Ok((r, Some(p)))
        }
        _ => Err(unsupported()),
    }
}

pub fn euler_to_quat(order: [Axis; 3], degrees: [f64; 3]) -> Quat {
    order
        .iter()
        .zip(degrees)
        .fold(Quat::IDENTITY, |acc, (axis, deg)| {
            acc * Quat::from_axis_angle(axis.unit(), deg.to_radians())
        })
}

fn axis_index(a: Axis) -> usize {
    match a {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::Z => 2,
    }
}

/// Inverse of [`euler_to_quat`] for Tait-Bryan orders, in degrees.
pub fn quat_to_euler(order: [Axis; 3], q: Quat) -> [f64; 3] {
    let Mat3(m) = q.normalized().to_matrix();
    let (i, j, k) = (axis_index(order[0]), axis_index(order[1]), axis_index(order[2]));
    let sign = if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };
    let sb = (sign * m[i][k]).clamp(-1.0, 1.0);
    let beta = sb.asin();
    let (alpha, gamma) = if sb.abs() < 1.0 - 1e-10 {
        (
            (-sign * m[j][k]).atan2(m[k][k]),
            (-sign * m[i][j]).atan2(m[i][i]),
        )
    } else {
        ((sign * m[k][j]).atan2(m[j][j]), 0.0)
    };
    [alpha.to_degrees(), beta.to_degrees(), gamma.to_degrees()]
}

pub fn parse_bvh(text: &str) -> Result<MotionClip> {
    let mut tokens = Tokens::new(text);
    tokens.expect("HIERARCHY")?;
    tokens.expect("ROOT")?;
    let mut raw = Vec::new();
    parse_joint(&mut tokens, None, &mut raw)?;
    if tokens.peek() == Some("ROOT") {
        return Err(tokens.err("multiple roots are not supported"));
    }
    tokens.expect("MOTION")?;
    tokens.expect("Frames:")?;
    let frames = tokens.number()?;
    if frames.fract() != 0.0 || frames < 0.0 {
        return Err(tokens.err(format!("bad frame count {frames}")));
    }
    let frames = frames as usize;
    tokens.expect("Frame")?;
    tokens.expect("Time:")?;
    let frame_time = tokens.number()?;
    if !(frame_time > 0.0) {
        return Err(tokens.err(format!("frame time must be positive, got {frame_time}")));
    }

    let layouts = raw.iter().map(axis_layout).collect::<Result<Vec<_>>>()?;
    let nj = raw.len();
    let mut roots = Vec::with_capacity(frames);
    let mut rots = Vec::with_capacity(frames * nj);
    let mut first_positions: Vec<Option<Vec3>> = vec![None; nj];
    for f in 0..frames {
        for (j, (order, pos_layout)) in layouts.iter().enumerate() {
            if let Some(pl) = pos_layout {
                let mut p = [0.0; 3];
                for axis in pl {
                    p[axis_index(*axis)] = tokens.number()?;
                }
                let p = Vec3::from_array(p);
                if j == 0 {
                    roots.push(p);
                } else if f == 0 {
                    first_positions[j] = Some(p);
                }
            } else if j == 0 {
                roots.push(Vec3::ZERO);
            }
            let angles = [tokens.number()?, tokens.number()?, tokens.number()?];
            rots.push(euler_to_quat(*order, angles));
        }
    }
    if let Some(extra) = tokens.peek() {
        return Err(tokens.err(format!("trailing data `{extra}` after {frames} frames")));
    }

    let joints = raw
        .into_iter()
        .zip(&layouts)
        .enumerate()
        .map(|(j, (r, (order, pos)))| Joint {
            offset: first_positions[j].unwrap_or(r.offset),
            name: r.name,
            parent: r.parent,
            rotation_order: *order,
            has_position: pos.is_some(),
            end_site: r.end_site,
        })
        .collect();
    let skeleton = Skeleton::new(joints)?;
    MotionClip::new(skeleton, frame_time, roots, rots, 0)
}

fn write_joint(out: &mut String, s: &Skeleton, j: usize, depth: usize) {
    let joint = &s.joints()[j];
    let ind = "\t".repeat(depth);
    let kw = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
    let o = joint.offset;
    let _ = writeln!(out, "{ind}{kw} {}", joint.name);
    let _ = writeln!(out, "{ind}{{");
    let _ = writeln!(out, "{ind}\tOFFSET {:.6} {:.6} {:.6}", o.x, o.y, o.z);
    let rot: Vec<String> = joint
        .rotation_order
        .iter()
        .map(|a| format!("{}rotation", a.letter()))
        .collect();
    if joint.has_position {
        let _ = writeln!(
            out,
            "{ind}\tCHANNELS 6 Xposition Yposition Zposition {}",
            rot.join(" ")
        );
    } else {
        let _ = writeln!(out, "{ind}\tCHANNELS 3 {}", rot.join(" "));
    }
    for c in (j + 1)..s.len() {
        if s.parent(c) == Some(j) {
            write_joint(out, s, c, depth + 1);
        }
    }
    if let Some(e) = joint.end_site {
        let _ = writeln!(out, "{ind}\tEnd Site");
        let _ = writeln!(out, "{ind}\t{{");
        let _ = writeln!(out, "{ind}\t\tOFFSET {:.6} {:.6} {:.6}", e.x, e.y, e.z);
        let _ = writeln!(out, "{ind}\t}}");
    }
    let _ = writeln!(out, "{ind}}}");
}

/// Depth-first joint order of the written hierarchy.
fn dfs_order(s: &Skeleton) -> Vec<usize> {
    fn visit(s: &Skeleton, j: usize, out: &mut Vec<usize>) {
        out.push(j);
        for c in (j + 1)..s.len() {
            if s.parent(c) == Some(j) {
                visit(s, c, out);
            }
        }
    }
    let mut out = Vec::with_capacity(s.len());
    visit(s, 0, &mut out);
    out
}

pub fn write_bvh(clip: &MotionClip) -> String {
    let s = &clip.skeleton;
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, s, 0, 0);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", clip.num_frames());
    let _ = writeln!(out, "Frame Time: {}", clip.frame_time);
    let order = dfs_order(s);
    for f in 0..clip.num_frames() {
        let local = clip.local(f);
        let mut vals: Vec<String> = Vec::with_capacity(s.len() * 6);
        for &j in &order {
            let joint = &s.joints()[j];
            if joint.has_position {
                let p = if j == 0 {
                    clip.root_positions[f]
                } else {
                    joint.offset
                };
                vals.extend([p.x, p.y, p.z].iter().map(|v| format!("{v:.6}")));
            }
            let e = quat_to_euler(joint.rotation_order, local[j]);
            vals.extend(e.iter().map(|v| format!("{v:.6}")));
        }
        let _ = writeln!(out, "{}", vals.join(" "));
    }
    out
}
