use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotmath::Vec3;

/// Euler rotation axis as it appears in a BVH channel list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::X,
            Axis::Y => Vec3::Y,
            Axis::Z => Vec3::Z,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    /// `None` for the root.
    pub parent: Option<usize>,
    pub offset: Vec3,
    /// Euler order of the rotation channels, outermost first.
    pub rotation_order: [Axis; 3],
    pub has_position: bool,
    pub end_site: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    joints: Vec<Joint>,
}

pub const LAFAN_JOINTS: [&str; 22] = [
    "Hips",
    "LeftUpLeg",
    "LeftLeg",
    "LeftFoot",
    "LeftToe",
    "RightUpLeg",
    "RightLeg",
    "RightFoot",
    "RightToe",
    "Spine",
    "Spine1",
    "Spine2",
    "Neck",
    "Head",
    "LeftShoulder",
    "LeftArm",
    "LeftForeArm",
    "LeftHand",
    "RightShoulder",
    "RightArm",
    "RightForeArm",
    "RightHand",
];

impl Skeleton {
    /// Validates a joint list: a single root at index 0 and parents preceding children.
    pub fn new(joints: Vec<Joint>) -> Result<Skeleton> {
        if joints.is_empty() {
            return Err(Error::InvalidSpec("skeleton has no joints".into()));
        }
        for (i, j) in joints.iter().enumerate() {
            match (i, j.parent) {
                (0, None) => {}
                (0, Some(_)) => {
                    return Err(Error::InvalidSpec("first joint must be the root".into()))
                }
                (_, None) => {
                    return Err(Error::InvalidSpec(format!("second root `{}`", j.name)))
                }
                (_, Some(p)) if p >= i => {
                    return Err(Error::InvalidSpec(format!(
                        "joint `{}` precedes its parent",
                        j.name
                    )))
                }
                _ => {}
            }
        }
        Ok(Skeleton { joints })
    }

    /// The 22-joint humanoid used by the synthetic generator, standing with
    /// toes on the ground, facing +z, left side on +x.
    pub fn humanoid() -> Skeleton {
        let zxy = [Axis::Z, Axis::X, Axis::Y];
        let spec: [(&str, Option<usize>, [f64; 3]); 22] = [
            ("Hips", None, [0.0, 0.0, 0.0]),
            ("LeftUpLeg", Some(0), [0.1, -0.05, 0.0]),
            ("LeftLeg", Some(1), [0.0, -0.42, 0.0]),
            ("LeftFoot", Some(2), [0.0, -0.40, 0.0]),
            ("LeftToe", Some(3), [0.0, -0.06, 0.13]),
            ("RightUpLeg", Some(0), [-0.1, -0.05, 0.0]),
            ("RightLeg", Some(5), [0.0, -0.42, 0.0]),
            ("RightFoot", Some(6), [0.0, -0.40, 0.0]),
            ("RightToe", Some(7), [0.0, -0.06, 0.13]),
            ("Spine", Some(0), [0.0, 0.1, 0.0]),
            ("Spine1", Some(9), [0.0, 0.12, 0.0]),
            ("Spine2", Some(10), [0.0, 0.12, 0.0]),
            ("Neck", Some(11), [0.0, 0.16, 0.0]),
            ("Head", Some(12), [0.0, 0.1, 0.02]),
            ("LeftShoulder", Some(11), [0.05, 0.12, 0.0]),
            ("LeftArm", Some(14), [0.12, 0.0, 0.0]),
            ("LeftForeArm", Some(15), [0.28, 0.0, 0.0]),
            ("LeftHand", Some(16), [0.25, 0.0, 0.0]),
            ("RightShoulder", Some(11), [-0.05, 0.12, 0.0]),
            ("RightArm", Some(18), [-0.12, 0.0, 0.0]),
            ("RightForeArm", Some(19), [-0.28, 0.0, 0.0]),
            ("RightHand", Some(20), [-0.25, 0.0, 0.0]),
        ];
        let joints = spec
            .iter()
            .map(|(name, parent, off)| Joint {
                name: name.to_string(),
                parent: *parent,
                offset: Vec3::from_array(*off),
                rotation_order: zxy,
                has_position: parent.is_none(),
                end_site: match *name {
                    "LeftToe" | "RightToe" => Some(Vec3::new(0.0, 0.0, 0.05)),
                    "Head" => Some(Vec3::new(0.0, 0.12, 0.0)),
                    "LeftHand" => Some(Vec3::new(0.08, 0.0, 0.0)),
                    "RightHand" => Some(Vec3::new(-0.08, 0.0, 0.0)),
                    _ => None,
                },
            })
            .collect();
        Skeleton::new(joints).expect("humanoid skeleton is well formed")
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.joints[j].parent
    }

    /// Rest-pose position of every joint relative to the root.
    pub fn rest_positions(&self) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = Vec::with_capacity(self.len());
        for j in &self.joints {
            let base = j.parent.map(|p| out[p]).unwrap_or(Vec3::ZERO);
            out.push(base + j.offset);
        }
        out
    }

    /// Height of each joint above the lowest joint in the rest pose.
    pub fn rest_clearance(&self) -> Vec<f64> {
        let rest = self.rest_positions();
        let floor = rest.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        rest.iter().map(|p| p.y - floor).collect()
    }

    /// Index of the left/right counterpart of every joint (itself for
    /// joints on the mid-line), matched by `Left`/`Right` name prefix.
    pub fn mirror_table(&self) -> Result<Vec<usize>> {
        self.joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let counterpart = if let Some(rest) = j.name.strip_prefix("Left") {
                    Some(format!("Right{rest}"))
                } else {
                    j.name.strip_prefix("Right").map(|rest| format!("Left{rest}"))
                };
                match counterpart {
                    None => Ok(i),
                    Some(name) => self
                        .index_of(&name)
                        .ok_or_else(|| Error::IncompletePairing(format!("`{}` has no `{name}`", j.name))),
                }
            })
            .collect()
    }

    pub fn bone_length(&self, j: usize) -> f64 {
        self.joints[j].offset.norm()
    }
}
