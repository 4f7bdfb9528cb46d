use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Index of a named frame inside a [`RobotModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameId(pub(crate) usize);

impl FrameId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub mass: f64,
    /// Rotational inertia about the link CoM, link axes.
    pub inertia: Matrix3<f64>,
    /// CoM offset in the link frame.
    pub com: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lower: f64,
    pub upper: f64,
}

impl Range {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub position: Range,
    pub velocity: Range,
    pub torque: Range,
}

/// Revolute joint. The child frame is `parent * origin * Rot(axis, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: String,
    pub child: String,
    pub axis: Unit<Vector3<f64>>,
    pub origin: Isometry3<f64>,
    pub limits: JointLimits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    pub link: String,
    pub origin: Isometry3<f64>,
}

/// A point where the ground may push on the robot, given in the
/// coordinates of a named frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPoint {
    pub frame: String,
    pub name: String,
    pub position: Vector3<f64>,
}

/// Kinematic tree with a floating base and revolute joints.
///
/// Joint `i` owns generalized coordinate `6 + i` of the velocity vector;
/// the first six entries are the base linear and angular velocity, both in
/// inertial coordinates.
#[derive(Debug, Clone)]
pub struct RobotModel {
    name: String,
    links: Vec<Link>,
    joints: Vec<Joint>,
    frames: Vec<Frame>,
    contact_points: Vec<ContactPoint>,
    base: usize,
    // derived topology
    pub(crate) joint_parent: Vec<usize>,
    pub(crate) joint_child: Vec<usize>,
    pub(crate) joint_order: Vec<usize>,
    pub(crate) link_support: Vec<Vec<usize>>,
    pub(crate) frame_link: Vec<usize>,
    pub(crate) contact_frame: Vec<FrameId>,
    total_mass: f64,
}

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        base: &str,
        links: Vec<Link>,
        joints: Vec<Joint>,
        frames: Vec<Frame>,
        contact_points: Vec<ContactPoint>,
    ) -> Result<Self, ModelError> {
        let invalid = |msg: String| Err(ModelError::InvalidModel(msg));
        let mut link_index = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.name.clone(), i).is_some() {
                return invalid(format!("duplicate link '{}'", l.name));
            }
            if !(l.mass.is_finite() && l.mass > 0.0) {
                return invalid(format!("link '{}' must have positive mass", l.name));
            }
            let sym = (l.inertia - l.inertia.transpose()).abs().max();
            if sym > 1e-12 * (1.0 + l.inertia.abs().max()) {
                return invalid(format!("link '{}' inertia is not symmetric", l.name));
            }
            if l.inertia.cholesky().is_none() {
                return invalid(format!("link '{}' inertia is not positive definite", l.name));
            }
            if !l.com.iter().all(|x| x.is_finite()) {
                return invalid(format!("link '{}' CoM is not finite", l.name));
            }
        }
        let Some(&base_idx) = link_index.get(base) else {
            return invalid(format!("base link '{base}' does not exist"));
        };

        let mut joint_parent = Vec::with_capacity(joints.len());
        let mut joint_child = Vec::with_capacity(joints.len());
        let mut link_joint = vec![None; links.len()];
        let mut joint_names = HashMap::new();
        for (j, joint) in joints.iter().enumerate() {
            if joint_names.insert(joint.name.clone(), j).is_some() {
                return invalid(format!("duplicate joint '{}'", joint.name));
            }
            let (Some(&p), Some(&c)) = (link_index.get(&joint.parent), link_index.get(&joint.child)) else {
                return invalid(format!("joint '{}' references an unknown link", joint.name));
            };
            if c == base_idx {
                return invalid(format!("joint '{}' has the base as child", joint.name));
            }
            if link_joint[c].is_some() {
                return invalid(format!("link '{}' has more than one parent", joint.child));
            }
            link_joint[c] = Some(j);
            joint_parent.push(p);
            joint_child.push(c);
            let lim = &joint.limits;
            if !(lim.position.lower < lim.position.upper) {
                return invalid(format!("joint '{}': position limits out of order", joint.name));
            }
            if !(lim.velocity.lower < 0.0 && 0.0 < lim.velocity.upper) {
                return invalid(format!("joint '{}': velocity limits must bracket 0", joint.name));
            }
            if !(lim.torque.lower < 0.0 && 0.0 < lim.torque.upper) {
                return invalid(format!("joint '{}': torque limits must bracket 0", joint.name));
            }
        }
        for (i, l) in links.iter().enumerate() {
            if i != base_idx && link_joint[i].is_none() {
                return invalid(format!("link '{}' is not connected to the tree", l.name));
            }
        }

        // Topological order from the base; a cycle leaves links unreached.
        let mut joint_order = Vec::with_capacity(joints.len());
        let mut link_support: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        let mut frontier = vec![base_idx];
        let mut reached = vec![false; links.len()];
        reached[base_idx] = true;
        while let Some(l) = frontier.pop() {
            for j in 0..joints.len() {
                if joint_parent[j] == l {
                    let c = joint_child[j];
                    if reached[c] {
                        return invalid("kinematic loop detected".into());
                    }
                    reached[c] = true;
                    let mut support = link_support[l].clone();
                    support.push(j);
                    link_support[c] = support;
                    joint_order.push(j);
                    frontier.push(c);
                }
            }
        }
        if joint_order.len() != joints.len() {
            return invalid("kinematic loop detected".into());
        }

        let mut frame_names = HashMap::new();
        let mut frame_link = Vec::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            if frame_names.insert(f.name.clone(), i).is_some() {
                return invalid(format!("duplicate frame '{}'", f.name));
            }
            let Some(&l) = link_index.get(&f.link) else {
                return invalid(format!("frame '{}' references unknown link '{}'", f.name, f.link));
            };
            frame_link.push(l);
        }
        let mut contact_frame = Vec::with_capacity(contact_points.len());
        for cp in &contact_points {
            let Some(&f) = frame_names.get(&cp.frame) else {
                return invalid(format!("contact point '{}' references unknown frame", cp.name));
            };
            contact_frame.push(FrameId(f));
        }

        let total_mass = links.iter().map(|l| l.mass).sum();
        Ok(Self {
            name: name.into(),
            links,
            joints,
            frames,
            contact_points,
            base: base_idx,
            joint_parent,
            joint_child,
            joint_order,
            link_support,
            frame_link,
            contact_frame,
            total_mass,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of actuated joints, `n`.
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Size of the generalized velocity, `n + 6`.
    pub fn nv(&self) -> usize {
        self.joints.len() + 6
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn contact_points(&self) -> &[ContactPoint] {
        &self.contact_points
    }

    pub fn base_link(&self) -> usize {
        self.base
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn frame_id(&self, name: &str) -> Result<FrameId, ModelError> {
        self.frames
            .iter()
            .position(|f| f.name == name)
            .map(FrameId)
            .ok_or_else(|| ModelError::UnknownFrame(name.to_string()))
    }

    pub fn frame(&self, id: FrameId) -> &Frame {
        &self.frames[id.0]
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Frame that carries contact point `i`.
    pub fn contact_frame(&self, i: usize) -> FrameId {
        self.contact_frame[i]
    }

    pub(crate) fn check_frame(&self, id: FrameId) -> Result<(), ModelError> {
        if id.0 < self.frames.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownFrame(format!("#{}", id.0)))
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    /// Sagittal-plane humanoid at desk scale (≈30 kg, ≈1 m).
    ///
    /// Both legs are merged into a single chain (hip, knee, ankle pitch) and
    /// the upper body is lumped into the torso, which is the floating base.
    /// All joint axes are parallel to the inertial y axis. The merged foot
    /// carries the `left_foot` and `right_foot` sole frames, 7 cm either side
    /// of the sagittal plane.
    pub fn icub_sagittal() -> Self {
        let torso_lower = (9.0, Vector3::new(0.0, 0.0, 0.10), box_inertia(9.0, 0.16, 0.20, 0.20));
        let upper_body = (14.0, Vector3::new(0.0, 0.0, 0.32), box_inertia(14.0, 0.18, 0.24, 0.36));
        let (torso_mass, torso_com, torso_inertia) = merge_bodies(&[torso_lower, upper_body]);

        let links = vec![
            Link { name: "torso".into(), mass: torso_mass, inertia: torso_inertia, com: torso_com },
            Link {
                name: "thigh".into(),
                mass: 3.5,
                inertia: rod_inertia(3.5, 0.22, 0.045),
                com: Vector3::new(0.0, 0.0, -0.11),
            },
            Link {
                name: "shank".into(),
                mass: 2.5,
                inertia: rod_inertia(2.5, 0.22, 0.04),
                com: Vector3::new(0.0, 0.0, -0.11),
            },
            Link {
                name: "foot".into(),
                mass: 0.8,
                inertia: box_inertia(0.8, 0.16, 0.19, 0.04),
                com: Vector3::new(0.02, 0.0, -0.035),
            },
        ];
        let y = Vector3::y_axis();
        let joint = |name: &str, parent: &str, child: &str, z: f64, pos: (f64, f64)| Joint {
            name: name.into(),
            parent: parent.into(),
            child: child.into(),
            axis: y,
            origin: Isometry3::translation(0.0, 0.0, z),
            limits: JointLimits {
                position: Range::new(pos.0, pos.1),
                velocity: Range::new(-12.0, 12.0),
                torque: Range::new(-150.0, 150.0),
            },
        };
        let joints = vec![
            joint("hip_pitch", "torso", "thigh", 0.0, (-2.2, 0.6)),
            joint("knee", "thigh", "shank", -0.22, (0.0, 2.4)),
            joint("ankle_pitch", "shank", "foot", -0.22, (-0.9, 0.7)),
        ];
        let frame = |name: &str, link: &str, x: f64, y: f64, z: f64| Frame {
            name: name.into(),
            link: link.into(),
            origin: Isometry3::translation(x, y, z),
        };
        let frames = vec![
            frame("torso", "torso", 0.0, 0.0, 0.0),
            frame("left_foot", "foot", 0.03, 0.07, -0.05),
            frame("right_foot", "foot", 0.03, -0.07, -0.05),
        ];
        let mut contact_points = Vec::new();
        for foot in ["left_foot", "right_foot"] {
            for (name, x) in [("heel", -0.07), ("toe", 0.07)] {
                contact_points.push(ContactPoint {
                    frame: foot.into(),
                    name: name.into(),
                    position: Vector3::new(x, 0.0, 0.0),
                });
            }
        }
        Self::new("icub-sagittal", "torso", links, joints, frames, contact_points).expect("built-in model is valid")
    }
}

fn box_inertia(m: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(
        m * (y * y + z * z) / 12.0,
        m * (x * x + z * z) / 12.0,
        m * (x * x + y * y) / 12.0,
    ))
}

fn rod_inertia(m: f64, length: f64, radius: f64) -> Matrix3<f64> {
    let t = m * (3.0 * radius * radius + length * length) / 12.0;
    Matrix3::from_diagonal(&Vector3::new(t, t, 0.5 * m * radius * radius))
}

fn merge_bodies(parts: &[(f64, Vector3<f64>, Matrix3<f64>)]) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let mass: f64 = parts.iter().map(|p| p.0).sum();
    let com = parts.iter().map(|p| p.0 * p.1).sum::<Vector3<f64>>() / mass;
    let inertia = parts.iter().fold(Matrix3::zeros(), |acc, (m, c, i)| {
        let d = c - com;
        acc + i + *m * (Matrix3::identity() * d.dot(&d) - d * d.transpose())
    });
    (mass, com, inertia)
}

// ---------------------------------------------------------------------------
// JSON file schema

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default)]
    name: String,
    base: String,
    links: Vec<LinkFile>,
    joints: Vec<JointFile>,
    frames: Vec<FrameFile>,
    contact_points: Vec<ContactPointFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    name: String,
    mass: f64,
    inertia: [[f64; 3]; 3],
    com: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OriginFile {
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    name: String,
    parent: String,
    child: String,
    axis: [f64; 3],
    origin: OriginFile,
    position_limits: [f64; 2],
    velocity_limits: [f64; 2],
    torque_limits: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameFile {
    name: String,
    link: String,
    origin: OriginFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactPointFile {
    frame: String,
    name: String,
    position: [f64; 3],
}

impl OriginFile {
    fn to_isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.xyz;
        let [r, p, yaw] = self.rpy;
        Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::from_euler_angles(r, p, yaw))
    }

    fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let t = iso.translation.vector;
        let (r, p, y) = iso.rotation.euler_angles();
        Self { xyz: [t.x, t.y, t.z], rpy: [r, p, y] }
    }
}

impl TryFrom<ModelFile> for RobotModel {
    type Error = ModelError;

    fn try_from(file: ModelFile) -> Result<Self, ModelError> {
        let links = file
            .links
            .into_iter()
            .map(|l| Link {
                name: l.name,
                mass: l.mass,
                inertia: Matrix3::from_fn(|r, c| l.inertia[r][c]),
                com: Vector3::from(l.com),
            })
            .collect();
        let mut joints = Vec::with_capacity(file.joints.len());
        for j in file.joints {
            let axis = Vector3::from(j.axis);
            if (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(ModelError::InvalidModel(format!("joint '{}' axis is not unit-norm", j.name)));
            }
            joints.push(Joint {
                origin: j.origin.to_isometry(),
                name: j.name,
                parent: j.parent,
                child: j.child,
                axis: Unit::new_unchecked(axis),
                limits: JointLimits {
                    position: Range::new(j.position_limits[0], j.position_limits[1]),
                    velocity: Range::new(j.velocity_limits[0], j.velocity_limits[1]),
                    torque: Range::new(j.torque_limits[0], j.torque_limits[1]),
                },
            });
        }
        let frames = file
            .frames
            .into_iter()
            .map(|f| Frame { origin: f.origin.to_isometry(), name: f.name, link: f.link })
            .collect();
        let contact_points = file
            .contact_points
            .into_iter()
            .map(|c| ContactPoint { frame: c.frame, name: c.name, position: Vector3::from(c.position) })
            .collect();
        RobotModel::new(file.name, &file.base, links, joints, frames, contact_points)
    }
}

impl From<&RobotModel> for ModelFile {
    fn from(m: &RobotModel) -> Self {
        Self {
            name: m.name.clone(),
            base: m.links[m.base].name.clone(),
            links: m
                .links
                .iter()
                .map(|l| LinkFile {
                    name: l.name.clone(),
                    mass: l.mass,
                    inertia: [0, 1, 2].map(|r| [0, 1, 2].map(|c| l.inertia[(r, c)])),
                    com: l.com.into(),
                })
                .collect(),
            joints: m
                .joints
                .iter()
                .map(|j| JointFile {
                    name: j.name.clone(),
                    parent: j.parent.clone(),
                    child: j.child.clone(),
                    axis: j.axis.into_inner().into(),
                    origin: OriginFile::from_isometry(&j.origin),
                    position_limits: [j.limits.position.lower, j.limits.position.upper],
                    velocity_limits: [j.limits.velocity.lower, j.limits.velocity.upper],
                    torque_limits: [j.limits.torque.lower, j.limits.torque.upper],
                })
                .collect(),
            frames: m
                .frames
                .iter()
                .map(|f| FrameFile {
                    name: f.name.clone(),
                    link: f.link.clone(),
                    origin: OriginFile::from_isometry(&f.origin),
                })
                .collect(),
            contact_points: m
                .contact_points
                .iter()
                .map(|c| ContactPointFile { frame: c.frame.clone(), name: c.name.clone(), position: c.position.into() })
                .collect(),
        }
    }
}
