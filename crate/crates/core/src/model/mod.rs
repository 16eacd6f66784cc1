//! Immutable robot descriptions: links, joints, feet and loop closures.
//!
//! A [`RobotModel`] is a kinematic tree rooted at the base link. Links are
//! stored depth-first from the base with children in declaration order, and
//! every non-base link `i` is attached to its parent by `joints[i - 1]`.
//! Cycles in the joint graph are rejected; closed chains are expressed by
//! cutting the loop and declaring a [`LoopClosure`] between two frames.

mod urdf;

use std::collections::HashMap;
use std::fmt;

use nalgebra::{Isometry3, Matrix3, SymmetricEigen, Vector3};
use thiserror::Error;

pub use urdf::{load_model, ModelOptions};

/// Tolerance on joint axis norms.
pub const AXIS_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("kinematics error: {0}")]
    Kinematics(String),
    #[error("validation error: {}", format_violations(.0))]
    Validation(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn is_movable(self) -> bool {
        !matches!(self, JointKind::Fixed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    /// kg
    pub mass: f64,
    /// Rotational inertia about the center of mass, in link-frame axes (kg·m²).
    pub inertia: Matrix3<f64>,
    /// Center of mass in the link frame (m).
    pub com_offset: Vector3<f64>,
}

impl Link {
    pub fn new(name: impl Into<String>, mass: f64, inertia: Matrix3<f64>, com: Vector3<f64>) -> Self {
        Link { name: name.into(), mass, inertia, com_offset: com }
    }

    /// A link with no mass, used for frames and kinematic helpers.
    pub fn massless(name: impl Into<String>) -> Self {
        Link::new(name, 0.0, Matrix3::zeros(), Vector3::zeros())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent_link: String,
    pub child_link: String,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    /// Pose of the joint frame in the parent link frame. The child link frame
    /// coincides with the joint frame at zero joint position.
    pub origin: Isometry3<f64>,
    pub position_limits: Option<(f64, f64)>,
    pub effort_limit: Option<f64>,
}

impl Joint {
    pub fn new(
        name: impl Into<String>,
        kind: JointKind,
        parent: impl Into<String>,
        child: impl Into<String>,
        axis: Vector3<f64>,
        origin: Isometry3<f64>,
    ) -> Self {
        Joint {
            name: name.into(),
            kind,
            parent_link: parent.into(),
            child_link: child.into(),
            axis,
            origin,
            position_limits: None,
            effort_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FootGeometry {
    /// Flat sole; contact vertices at `(±length/2, ±width/2, sole_height)`.
    Rectangular { length: f64, width: f64, sole_height: f64 },
    /// Sphere; one contact vertex at its lowest point.
    Spherical { radius: f64, center_offset: Vector3<f64> },
}

impl FootGeometry {
    /// Number of contact vertices the geometry contributes.
    pub fn vertex_count(&self) -> usize {
        match self {
            FootGeometry::Rectangular { .. } => 4,
            FootGeometry::Spherical { .. } => 1,
        }
    }

    /// Foot-frame coordinates of the rectangular sole corners, in index order
    /// `(+,+) (+,-) (-,+) (-,-)` over (x, y).
    pub fn rectangular_corners(length: f64, width: f64, sole_height: f64) -> [Vector3<f64>; 4] {
        let (hx, hy) = (0.5 * length, 0.5 * width);
        [
            Vector3::new(hx, hy, sole_height),
            Vector3::new(hx, -hy, sole_height),
            Vector3::new(-hx, hy, sole_height),
            Vector3::new(-hx, -hy, sole_height),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Foot {
    pub link_name: String,
    pub geometry: FootGeometry,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopClosure {
    pub frame_a: String,
    pub frame_b: String,
}

impl LoopClosure {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        LoopClosure { frame_a: a.into(), frame_b: b.into() }
    }

    pub fn name(&self) -> String {
        format!("{}~{}", self.frame_a, self.frame_b)
    }
}

/// A named frame rigidly attached to a link, e.g. a link fused away through a
/// fixed joint.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    pub link: String,
    pub offset: Isometry3<f64>,
}

/// Unordered robot description, the input to [`RobotModel::new`].
#[derive(Debug, Clone, Default)]
pub struct ModelDescription {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub frames: Vec<Frame>,
    pub floating: bool,
    pub feet: Vec<Foot>,
    pub loop_closures: Vec<LoopClosure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    name: String,
    links: Vec<Link>,
    joints: Vec<Joint>,
    frames: Vec<Frame>,
    floating: bool,
    feet: Vec<Foot>,
    loop_closures: Vec<LoopClosure>,
    parent: Vec<Option<usize>>,
    joint_dof: Vec<Option<usize>>,
    dof_count: usize,
    frame_lookup: HashMap<String, (usize, Isometry3<f64>)>,
}

impl RobotModel {
    /// Builds the kinematic tree. Only topology is checked here; numeric
    /// invariants are reported by [`validate_model`].
    pub fn new(desc: ModelDescription) -> Result<Self, ModelError> {
        let ModelDescription { name, links, joints, frames, floating, feet, loop_closures } = desc;

        let mut link_index: HashMap<&str, usize> = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.name.as_str(), i).is_some() {
                return Err(ModelError::Kinematics(format!("duplicate link '{}'", l.name)));
            }
        }

        let mut parent_joint: Vec<Option<usize>> = vec![None; links.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        for (j, joint) in joints.iter().enumerate() {
            let p = *link_index.get(joint.parent_link.as_str()).ok_or_else(|| {
                ModelError::Kinematics(format!(
                    "joint '{}' references unknown parent link '{}'",
                    joint.name, joint.parent_link
                ))
            })?;
            let c = *link_index.get(joint.child_link.as_str()).ok_or_else(|| {
                ModelError::Kinematics(format!(
                    "joint '{}' references unknown child link '{}'",
                    joint.name, joint.child_link
                ))
            })?;
            if p == c {
                return Err(ModelError::Kinematics(format!("joint '{}' connects a link to itself", joint.name)));
            }
            if let Some(prev) = parent_joint[c] {
                return Err(ModelError::Kinematics(format!(
                    "link '{}' has two parent joints ('{}', '{}'): the joint graph contains a cycle; \
                     cut it and declare a loop closure instead",
                    joint.child_link, joints[prev].name, joint.name
                )));
            }
            parent_joint[c] = Some(j);
            children[p].push(j);
        }

        let roots: Vec<usize> = (0..links.len()).filter(|&i| parent_joint[i].is_none()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => {
                return Err(ModelError::Kinematics(
                    "no root link: the joint graph contains a cycle".to_string(),
                ))
            }
            many => {
                let names: Vec<&str> = many.iter().map(|&i| links[i].name.as_str()).collect();
                return Err(ModelError::Kinematics(format!("multiple root links: {}", names.join(", "))));
            }
        };

        // Depth-first from the root, children in declaration order.
        let mut order = Vec::with_capacity(links.len());
        let mut stack = vec![root];
        while let Some(l) = stack.pop() {
            order.push(l);
            for &j in children[l].iter().rev() {
                stack.push(link_index[joints[j].child_link.as_str()]);
            }
        }
        if order.len() != links.len() {
            let reached: std::collections::HashSet<usize> = order.iter().copied().collect();
            let stray: Vec<&str> =
                (0..links.len()).filter(|i| !reached.contains(i)).map(|i| links[i].name.as_str()).collect();
            return Err(ModelError::Kinematics(format!(
                "links not connected to the base (cycle or disconnected subtree): {}",
                stray.join(", ")
            )));
        }

        let mut new_index = vec![0usize; links.len()];
        for (k, &old) in order.iter().enumerate() {
            new_index[old] = k;
        }
        let sorted_links: Vec<Link> = order.iter().map(|&i| links[i].clone()).collect();
        let mut parent = vec![None; links.len()];
        let mut sorted_joints = Vec::with_capacity(joints.len());
        for &old in order.iter().skip(1) {
            let j = parent_joint[old].expect("non-root link has a parent joint");
            let joint = joints[j].clone();
            parent[new_index[old]] = Some(new_index[link_index[joint.parent_link.as_str()]]);
            sorted_joints.push(joint);
        }

        let mut joint_dof = Vec::with_capacity(sorted_joints.len());
        let mut dof_count = 0;
        for j in &sorted_joints {
            if j.kind.is_movable() {
                joint_dof.push(Some(dof_count));
                dof_count += 1;
            } else {
                joint_dof.push(None);
            }
        }

        let mut frame_lookup = HashMap::new();
        for (i, l) in sorted_links.iter().enumerate() {
            frame_lookup.insert(l.name.clone(), (i, Isometry3::identity()));
        }
        for f in &frames {
            let li = *link_index.get(f.link.as_str()).ok_or_else(|| {
                ModelError::Kinematics(format!("frame '{}' attached to unknown link '{}'", f.name, f.link))
            })?;
            if frame_lookup.insert(f.name.clone(), (new_index[li], f.offset)).is_some() {
                return Err(ModelError::Kinematics(format!("duplicate frame name '{}'", f.name)));
            }
        }

        Ok(RobotModel {
            name,
            links: sorted_links,
            joints: sorted_joints,
            frames,
            floating,
            feet,
            loop_closures,
            parent,
            joint_dof,
            dof_count,
            frame_lookup,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Links in depth-first order; `links()[0]` is the base.
    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// `joints()[i]` attaches `links()[i + 1]` to its parent.
    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn base_link(&self) -> &str {
        &self.links[0].name
    }

    pub fn is_floating(&self) -> bool {
        self.floating
    }

    pub fn feet(&self) -> &[Foot] {
        &self.feet
    }

    pub fn loop_closures(&self) -> &[LoopClosure] {
        &self.loop_closures
    }

    /// Number of actuated joint coordinates `n`.
    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    /// Offset of the first joint coordinate in the generalized velocity.
    pub fn base_dofs(&self) -> usize {
        if self.floating {
            6
        } else {
            0
        }
    }

    /// Generalized velocity dimension: `n + 6` floating, `n` fixed.
    pub fn nv(&self) -> usize {
        self.base_dofs() + self.dof_count
    }

    pub fn parent_of(&self, link: usize) -> Option<usize> {
        self.parent[link]
    }

    /// Joint coordinate index of joint `j`, if it is movable.
    pub fn joint_dof(&self, j: usize) -> Option<usize> {
        self.joint_dof[j]
    }

    /// Names of the movable joints in coordinate order.
    pub fn dof_names(&self) -> Vec<&str> {
        self.joints.iter().filter(|j| j.kind.is_movable()).map(|j| j.name.as_str()).collect()
    }

    /// Resolves a frame name to `(link index, offset in link frame)`.
    pub fn frame(&self, name: &str) -> Option<(usize, Isometry3<f64>)> {
        self.frame_lookup.get(name).copied()
    }

    /// Every addressable frame name, sorted.
    pub fn frame_names(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.frame_lookup.keys().map(|s| s.as_str()).collect();
        v.sort_unstable();
        v
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Total number of contact vertices over all feet.
    pub fn vertex_count(&self) -> usize {
        self.feet.iter().map(|f| f.geometry.vertex_count()).sum()
    }

    /// Ancestor chain of `link` including itself, leaf first.
    pub fn chain_to_root(&self, link: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(link), move |&l| self.parent[l])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationCode {
    NegativeMass,
    AsymmetricInertia,
    NonPdInertia,
    NonUnitAxis,
    InvalidLimits,
    UnknownFootLink,
    DuplicateFoot,
    InvalidFootGeometry,
    UnknownClosureFrame,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::NegativeMass => "NEGATIVE_MASS",
            ViolationCode::AsymmetricInertia => "ASYMMETRIC_INERTIA",
            ViolationCode::NonPdInertia => "NON_PD_INERTIA",
            ViolationCode::NonUnitAxis => "NON_UNIT_AXIS",
            ViolationCode::InvalidLimits => "INVALID_LIMITS",
            ViolationCode::UnknownFootLink => "UNKNOWN_FOOT_LINK",
            ViolationCode::DuplicateFoot => "DUPLICATE_FOOT",
            ViolationCode::InvalidFootGeometry => "INVALID_FOOT_GEOMETRY",
            ViolationCode::UnknownClosureFrame => "UNKNOWN_CLOSURE_FRAME",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: ViolationCode,
    pub element: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at '{}': {}", self.code, self.element, self.detail)
    }
}

/// Reports every invariant violation of `model`. An empty list means valid.
pub fn validate_model(model: &RobotModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, element: &str, detail: String| {
        out.push(Violation { code, element: element.to_string(), detail })
    };

    for link in model.links() {
        if link.mass < 0.0 || !link.mass.is_finite() {
            push(ViolationCode::NegativeMass, &link.name, format!("mass {}", link.mass));
            continue;
        }
        if link.mass == 0.0 {
            continue;
        }
        let i = &link.inertia;
        let asym = (i - i.transpose()).abs().max();
        if asym > 1e-12 * i.abs().max().max(1.0) {
            push(ViolationCode::AsymmetricInertia, &link.name, format!("asymmetry {asym:e}"));
            continue;
        }
        let eig = SymmetricEigen::new(*i).eigenvalues;
        let min = eig.min();
        if min <= 0.0 || !min.is_finite() {
            push(ViolationCode::NonPdInertia, &link.name, format!("smallest eigenvalue {min}"));
        }
    }

    for joint in model.joints() {
        if joint.kind.is_movable() {
            let norm = joint.axis.norm();
            if !((norm - 1.0).abs() <= AXIS_NORM_TOL) {
                push(ViolationCode::NonUnitAxis, &joint.name, format!("axis norm {norm}"));
            }
        }
        if let Some((lo, hi)) = joint.position_limits {
            if !(lo <= hi) {
                push(ViolationCode::InvalidLimits, &joint.name, format!("lower {lo} > upper {hi}"));
            }
        }
        if let Some(e) = joint.effort_limit {
            if !(e >= 0.0) {
                push(ViolationCode::InvalidLimits, &joint.name, format!("effort limit {e}"));
            }
        }
    }

    let mut seen = std::collections::HashSet::new();
    for foot in model.feet() {
        if model.frame(&foot.link_name).is_none() {
            push(ViolationCode::UnknownFootLink, &foot.link_name, "no such link or frame".to_string());
        }
        if !seen.insert(foot.link_name.as_str()) {
            push(ViolationCode::DuplicateFoot, &foot.link_name, "foot declared twice".to_string());
        }
        let ok = match foot.geometry {
            FootGeometry::Rectangular { length, width, sole_height } => {
                length > 0.0 && width > 0.0 && sole_height.is_finite()
            }
            FootGeometry::Spherical { radius, center_offset } => {
                radius > 0.0 && center_offset.iter().all(|v| v.is_finite())
            }
        };
        if !ok {
            push(ViolationCode::InvalidFootGeometry, &foot.link_name, format!("{:?}", foot.geometry));
        }
    }

    for lc in model.loop_closures() {
        for name in [&lc.frame_a, &lc.frame_b] {
            if model.frame(name).is_none() {
                push(ViolationCode::UnknownClosureFrame, name, format!("in closure {}", lc.name()));
            }
        }
    }

    out
}
