//! URDF ingestion.
//!
//! Supported subset: `<link>` with `<inertial>`, and `revolute`, `continuous`,
//! `prismatic` and `fixed` joints with `<origin>`, `<axis>` and `<limit>`.
//! Visual and collision elements are skipped. Links reached through fixed
//! joints are fused into their parent and stay addressable as frames.

use std::collections::HashMap;

use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use roxmltree::{Document, Node};

use super::{
    validate_model, Foot, Frame, Joint, JointKind, Link, LoopClosure, ModelDescription, ModelError,
    RobotModel,
};

#[derive(Debug, Clone, Default)]
pub struct ModelOptions {
    pub floating: bool,
    pub feet: Vec<Foot>,
    pub loop_closures: Vec<LoopClosure>,
}

/// Parses URDF text, fuses fixed joints and validates the result.
pub fn load_model(urdf_text: &str, options: &ModelOptions) -> Result<RobotModel, ModelError> {
    let parsed = parse(urdf_text)?;
    let desc = fuse_fixed_joints(parsed, options)?;
    let model = RobotModel::new(desc)?;
    let violations = validate_model(&model);
    if !violations.is_empty() {
        return Err(ModelError::Validation(violations));
    }
    Ok(model)
}

struct ParsedUrdf {
    name: String,
    links: Vec<Link>,
    joints: Vec<Joint>,
}

fn parse(text: &str) -> Result<ParsedUrdf, ModelError> {
    let doc = Document::parse(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let robot = doc.root_element();
    if robot.tag_name().name() != "robot" {
        return Err(ModelError::Parse(format!("root element is <{}>, expected <robot>", robot.tag_name().name())));
    }
    let name = robot.attribute("name").unwrap_or("robot").to_string();

    let mut links = Vec::new();
    let mut joints = Vec::new();
    for node in robot.children().filter(Node::is_element) {
        match node.tag_name().name() {
            "link" => links.push(parse_link(node)?),
            "joint" => joints.push(parse_joint(node)?),
            _ => {}
        }
    }
    Ok(ParsedUrdf { name, links, joints })
}

fn required_attr<'a>(node: Node<'a, '_>, attr: &str) -> Result<&'a str, ModelError> {
    node.attribute(attr)
        .ok_or_else(|| ModelError::Parse(format!("<{}> is missing attribute '{}'", node.tag_name().name(), attr)))
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == tag)
}

fn parse_f64(s: &str, what: &str) -> Result<f64, ModelError> {
    s.trim().parse::<f64>().map_err(|_| ModelError::Parse(format!("invalid number '{s}' in {what}")))
}

fn parse_vec3(s: &str, what: &str) -> Result<Vector3<f64>, ModelError> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(ModelError::Parse(format!("expected 3 numbers in {what}, got '{s}'")));
    }
    Ok(Vector3::new(parse_f64(parts[0], what)?, parse_f64(parts[1], what)?, parse_f64(parts[2], what)?))
}

fn parse_origin(node: Option<Node>) -> Result<Isometry3<f64>, ModelError> {
    let Some(node) = node else {
        return Ok(Isometry3::identity());
    };
    let xyz = node.attribute("xyz").map(|s| parse_vec3(s, "origin xyz")).transpose()?.unwrap_or_default();
    let rpy = node.attribute("rpy").map(|s| parse_vec3(s, "origin rpy")).transpose()?.unwrap_or_default();
    // Fixed-axis roll, pitch, yaw: R = Rz(yaw) Ry(pitch) Rx(roll).
    let rot = UnitQuaternion::from_euler_angles(rpy.x, rpy.y, rpy.z);
    Ok(Isometry3::from_parts(Translation3::from(xyz), rot))
}

fn parse_link(node: Node) -> Result<Link, ModelError> {
    let name = required_attr(node, "name")?.to_string();
    let Some(inertial) = child(node, "inertial") else {
        return Ok(Link::massless(name));
    };
    let origin = parse_origin(child(inertial, "origin"))?;
    let mass_node =
        child(inertial, "mass").ok_or_else(|| ModelError::Parse(format!("link '{name}': <inertial> without <mass>")))?;
    let mass = parse_f64(required_attr(mass_node, "value")?, "mass")?;
    let inertia = match child(inertial, "inertia") {
        Some(i) => {
            let get = |k: &str| -> Result<f64, ModelError> {
                i.attribute(k).map(|v| parse_f64(v, "inertia")).transpose().map(|v| v.unwrap_or(0.0))
            };
            let (ixx, ixy, ixz, iyy, iyz, izz) =
                (get("ixx")?, get("ixy")?, get("ixz")?, get("iyy")?, get("iyz")?, get("izz")?);
            Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz)
        }
        None => Matrix3::zeros(),
    };
    let r = origin.rotation.to_rotation_matrix();
    let inertia_link = r.matrix() * inertia * r.matrix().transpose();
    Ok(Link::new(name, mass, inertia_link, origin.translation.vector))
}

fn parse_joint(node: Node) -> Result<Joint, ModelError> {
    let name = required_attr(node, "name")?.to_string();
    let kind = match required_attr(node, "type")? {
        "revolute" | "continuous" => JointKind::Revolute,
        "prismatic" => JointKind::Prismatic,
        "fixed" => JointKind::Fixed,
        other => return Err(ModelError::Parse(format!("joint '{name}': unsupported type '{other}'"))),
    };
    let parent = child(node, "parent")
        .ok_or_else(|| ModelError::Parse(format!("joint '{name}' has no <parent>")))
        .and_then(|p| required_attr(p, "link"))?;
    let child_link = child(node, "child")
        .ok_or_else(|| ModelError::Parse(format!("joint '{name}' has no <child>")))
        .and_then(|c| required_attr(c, "link"))?;
    let origin = parse_origin(child(node, "origin"))?;
    let mut axis = match child(node, "axis") {
        Some(a) => parse_vec3(required_attr(a, "xyz")?, "axis")?,
        None => Vector3::x(),
    };
    // URDF axes are commonly written unnormalized; a zero axis is left for validation.
    let norm = axis.norm();
    if norm > 0.0 {
        axis /= norm;
    }

    let mut joint = Joint::new(name, kind, parent, child_link, axis, origin);
    let is_continuous = node.attribute("type") == Some("continuous");
    if let Some(limit) = child(node, "limit") {
        let attr = |k: &str| limit.attribute(k).map(|v| parse_f64(v, "limit")).transpose();
        if !is_continuous {
            if let (Some(lo), Some(hi)) = (attr("lower")?, attr("upper")?) {
                joint.position_limits = Some((lo, hi));
            }
        }
        joint.effort_limit = attr("effort")?;
    }
    Ok(joint)
}

/// Mass properties accumulated in a body frame.
struct MassAccumulator {
    mass: f64,
    /// first moment, m·c
    moment: Vector3<f64>,
    /// inertia about the body-frame origin
    inertia_origin: Matrix3<f64>,
}

impl MassAccumulator {
    fn new() -> Self {
        MassAccumulator { mass: 0.0, moment: Vector3::zeros(), inertia_origin: Matrix3::zeros() }
    }

    fn add(&mut self, link: &Link, offset: &Isometry3<f64>) {
        if link.mass == 0.0 {
            return;
        }
        let r = offset.rotation.to_rotation_matrix();
        let c = offset.transform_point(&link.com_offset.into()).coords;
        let ic = r.matrix() * link.inertia * r.matrix().transpose();
        self.mass += link.mass;
        self.moment += link.mass * c;
        self.inertia_origin += ic + link.mass * (Matrix3::identity() * c.norm_squared() - c * c.transpose());
    }

    fn into_link(self, name: String) -> Link {
        if self.mass == 0.0 {
            return Link::new(name, 0.0, self.inertia_origin, Vector3::zeros());
        }
        let c = self.moment / self.mass;
        let shift = self.mass * (Matrix3::identity() * c.norm_squared() - c * c.transpose());
        let ic = self.inertia_origin - shift;
        Link::new(name, self.mass, 0.5 * (ic + ic.transpose()), c)
    }
}

fn fuse_fixed_joints(parsed: ParsedUrdf, options: &ModelOptions) -> Result<ModelDescription, ModelError> {
    let ParsedUrdf { name, links, joints } = parsed;
    let link_index: HashMap<&str, usize> = links.iter().enumerate().map(|(i, l)| (l.name.as_str(), i)).collect();

    // Topology checks (unknown links, cycles) are shared with RobotModel::new,
    // so build the unfused tree once to get them with consistent messages.
    let unfused = RobotModel::new(ModelDescription {
        name: name.clone(),
        links: links.clone(),
        joints: joints.clone(),
        ..Default::default()
    })?;

    // In depth-first order every parent precedes its children.
    let mut body_of: HashMap<String, (String, Isometry3<f64>)> = HashMap::new();
    let mut accum: Vec<(String, MassAccumulator)> = Vec::new();
    let mut out_joints = Vec::new();
    let mut frames = Vec::new();

    for (i, link) in unfused.links().iter().enumerate() {
        let original = &links[link_index[link.name.as_str()]];
        if i == 0 {
            body_of.insert(link.name.clone(), (link.name.clone(), Isometry3::identity()));
            let mut acc = MassAccumulator::new();
            acc.add(original, &Isometry3::identity());
            accum.push((link.name.clone(), acc));
            continue;
        }
        let joint = &unfused.joints()[i - 1];
        let (parent_body, parent_offset) = body_of[&joint.parent_link].clone();
        if joint.kind == JointKind::Fixed {
            let offset = parent_offset * joint.origin;
            let acc = &mut accum.iter_mut().find(|(n, _)| *n == parent_body).expect("parent body exists").1;
            acc.add(original, &offset);
            frames.push(Frame { name: link.name.clone(), link: parent_body.clone(), offset });
            body_of.insert(link.name.clone(), (parent_body, offset));
        } else {
            let mut j = joint.clone();
            j.parent_link = parent_body;
            j.origin = parent_offset * joint.origin;
            out_joints.push(j);
            let mut acc = MassAccumulator::new();
            acc.add(original, &Isometry3::identity());
            accum.push((link.name.clone(), acc));
            body_of.insert(link.name.clone(), (link.name.clone(), Isometry3::identity()));
        }
    }

    let out_links = accum.into_iter().map(|(n, a)| a.into_link(n)).collect();
    Ok(ModelDescription {
        name,
        links: out_links,
        joints: out_joints,
        frames,
        floating: options.floating,
        feet: options.feet.clone(),
        loop_closures: options.loop_closures.clone(),
    })
}
