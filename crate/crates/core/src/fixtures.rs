//! Built-in robot models used by the scenarios, tests and benchmarks.

use std::f64::consts::PI;

use nalgebra::{DVector, Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kindyn::RobotState;
use crate::model::{
    Foot, FootGeometry, Frame, Joint, JointKind, Link, LoopClosure, ModelDescription, ModelError, RobotModel,
};

fn at(x: f64, y: f64, z: f64) -> Isometry3<f64> {
    Isometry3::translation(x, y, z)
}

fn build(desc: ModelDescription) -> RobotModel {
    RobotModel::new(desc).expect("fixture topology is a tree")
}

/// Inertia of a solid cuboid about its center.
pub fn box_inertia(mass: f64, lx: f64, ly: f64, lz: f64) -> Matrix3<f64> {
    let k = mass / 12.0;
    Matrix3::from_diagonal(&Vector3::new(k * (ly * ly + lz * lz), k * (lx * lx + lz * lz), k * (lx * lx + ly * ly)))
}

pub fn sphere_inertia(mass: f64, radius: f64) -> Matrix3<f64> {
    Matrix3::from_diagonal_element(0.4 * mass * radius * radius)
}

/// Slender rod along x with a small radial thickness.
fn rod_inertia(mass: f64, length: f64) -> Matrix3<f64> {
    box_inertia(mass, length, 0.02, 0.02)
}

fn revolute(name: &str, parent: &str, child: &str, axis: Vector3<f64>, origin: Isometry3<f64>) -> Joint {
    Joint::new(name, JointKind::Revolute, parent, child, axis, origin)
}

/// One floating rigid body named `body`.
pub fn single_body(mass: f64, inertia: Matrix3<f64>, com: Vector3<f64>) -> RobotModel {
    build(ModelDescription {
        name: "body".into(),
        links: vec![Link::new("body", mass, inertia, com)],
        floating: true,
        ..Default::default()
    })
}

/// Floating cuboid `box` with a rectangular foot on its bottom face.
pub fn box_model(mass: f64, lx: f64, ly: f64, lz: f64) -> RobotModel {
    build(ModelDescription {
        name: "box".into(),
        links: vec![Link::new("box", mass, box_inertia(mass, lx, ly, lz), Vector3::zeros())],
        floating: true,
        feet: vec![Foot {
            link_name: "box".into(),
            geometry: FootGeometry::Rectangular { length: lx, width: ly, sole_height: -0.5 * lz },
        }],
        ..Default::default()
    })
}

/// Floating solid sphere `ball` with a spherical foot centered on its origin.
pub fn sphere_model(mass: f64, radius: f64) -> RobotModel {
    build(ModelDescription {
        name: "sphere".into(),
        links: vec![Link::new("ball", mass, sphere_inertia(mass, radius), Vector3::zeros())],
        floating: true,
        feet: vec![Foot {
            link_name: "ball".into(),
            geometry: FootGeometry::Spherical { radius, center_offset: Vector3::zeros() },
        }],
        ..Default::default()
    })
}

/// Fixed-base 1-DoF pendulum: revolute about z, link along x, point mass
/// plus a small rod inertia, frame `tip` at the link end.
pub fn planar_pendulum(mass: f64, length: f64) -> RobotModel {
    build(ModelDescription {
        name: "pendulum".into(),
        links: vec![
            Link::massless("world_anchor"),
            Link::new("link", mass, rod_inertia(mass, length) * 0.01, Vector3::new(length, 0.0, 0.0)),
        ],
        joints: vec![revolute("joint", "world_anchor", "link", Vector3::z(), Isometry3::identity())],
        frames: vec![Frame { name: "tip".into(), link: "link".into(), offset: at(length, 0.0, 0.0) }],
        ..Default::default()
    })
}

/// Fixed-base double pendulum swinging in the xz plane (joint axes along y,
/// links along x at zero angle). Each link carries `mass` at its end plus a
/// diagonal inertia `link_inertia` (zero gives ideal point masses).
pub fn double_pendulum_point_mass(mass: f64, length: f64, link_inertia: f64) -> RobotModel {
    let inertia = Matrix3::from_diagonal_element(link_inertia);
    let com = Vector3::new(length, 0.0, 0.0);
    build(ModelDescription {
        name: "double_pendulum".into(),
        links: vec![
            Link::massless("anchor"),
            Link::new("upper", mass, inertia, com),
            Link::new("lower", mass, inertia, com),
        ],
        joints: vec![
            revolute("shoulder", "anchor", "upper", Vector3::y(), Isometry3::identity()),
            revolute("elbow", "upper", "lower", Vector3::y(), at(length, 0.0, 0.0)),
        ],
        frames: vec![Frame { name: "tip".into(), link: "lower".into(), offset: at(length, 0.0, 0.0) }],
        ..Default::default()
    })
}

/// Five-DoF floating model with two branches and a prismatic joint, used to
/// exercise the dynamics on a non-trivial tree.
pub fn branched_floating() -> RobotModel {
    let tilt = |x: f64, y: f64, z: f64, r: f64, p: f64, yw: f64| {
        Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::from_euler_angles(r, p, yw))
    };
    let axis = |x: f64, y: f64, z: f64| Vector3::new(x, y, z).normalize();
    let inertia = |a: f64, b: f64, c: f64| {
        Matrix3::new(a, 0.01 * a, 0.0, 0.01 * a, b, -0.02 * b, 0.0, -0.02 * b, c)
    };
    build(ModelDescription {
        name: "branched".into(),
        links: vec![
            Link::new("pelvis", 4.0, inertia(0.08, 0.06, 0.05), Vector3::new(0.01, 0.0, 0.02)),
            Link::new("torso", 6.0, inertia(0.2, 0.18, 0.07), Vector3::new(0.0, 0.01, 0.25)),
            Link::new("thigh_a", 2.0, inertia(0.03, 0.031, 0.004), Vector3::new(0.0, 0.0, -0.18)),
            Link::new("shin_a", 1.5, inertia(0.02, 0.021, 0.003), Vector3::new(0.01, 0.0, -0.17)),
            Link::new("thigh_b", 2.0, inertia(0.03, 0.031, 0.004), Vector3::new(0.0, 0.0, -0.18)),
            Link::new("foot_b", 0.8, inertia(0.004, 0.005, 0.002), Vector3::new(0.02, 0.0, -0.03)),
        ],
        joints: vec![
            revolute("waist", "pelvis", "torso", axis(0.0, 0.2, 1.0), tilt(0.0, 0.0, 0.1, 0.0, 0.1, 0.0)),
            revolute("hip_a", "pelvis", "thigh_a", axis(0.0, 1.0, 0.0), tilt(0.0, 0.1, -0.05, 0.1, 0.0, 0.0)),
            revolute("knee_a", "thigh_a", "shin_a", axis(0.1, 1.0, 0.0), tilt(0.0, 0.0, -0.4, 0.0, 0.0, 0.2)),
            revolute("hip_b", "pelvis", "thigh_b", axis(1.0, 0.0, 0.1), tilt(0.0, -0.1, -0.05, -0.1, 0.0, 0.0)),
            Joint::new("slide_b", JointKind::Prismatic, "thigh_b", "foot_b", axis(0.0, 0.1, -1.0), at(0.0, 0.0, -0.35)),
        ],
        frames: vec![Frame {
            name: "foot_a".into(),
            link: "shin_a".into(),
            offset: tilt(0.03, 0.0, -0.38, 0.2, -0.1, 0.3),
        }],
        floating: true,
        ..Default::default()
    })
}

/// Four-bar linkage in the vertical xz plane. The coupler is cut at its
/// midpoint into `coupler_a` (on the crank) and `coupler_b` (on the rocker);
/// the halves are welded back together by a loop closure between frames
/// `mid_a` and `mid_b`. Joint coordinates: crank, coupler_a, rocker, coupler_b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourBarGeometry {
    pub ground: f64,
    pub crank: f64,
    pub coupler: f64,
    pub rocker: f64,
}

impl Default for FourBarGeometry {
    fn default() -> Self {
        FourBarGeometry { ground: 0.3, crank: 0.1, coupler: 0.3, rocker: 0.25 }
    }
}

pub fn four_bar(g: FourBarGeometry) -> RobotModel {
    // Axis -y makes positive angles counter-clockwise in the (x, z) plane.
    let axis = -Vector3::y();
    let rod = |name: &str, len: f64, mass: f64| Link::new(name, mass, rod_inertia(mass, len), Vector3::new(0.5 * len, 0.0, 0.0));
    let half = 0.5 * g.coupler;
    let flip = Isometry3::from_parts(Translation3::new(half, 0.0, 0.0), UnitQuaternion::from_scaled_axis(axis * PI));
    build(ModelDescription {
        name: "four_bar".into(),
        links: vec![
            Link::massless("ground"),
            rod("crank", g.crank, 0.2),
            rod("coupler_a", half, 0.15),
            rod("rocker", g.rocker, 0.4),
            rod("coupler_b", half, 0.15),
        ],
        joints: vec![
            revolute("crank_joint", "ground", "crank", axis, Isometry3::identity()),
            revolute("coupler_a_joint", "crank", "coupler_a", axis, at(g.crank, 0.0, 0.0)),
            revolute("rocker_joint", "ground", "rocker", axis, at(g.ground, 0.0, 0.0)),
            revolute("coupler_b_joint", "rocker", "coupler_b", axis, at(g.rocker, 0.0, 0.0)),
        ],
        frames: vec![
            Frame { name: "mid_a".into(), link: "coupler_a".into(), offset: at(half, 0.0, 0.0) },
            Frame { name: "mid_b".into(), link: "coupler_b".into(), offset: flip },
        ],
        loop_closures: vec![LoopClosure::new("mid_a", "mid_b")],
        ..Default::default()
    })
}

/// Joint positions closing the four-bar at crank angle `theta` (rocker on
/// the upper branch). Returns `None` where the loop cannot close.
pub fn four_bar_positions(g: FourBarGeometry, theta: f64) -> Option<DVector<f64>> {
    let a = Vector3::new(g.crank * theta.cos(), 0.0, g.crank * theta.sin());
    let o4 = Vector3::new(g.ground, 0.0, 0.0);
    // Intersect the circle of radius coupler about A with radius rocker about O4.
    let d_vec = o4 - a;
    let d = d_vec.norm();
    if d > g.coupler + g.rocker || d < (g.coupler - g.rocker).abs() {
        return None;
    }
    let l = (g.coupler * g.coupler - g.rocker * g.rocker + d * d) / (2.0 * d);
    let h = (g.coupler * g.coupler - l * l).max(0.0).sqrt();
    let u = d_vec / d;
    let perp = Vector3::new(-u.z, 0.0, u.x);
    let b = a + u * l + perp * h;
    let b = if b.z >= 0.0 { b } else { a + u * l - perp * h };
    let theta3 = (b.z - a.z).atan2(b.x - a.x);
    let theta4 = (b.z - o4.z).atan2(b.x - o4.x);
    Some(DVector::from_vec(vec![theta, theta3 - theta, theta4, theta3 + PI - theta4]))
}

/// Dimensions of the humanoid fixture.
pub mod humanoid_dims {
    pub const THIGH: f64 = 0.4;
    pub const SHIN: f64 = 0.4;
    pub const HIP_WIDTH: f64 = 0.1;
    pub const HIP_DROP: f64 = 0.1;
    pub const ANKLE_HEIGHT: f64 = 0.08;
    pub const FOOT_LENGTH: f64 = 0.2;
    pub const FOOT_WIDTH: f64 = 0.1;
}

/// Twelve-DoF humanoid: floating pelvis, torso fused by a fixed joint, one
/// shoulder pitch joint per arm and five joints per leg (hip roll, hip
/// pitch, knee, ankle pitch, ankle roll). Feet are 0.2 × 0.1 m soles.
pub fn humanoid() -> RobotModel {
    use humanoid_dims::*;
    let mut links = vec![
        Link::new("pelvis", 8.0, box_inertia(8.0, 0.2, 0.3, 0.15), Vector3::zeros()),
        Link::new("torso", 12.0, box_inertia(12.0, 0.2, 0.3, 0.4), Vector3::new(0.0, 0.0, 0.2)),
    ];
    let mut joints = vec![Joint::new(
        "waist",
        JointKind::Fixed,
        "pelvis",
        "torso",
        Vector3::z(),
        at(0.0, 0.0, 0.075),
    )];
    let mut feet = Vec::new();
    for (side, sy) in [("l", 1.0), ("r", -1.0)] {
        let n = |s: &str| format!("{side}_{s}");
        links.push(Link::new(n("arm"), 1.5, box_inertia(1.5, 0.06, 0.06, 0.5), Vector3::new(0.0, 0.0, -0.25)));
        joints.push(revolute(&n("shoulder_pitch"), "torso", &n("arm"), Vector3::y(), at(0.0, sy * 0.2, 0.35)));

        links.push(Link::new(n("hip"), 0.5, box_inertia(0.5, 0.08, 0.08, 0.08), Vector3::zeros()));
        links.push(Link::new(n("thigh"), 3.0, box_inertia(3.0, 0.08, 0.08, THIGH), Vector3::new(0.0, 0.0, -0.5 * THIGH)));
        links.push(Link::new(n("shin"), 2.0, box_inertia(2.0, 0.07, 0.07, SHIN), Vector3::new(0.0, 0.0, -0.5 * SHIN)));
        links.push(Link::new(n("ankle"), 0.3, box_inertia(0.3, 0.05, 0.05, 0.05), Vector3::zeros()));
        links.push(Link::new(
            n("foot"),
            1.0,
            box_inertia(1.0, FOOT_LENGTH, FOOT_WIDTH, 0.04),
            Vector3::new(0.0, 0.0, -0.5 * ANKLE_HEIGHT),
        ));
        joints.push(revolute(&n("hip_roll"), "pelvis", &n("hip"), Vector3::x(), at(0.0, sy * HIP_WIDTH, -HIP_DROP)));
        joints.push(revolute(&n("hip_pitch"), &n("hip"), &n("thigh"), Vector3::y(), Isometry3::identity()));
        joints.push(revolute(&n("knee"), &n("thigh"), &n("shin"), Vector3::y(), at(0.0, 0.0, -THIGH)));
        joints.push(revolute(&n("ankle_pitch"), &n("shin"), &n("ankle"), Vector3::y(), at(0.0, 0.0, -SHIN)));
        joints.push(revolute(&n("ankle_roll"), &n("ankle"), &n("foot"), Vector3::x(), Isometry3::identity()));
        feet.push(Foot {
            link_name: n("foot"),
            geometry: FootGeometry::Rectangular { length: FOOT_LENGTH, width: FOOT_WIDTH, sole_height: -ANKLE_HEIGHT },
        });
    }
    build(ModelDescription {
        name: "humanoid".into(),
        links,
        joints,
        frames: vec![Frame { name: "imu".into(), link: "pelvis".into(), offset: at(0.0, 0.0, 0.05) }],
        floating: true,
        feet,
        ..Default::default()
    })
}

/// Joint positions of the humanoid with both knees bent by `2·bend`, hips
/// and ankles pitched by `−bend` so the feet stay flat under the pelvis.
pub fn humanoid_knee_bend(model: &RobotModel, bend: f64) -> DVector<f64> {
    let mut q = DVector::zeros(model.dof_count());
    for (i, name) in model.dof_names().iter().enumerate() {
        q[i] = match &name[2..] {
            "hip_pitch" | "ankle_pitch" => -bend,
            "knee" => 2.0 * bend,
            _ => 0.0,
        };
    }
    q
}

/// Pelvis height at which the humanoid's soles touch z = 0 for a given bend.
pub fn humanoid_standing_height(bend: f64) -> f64 {
    use humanoid_dims::*;
    HIP_DROP + (THIGH + SHIN) * bend.cos() + ANKLE_HEIGHT
}

/// Looks up a built-in model by name.
pub fn builtin(name: &str) -> Result<RobotModel, ModelError> {
    Ok(match name {
        "box" => box_model(1.0, 0.2, 0.2, 0.2),
        "sphere" => sphere_model(1.0, 0.05),
        "double_pendulum" => double_pendulum_point_mass(1.0, 1.0, 0.0),
        "arm" => double_pendulum_point_mass(1.0, 0.5, 0.01),
        "branched" => branched_floating(),
        "four_bar" => four_bar(FourBarGeometry::default()),
        "humanoid" => humanoid(),
        other => return Err(ModelError::Parse(format!("unknown built-in model '{other}'"))),
    })
}

pub const BUILTIN_NAMES: &[&str] = &["arm", "box", "branched", "double_pendulum", "four_bar", "humanoid", "sphere"];

/// Reproducible random state: positions in ±1, velocities in ±1, a random
/// base pose for floating models.
pub fn random_state(model: &RobotModel, seed: u64) -> RobotState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_state_with(model, &mut rng)
}

pub fn random_state_with<R: Rng>(model: &RobotModel, rng: &mut R) -> RobotState {
    let mut s = RobotState::new(model);
    let n = model.dof_count();
    s.joint_positions = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    s.joint_velocities = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    if model.is_floating() {
        s.base_position = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        s.base_orientation = UnitQuaternion::from_scaled_axis(axis * rng.random_range(0.0..PI) / axis.norm().max(1e-9));
        s.base_twist = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0));
    }
    s
}
