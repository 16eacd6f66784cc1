//! Kinematic and dynamic quantities of a [`RobotModel`] at a given state.
//!
//! Velocities use the mixed representation: the linear velocity of a frame
//! origin and the angular velocity, both in world coordinates. The
//! generalized velocity stacks the base twist (linear then angular) ahead of
//! the joint velocities for floating-base models; fixed-base models only carry
//! the joint velocities.
//!
//! The mass matrix comes from the composite-rigid-body algorithm and the bias
//! forces from recursive Newton-Euler, both run in body coordinates and mapped
//! to the mixed representation at the base. Jacobians and frame bias
//! accelerations are assembled from a separate world-frame recursion.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::model::{JointKind, RobotModel};
use crate::spatial::{ang, cross_force, cross_motion, join, lin, skew, SpatialInertia, SpatialVec, Xform};

/// Wrenches keyed by frame name: force then torque about the frame origin,
/// both in world coordinates.
pub type WrenchMap = BTreeMap<String, Vector6<f64>>;

pub fn default_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinDynError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), KinDynError> {
    if expected == got {
        Ok(())
    } else {
        Err(KinDynError::Dimension { what, expected, got })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub base_position: Vector3<f64>,
    /// world ← base
    pub base_orientation: UnitQuaternion<f64>,
    pub joint_positions: DVector<f64>,
    /// Linear velocity of the base origin then angular velocity, world frame.
    pub base_twist: Vector6<f64>,
    pub joint_velocities: DVector<f64>,
}

impl RobotState {
    /// Base at the world origin, every coordinate and velocity zero.
    pub fn new(model: &RobotModel) -> Self {
        let n = model.dof_count();
        RobotState {
            base_position: Vector3::zeros(),
            base_orientation: UnitQuaternion::identity(),
            joint_positions: DVector::zeros(n),
            base_twist: Vector6::zeros(),
            joint_velocities: DVector::zeros(n),
        }
    }

    pub fn check(&self, model: &RobotModel) -> Result<(), KinDynError> {
        check_len("joint_positions", model.dof_count(), self.joint_positions.len())?;
        check_len("joint_velocities", model.dof_count(), self.joint_velocities.len())
    }

    /// Generalized velocity ν.
    pub fn velocity(&self, model: &RobotModel) -> DVector<f64> {
        let nb = model.base_dofs();
        let mut v = DVector::zeros(model.nv());
        if nb == 6 {
            v.rows_mut(0, 6).copy_from(&self.base_twist);
        }
        v.rows_mut(nb, model.dof_count()).copy_from(&self.joint_velocities);
        v
    }

    pub fn set_velocity(&mut self, model: &RobotModel, nu: &DVector<f64>) {
        let nb = model.base_dofs();
        if nb == 6 {
            self.base_twist.copy_from(&nu.rows(0, 6));
        }
        self.joint_velocities.copy_from(&nu.rows(nb, model.dof_count()));
    }

    pub fn is_finite(&self) -> bool {
        self.base_position.iter().all(|v| v.is_finite())
            && self.base_orientation.coords.iter().all(|v| v.is_finite())
            && self.joint_positions.iter().all(|v| v.is_finite())
            && self.base_twist.iter().all(|v| v.is_finite())
            && self.joint_velocities.iter().all(|v| v.is_finite())
    }

    fn base_pose(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.base_position), self.base_orientation)
    }
}

/// Everything the stepper evaluates once per step at the pre-integration state.
#[derive(Debug, Clone, PartialEq)]
pub struct KinDynQuantities {
    pub mass_matrix: DMatrix<f64>,
    /// Coriolis, centrifugal and gravity terms.
    pub bias_forces: DVector<f64>,
    /// world ← frame for every link and named frame.
    pub world_transforms: BTreeMap<String, Isometry3<f64>>,
    /// 6 × nv mixed Jacobians of every foot and loop-closure frame.
    pub frame_jacobians: BTreeMap<String, DMatrix<f64>>,
    /// J̇ν of the same frames.
    pub frame_bias_accelerations: BTreeMap<String, Vector6<f64>>,
    pub gravity: Vector3<f64>,
}

impl KinDynQuantities {
    pub fn jacobian(&self, frame: &str) -> Result<&DMatrix<f64>, KinDynError> {
        self.frame_jacobians.get(frame).ok_or_else(|| KinDynError::UnknownFrame(frame.to_string()))
    }

    pub fn bias_acceleration(&self, frame: &str) -> Result<&Vector6<f64>, KinDynError> {
        self.frame_bias_accelerations.get(frame).ok_or_else(|| KinDynError::UnknownFrame(frame.to_string()))
    }

    pub fn transform(&self, frame: &str) -> Result<&Isometry3<f64>, KinDynError> {
        self.world_transforms.get(frame).ok_or_else(|| KinDynError::UnknownFrame(frame.to_string()))
    }
}

fn joint_motion(kind: JointKind, axis: &Vector3<f64>, q: f64) -> Isometry3<f64> {
    match kind {
        JointKind::Revolute => Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_scaled_axis(axis * q),
        ),
        JointKind::Prismatic => Isometry3::from_parts(Translation3::from(axis * q), UnitQuaternion::identity()),
        JointKind::Fixed => Isometry3::identity(),
    }
}

fn motion_subspace(kind: JointKind, axis: &Vector3<f64>) -> SpatialVec {
    match kind {
        JointKind::Revolute => join(axis, &Vector3::zeros()),
        JointKind::Prismatic => join(&Vector3::zeros(), axis),
        JointKind::Fixed => SpatialVec::zeros(),
    }
}

/// Position-level quantities shared by every algorithm.
struct Kinematics {
    pose: Vec<Isometry3<f64>>,
    /// parent → link; entry 0 maps world → base
    local: Vec<Xform>,
    /// joint axis of link i in world coordinates (zero for the base)
    axis_world: Vec<Vector3<f64>>,
}

impl Kinematics {
    fn new(model: &RobotModel, state: &RobotState) -> Self {
        let nb = model.links().len();
        let base = state.base_pose();
        let mut pose = Vec::with_capacity(nb);
        let mut local = Vec::with_capacity(nb);
        let mut axis_world = Vec::with_capacity(nb);
        pose.push(base);
        local.push(Xform::from_pose(&base));
        axis_world.push(Vector3::zeros());
        for (j, joint) in model.joints().iter().enumerate() {
            let i = j + 1;
            let q = model.joint_dof(j).map_or(0.0, |d| state.joint_positions[d]);
            let rel = joint.origin * joint_motion(joint.kind, &joint.axis, q);
            let p = model.parent_of(i).expect("non-base link");
            let world = pose[p] * rel;
            axis_world.push(world.rotation * joint.axis);
            pose.push(world);
            local.push(Xform::from_pose(&rel));
        }
        Kinematics { pose, local, axis_world }
    }

    fn frame_pose(&self, model: &RobotModel, frame: &str) -> Result<(usize, Isometry3<f64>), KinDynError> {
        let (link, offset) = model.frame(frame).ok_or_else(|| KinDynError::UnknownFrame(frame.to_string()))?;
        Ok((link, self.pose[link] * offset))
    }
}

/// World-frame velocity and velocity-product acceleration of each link origin.
struct WorldMotion {
    omega: Vec<Vector3<f64>>,
    vel: Vec<Vector3<f64>>,
    alpha_bias: Vec<Vector3<f64>>,
    acc_bias: Vec<Vector3<f64>>,
}

impl WorldMotion {
    fn new(model: &RobotModel, state: &RobotState, kin: &Kinematics) -> Self {
        let nb = model.links().len();
        let mut m = WorldMotion {
            omega: Vec::with_capacity(nb),
            vel: Vec::with_capacity(nb),
            alpha_bias: vec![Vector3::zeros(); nb],
            acc_bias: vec![Vector3::zeros(); nb],
        };
        if model.is_floating() {
            m.vel.push(state.base_twist.fixed_rows::<3>(0).into_owned());
            m.omega.push(state.base_twist.fixed_rows::<3>(3).into_owned());
        } else {
            m.vel.push(Vector3::zeros());
            m.omega.push(Vector3::zeros());
        }
        for (j, joint) in model.joints().iter().enumerate() {
            let i = j + 1;
            let p = model.parent_of(i).expect("non-base link");
            let qd = model.joint_dof(j).map_or(0.0, |d| state.joint_velocities[d]);
            let a = kin.axis_world[i];
            let r = kin.pose[i].translation.vector - kin.pose[p].translation.vector;
            let (wp, vp, alp, accp) = (m.omega[p], m.vel[p], m.alpha_bias[p], m.acc_bias[p]);
            let mut w = wp;
            let mut v = vp + wp.cross(&r);
            let mut al = alp;
            let mut acc = accp + alp.cross(&r) + wp.cross(&wp.cross(&r));
            match joint.kind {
                JointKind::Revolute => {
                    w += a * qd;
                    al += wp.cross(&(a * qd));
                }
                JointKind::Prismatic => {
                    v += a * qd;
                    acc += 2.0 * wp.cross(&(a * qd));
                }
                JointKind::Fixed => {}
            }
            m.omega.push(w);
            m.vel.push(v);
            m.alpha_bias[i] = al;
            m.acc_bias[i] = acc;
        }
        m
    }

    /// Classical acceleration of a point and angular acceleration, at ν̇ = 0.
    fn frame_bias(&self, link: usize, link_pos: &Vector3<f64>, frame_pos: &Vector3<f64>) -> Vector6<f64> {
        let r = frame_pos - link_pos;
        let w = self.omega[link];
        let acc = self.acc_bias[link] + self.alpha_bias[link].cross(&r) + w.cross(&w.cross(&r));
        let al = self.alpha_bias[link];
        Vector6::new(acc.x, acc.y, acc.z, al.x, al.y, al.z)
    }
}

fn jacobian_at(model: &RobotModel, kin: &Kinematics, link: usize, point: &Vector3<f64>) -> DMatrix<f64> {
    let nb = model.base_dofs();
    let mut jac = DMatrix::zeros(6, model.nv());
    if nb == 6 {
        let r = point - kin.pose[0].translation.vector;
        jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&r)));
        jac.fixed_view_mut::<3, 3>(3, 3).copy_from(&Matrix3::identity());
    }
    for l in model.chain_to_root(link) {
        if l == 0 {
            break;
        }
        let j = l - 1;
        let Some(d) = model.joint_dof(j) else { continue };
        let a = kin.axis_world[l];
        let col = nb + d;
        match model.joints()[j].kind {
            JointKind::Revolute => {
                let o = kin.pose[l].translation.vector;
                jac.fixed_view_mut::<3, 1>(0, col).copy_from(&a.cross(&(point - o)));
                jac.fixed_view_mut::<3, 1>(3, col).copy_from(&a);
            }
            JointKind::Prismatic => jac.fixed_view_mut::<3, 1>(0, col).copy_from(&a),
            JointKind::Fixed => {}
        }
    }
    jac
}

fn spatial_inertias(model: &RobotModel) -> Vec<SpatialInertia> {
    model.links().iter().map(|l| SpatialInertia::new(l.mass, &l.com_offset, &l.inertia)).collect()
}

fn crba(model: &RobotModel, kin: &Kinematics) -> DMatrix<f64> {
    let nlinks = model.links().len();
    let nb = model.base_dofs();
    let mut ic: Vec<_> = spatial_inertias(model).iter().map(|i| i.matrix()).collect();
    for i in (1..nlinks).rev() {
        let p = model.parent_of(i).expect("non-base link");
        let x = kin.local[i].motion_matrix();
        let contribution = x.transpose() * ic[i] * x;
        ic[p] += contribution;
    }

    let rot = *kin.pose[0].rotation.to_rotation_matrix().matrix();
    let mut m = DMatrix::zeros(model.nv(), model.nv());
    for i in 1..nlinks {
        let joint = &model.joints()[i - 1];
        let Some(d) = model.joint_dof(i - 1) else { continue };
        let s = motion_subspace(joint.kind, &joint.axis);
        let col = nb + d;
        let mut f = ic[i] * s;
        m[(col, col)] = s.dot(&f);
        let mut k = i;
        while let Some(p) = model.parent_of(k) {
            f = kin.local[k].inv_apply_force(&f);
            k = p;
            if k == 0 {
                break;
            }
            let jk = &model.joints()[k - 1];
            if let Some(dk) = model.joint_dof(k - 1) {
                let row = nb + dk;
                let v = motion_subspace(jk.kind, &jk.axis).dot(&f);
                m[(row, col)] = v;
                m[(col, row)] = v;
            }
        }
        if nb == 6 {
            let fl = rot * lin(&f);
            let fa = rot * ang(&f);
            for r in 0..3 {
                m[(r, col)] = fl[r];
                m[(col, r)] = fl[r];
                m[(3 + r, col)] = fa[r];
                m[(col, 3 + r)] = fa[r];
            }
        }
    }
    if nb == 6 {
        let k = &ic[0];
        let kaa = k.fixed_view::<3, 3>(0, 0);
        let kal = k.fixed_view::<3, 3>(0, 3);
        let kla = k.fixed_view::<3, 3>(3, 0);
        let kll = k.fixed_view::<3, 3>(3, 3);
        let rt = rot.transpose();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(rot * kll * rt));
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(rot * kla * rt));
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(rot * kal * rt));
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(rot * kaa * rt));
    }
    m
}

/// Recursive Newton-Euler. `accel` is the mixed generalized acceleration
/// (zero when `None`); velocity terms are skipped when `with_velocity` is false.
fn rnea(
    model: &RobotModel,
    state: &RobotState,
    kin: &Kinematics,
    accel: Option<&DVector<f64>>,
    gravity: &Vector3<f64>,
    with_velocity: bool,
) -> DVector<f64> {
    let nlinks = model.links().len();
    let nb = model.base_dofs();
    let rot = *kin.pose[0].rotation.to_rotation_matrix().matrix();
    let rt = rot.transpose();
    let inertias = spatial_inertias(model);

    let mut v = vec![SpatialVec::zeros(); nlinks];
    let mut a = vec![SpatialVec::zeros(); nlinks];
    if nb == 6 {
        if with_velocity {
            let vb = rt * state.base_twist.fixed_rows::<3>(0);
            let wb = rt * state.base_twist.fixed_rows::<3>(3);
            v[0] = join(&wb, &vb);
            a[0] = join(&Vector3::zeros(), &(-wb.cross(&vb)));
        }
        if let Some(acc) = accel {
            let al = rt * acc.fixed_rows::<3>(0);
            let aw = rt * acc.fixed_rows::<3>(3);
            a[0] += join(&aw, &al);
        }
    }
    a[0] += join(&Vector3::zeros(), &(-(rt * gravity)));

    for i in 1..nlinks {
        let j = i - 1;
        let joint = &model.joints()[j];
        let p = model.parent_of(i).expect("non-base link");
        let s = motion_subspace(joint.kind, &joint.axis);
        let (qd, qdd) = match model.joint_dof(j) {
            Some(d) => (
                if with_velocity { state.joint_velocities[d] } else { 0.0 },
                accel.map_or(0.0, |acc| acc[nb + d]),
            ),
            None => (0.0, 0.0),
        };
        let vj = s * qd;
        v[i] = kin.local[i].apply_motion(&v[p]) + vj;
        a[i] = kin.local[i].apply_motion(&a[p]) + s * qdd + cross_motion(&v[i], &vj);
    }

    let mut f: Vec<SpatialVec> = (0..nlinks)
        .map(|i| inertias[i].mul(&a[i]) + cross_force(&v[i], &inertias[i].mul(&v[i])))
        .collect();

    let mut tau = DVector::zeros(model.nv());
    for i in (1..nlinks).rev() {
        let j = i - 1;
        let joint = &model.joints()[j];
        if let Some(d) = model.joint_dof(j) {
            tau[nb + d] = motion_subspace(joint.kind, &joint.axis).dot(&f[i]);
        }
        let p = model.parent_of(i).expect("non-base link");
        let fp = kin.local[i].inv_apply_force(&f[i]);
        f[p] += fp;
    }
    if nb == 6 {
        tau.fixed_rows_mut::<3>(0).copy_from(&(rot * lin(&f[0])));
        tau.fixed_rows_mut::<3>(3).copy_from(&(rot * ang(&f[0])));
    }
    tau
}

/// world ← frame for every link and named frame.
pub fn forward_kinematics(
    model: &RobotModel,
    state: &RobotState,
) -> Result<BTreeMap<String, Isometry3<f64>>, KinDynError> {
    state.check(model)?;
    let kin = Kinematics::new(model, state);
    let mut out = BTreeMap::new();
    for name in model.frame_names() {
        let (_, pose) = kin.frame_pose(model, name)?;
        out.insert(name.to_string(), pose);
    }
    Ok(out)
}

pub fn mass_matrix(model: &RobotModel, state: &RobotState) -> Result<DMatrix<f64>, KinDynError> {
    state.check(model)?;
    Ok(crba(model, &Kinematics::new(model, state)))
}

/// h(q, ν): the generalized force that holds the robot at zero acceleration.
pub fn bias_forces(model: &RobotModel, state: &RobotState, gravity: &Vector3<f64>) -> Result<DVector<f64>, KinDynError> {
    state.check(model)?;
    Ok(rnea(model, state, &Kinematics::new(model, state), None, gravity, true))
}

/// Gravity part of the bias forces, h(q, 0).
pub fn gravity_forces(
    model: &RobotModel,
    state: &RobotState,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, KinDynError> {
    state.check(model)?;
    Ok(rnea(model, state, &Kinematics::new(model, state), None, gravity, false))
}

pub fn frame_jacobian(model: &RobotModel, state: &RobotState, frame: &str) -> Result<DMatrix<f64>, KinDynError> {
    state.check(model)?;
    let kin = Kinematics::new(model, state);
    let (link, pose) = kin.frame_pose(model, frame)?;
    Ok(jacobian_at(model, &kin, link, &pose.translation.vector))
}

/// J̇ν of a frame: its linear and angular acceleration when ν̇ = 0.
pub fn frame_bias_acceleration(
    model: &RobotModel,
    state: &RobotState,
    frame: &str,
) -> Result<Vector6<f64>, KinDynError> {
    state.check(model)?;
    let kin = Kinematics::new(model, state);
    let (link, pose) = kin.frame_pose(model, frame)?;
    let motion = WorldMotion::new(model, state, &kin);
    Ok(motion.frame_bias(link, &kin.pose[link].translation.vector, &pose.translation.vector))
}

/// Generalized forces τ with `M·accel + h = τ + Σ Jᵀ w` for the given external wrenches.
pub fn inverse_dynamics(
    model: &RobotModel,
    state: &RobotState,
    accel: &DVector<f64>,
    external: &WrenchMap,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, KinDynError> {
    state.check(model)?;
    check_len("accel", model.nv(), accel.len())?;
    let kin = Kinematics::new(model, state);
    let mut tau = rnea(model, state, &kin, Some(accel), gravity, true);
    for (frame, w) in external {
        let (link, pose) = kin.frame_pose(model, frame)?;
        tau -= jacobian_at(model, &kin, link, &pose.translation.vector).transpose() * w;
    }
    Ok(tau)
}

/// Sᵀτ: joint torques placed in the generalized force vector.
pub fn actuated_forces(model: &RobotModel, joint_torques: &DVector<f64>) -> Result<DVector<f64>, KinDynError> {
    check_len("joint_torques", model.dof_count(), joint_torques.len())?;
    let mut out = DVector::zeros(model.nv());
    out.rows_mut(model.base_dofs(), model.dof_count()).copy_from(joint_torques);
    Ok(out)
}

/// Σ Jᵀ w over the given wrenches.
pub fn external_forces(
    model: &RobotModel,
    state: &RobotState,
    external: &WrenchMap,
) -> Result<DVector<f64>, KinDynError> {
    let mut out = DVector::zeros(model.nv());
    if external.is_empty() {
        return Ok(out);
    }
    let kin = Kinematics::new(model, state);
    for (frame, w) in external {
        let (link, pose) = kin.frame_pose(model, frame)?;
        out += jacobian_at(model, &kin, link, &pose.translation.vector).transpose() * w;
    }
    Ok(out)
}

/// Solves `M ν̇ = rhs` by Cholesky.
pub fn solve_mass_matrix(mass_matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, KinDynError> {
    let chol = mass_matrix.clone().cholesky().ok_or(KinDynError::SingularMassMatrix)?;
    Ok(chol.solve(rhs))
}

/// ν̇ = M⁻¹(Sᵀτ + Σ Jᵀ w − h).
pub fn forward_dynamics(
    model: &RobotModel,
    state: &RobotState,
    joint_torques: &DVector<f64>,
    external: &WrenchMap,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, KinDynError> {
    state.check(model)?;
    let kin = Kinematics::new(model, state);
    let m = crba(model, &kin);
    let h = rnea(model, state, &kin, None, gravity, true);
    let rhs = actuated_forces(model, joint_torques)? + external_forces(model, state, external)? - h;
    solve_mass_matrix(&m, &rhs)
}

/// One kinematic pass producing every per-step quantity. Jacobians and bias
/// accelerations are evaluated for foot frames and loop-closure frames.
pub fn compute_quantities(
    model: &RobotModel,
    state: &RobotState,
    gravity: &Vector3<f64>,
) -> Result<KinDynQuantities, KinDynError> {
    state.check(model)?;
    let kin = Kinematics::new(model, state);
    let motion = WorldMotion::new(model, state, &kin);

    let mut world_transforms = BTreeMap::new();
    for name in model.frame_names() {
        world_transforms.insert(name.to_string(), kin.frame_pose(model, name)?.1);
    }

    let tracked = model
        .feet()
        .iter()
        .map(|f| f.link_name.as_str())
        .chain(model.loop_closures().iter().flat_map(|c| [c.frame_a.as_str(), c.frame_b.as_str()]));
    let mut frame_jacobians = BTreeMap::new();
    let mut frame_bias_accelerations = BTreeMap::new();
    for name in tracked {
        if frame_jacobians.contains_key(name) {
            continue;
        }
        let (link, pose) = kin.frame_pose(model, name)?;
        let p = pose.translation.vector;
        frame_jacobians.insert(name.to_string(), jacobian_at(model, &kin, link, &p));
        frame_bias_accelerations
            .insert(name.to_string(), motion.frame_bias(link, &kin.pose[link].translation.vector, &p));
    }

    Ok(KinDynQuantities {
        mass_matrix: crba(model, &kin),
        bias_forces: rnea(model, state, &kin, None, gravity, true),
        world_transforms,
        frame_jacobians,
        frame_bias_accelerations,
        gravity: *gravity,
    })
}

pub fn kinetic_energy(model: &RobotModel, state: &RobotState) -> Result<f64, KinDynError> {
    let m = mass_matrix(model, state)?;
    let nu = state.velocity(model);
    Ok(0.5 * nu.dot(&(m * &nu)))
}

/// Gravitational potential energy relative to the world origin.
pub fn potential_energy(model: &RobotModel, state: &RobotState, gravity: &Vector3<f64>) -> Result<f64, KinDynError> {
    state.check(model)?;
    let kin = Kinematics::new(model, state);
    Ok(model
        .links()
        .iter()
        .zip(&kin.pose)
        .map(|(l, pose)| -l.mass * gravity.dot(&pose.transform_point(&l.com_offset.into()).coords))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn single_body_mass_matrix_is_block_diagonal() {
        let inertia = Matrix3::new(0.3, 0.01, 0.0, 0.01, 0.2, 0.02, 0.0, 0.02, 0.1);
        let model = fixtures::single_body(2.0, inertia, Vector3::zeros());
        let mut state = RobotState::new(&model);
        state.base_position = Vector3::new(1.0, 2.0, 3.0);
        let m = mass_matrix(&model, &state).unwrap();
        let mut expected = DMatrix::zeros(6, 6);
        expected.view_mut((0, 0), (3, 3)).copy_from(&(Matrix3::identity() * 2.0));
        expected.view_mut((3, 3), (3, 3)).copy_from(&inertia);
        assert_relative_eq!(m, expected, epsilon = 1e-14);
    }

    #[test]
    fn double_pendulum_mass_matrix_at_zero() {
        // Point masses of 1 kg at the ends of two 1 m links.
        let model = fixtures::double_pendulum_point_mass(1.0, 1.0, 0.0);
        let state = RobotState::new(&model);
        let m = mass_matrix(&model, &state).unwrap();
        assert_relative_eq!(m[(0, 0)], 5.0, epsilon = 1e-12);
        assert_relative_eq!(m[(0, 1)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(m[(1, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(m[(1, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pendulum_tip_kinematics() {
        let model = fixtures::planar_pendulum(1.0, 1.0);
        let mut state = RobotState::new(&model);
        let j0 = frame_jacobian(&model, &state, "tip").unwrap();
        assert_relative_eq!(j0.fixed_view::<3, 1>(0, 0).into_owned(), Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        state.joint_positions[0] = FRAC_PI_2;
        let fk = forward_kinematics(&model, &state).unwrap();
        assert_relative_eq!(fk["tip"].translation.vector, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn centripetal_bias_of_spinning_pendulum() {
        let model = fixtures::planar_pendulum(1.0, 0.7);
        let mut state = RobotState::new(&model);
        state.joint_positions[0] = 0.3;
        state.joint_velocities[0] = 2.0;
        let b = frame_bias_acceleration(&model, &state, "tip").unwrap();
        let tip = forward_kinematics(&model, &state).unwrap()["tip"].translation.vector;
        let expected = -tip * 4.0;
        assert_relative_eq!(b.fixed_rows::<3>(0).into_owned(), expected, epsilon = 1e-12);
        assert_relative_eq!(b.fixed_rows::<3>(0).norm(), 0.7 * 4.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_velocity_gives_zero_bias_acceleration() {
        let model = fixtures::branched_floating();
        let mut state = fixtures::random_state(&model, 7);
        state.base_twist = Vector6::zeros();
        state.joint_velocities.fill(0.0);
        for f in ["foot_a", "foot_b", "torso"] {
            assert_eq!(frame_bias_acceleration(&model, &state, f).unwrap(), Vector6::zeros());
        }
    }

    #[test]
    fn base_jacobian_is_identity_block() {
        let model = fixtures::branched_floating();
        let state = fixtures::random_state(&model, 3);
        let j = frame_jacobian(&model, &state, model.base_link()).unwrap();
        assert_relative_eq!(j.view((0, 0), (6, 6)).into_owned(), DMatrix::identity(6, 6), epsilon = 1e-15);
        assert!(j.view((0, 6), (6, model.dof_count())).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn free_fall_and_static_closure() {
        let model = fixtures::single_body(1.0, Matrix3::identity(), Vector3::zeros());
        let state = RobotState::new(&model);
        let g = default_gravity();
        let acc = forward_dynamics(&model, &state, &DVector::zeros(0), &WrenchMap::new(), &g).unwrap();
        assert_relative_eq!(acc, DVector::from_vec(vec![0.0, 0.0, -9.81, 0.0, 0.0, 0.0]), epsilon = 1e-15);
        let h = bias_forces(&model, &state, &g).unwrap();
        assert_relative_eq!(h[2], 9.81, epsilon = 1e-15);

        let arm = fixtures::branched_floating();
        let mut s = fixtures::random_state(&arm, 11);
        s.base_twist = Vector6::zeros();
        s.joint_velocities.fill(0.0);
        let zero_g = Vector3::zeros();
        assert!(bias_forces(&arm, &s, &zero_g).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gyroscopic_forces_do_no_work() {
        let inertia = Matrix3::from_diagonal(&Vector3::new(0.1, 0.2, 0.35));
        let model = fixtures::single_body(1.5, inertia, Vector3::zeros());
        let mut state = RobotState::new(&model);
        state.base_orientation = UnitQuaternion::from_euler_angles(0.2, 0.4, -0.1);
        state.base_twist = Vector6::new(0.3, -0.2, 0.1, 1.0, -2.0, 3.0);
        let h = bias_forces(&model, &state, &Vector3::zeros()).unwrap();
        let nu = state.velocity(&model);
        assert!(nu.dot(&h).abs() < 1e-10, "power {}", nu.dot(&h));
    }

    #[test]
    fn bias_power_matches_mass_matrix_rate() {
        // With the com off the base origin M varies along the motion, and
        // energy conservation gives νᵀh = ½ νᵀ Ṁ ν at zero gravity.
        let model = fixtures::branched_floating();
        let state = fixtures::random_state(&model, 21);
        let nu = state.velocity(&model);
        let h = bias_forces(&model, &state, &Vector3::zeros()).unwrap();
        let advance = |dt: f64| {
            let mut s = state.clone();
            s.base_position += state.base_twist.fixed_rows::<3>(0) * dt;
            let w = state.base_twist.fixed_rows::<3>(3).into_owned();
            s.base_orientation = UnitQuaternion::from_scaled_axis(w * dt) * state.base_orientation;
            s.joint_positions += &state.joint_velocities * dt;
            mass_matrix(&model, &s).unwrap()
        };
        let eps = 1e-6;
        let mdot = (advance(eps) - advance(-eps)) / (2.0 * eps);
        let expected = 0.5 * nu.dot(&(mdot * &nu));
        assert_relative_eq!(nu.dot(&h), expected, epsilon = 1e-6);
    }

    #[test]
    fn dimension_and_frame_errors() {
        let model = fixtures::planar_pendulum(1.0, 1.0);
        let mut state = RobotState::new(&model);
        assert!(matches!(frame_jacobian(&model, &state, "nope"), Err(KinDynError::UnknownFrame(_))));
        state.joint_positions = DVector::zeros(3);
        assert!(matches!(mass_matrix(&model, &state), Err(KinDynError::Dimension { .. })));
    }

    #[test]
    fn external_wrench_shifts_inverse_dynamics_by_jacobian_transpose() {
        let model = fixtures::branched_floating();
        let state = fixtures::random_state(&model, 5);
        let g = default_gravity();
        let acc = DVector::zeros(model.nv());
        let base = inverse_dynamics(&model, &state, &acc, &WrenchMap::new(), &g).unwrap();
        let w = Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        let ext = WrenchMap::from([("foot_a".to_string(), w)]);
        let shifted = inverse_dynamics(&model, &state, &acc, &ext, &g).unwrap();
        let j = frame_jacobian(&model, &state, "foot_a").unwrap();
        assert_relative_eq!(shifted, base - j.transpose() * w, epsilon = 1e-10);
    }
}
