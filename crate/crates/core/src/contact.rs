//! Ground contact: vertices on the feet, active-set detection, the
//! reaction-force QP, inelastic impacts and loop-closure constraints.
//!
//! Reaction forces minimize the weighted norm of the constrained
//! accelerations (contact vertices and closure frames) plus their Baumgarte
//! stabilization terms, subject to a friction pyramid on every active vertex.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector3, Vector6};
use thiserror::Error;

use crate::kindyn::{KinDynError, KinDynQuantities, RobotState};
use crate::model::{FootGeometry, RobotModel};
use crate::qpsolver::{QpError, QpOptions, QpProblem, QpSolver, QpStatus};
use crate::spatial::skew;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error(transparent)]
    KinDyn(#[from] KinDynError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("contact QP is infeasible")]
    QpInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactConfig {
    /// Friction coefficient of the pyramid.
    pub mu: f64,
    pub ground_height: f64,
    /// Vertices closer to the ground than this become active (m).
    pub activation_tol: f64,
    /// Baumgarte rate for ground and loop-closure stabilization (1/s).
    pub baumgarte_lambda: f64,
    /// Tikhonov weight on the decision variables.
    pub regularization: f64,
    /// Objective weight of the tangential acceleration rows relative to the
    /// normal and closure rows.
    pub tangential_weight: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            mu: 0.5,
            ground_height: 0.0,
            activation_tol: 1e-3,
            baumgarte_lambda: 20.0,
            regularization: 1e-6,
            tangential_weight: 0.01,
        }
    }
}

/// Vertex identity, ordered by foot name then index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    pub foot: String,
    pub index: usize,
}

impl VertexId {
    pub fn new(foot: impl Into<String>, index: usize) -> Self {
        VertexId { foot: foot.into(), index }
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.foot, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactVertex {
    pub id: VertexId,
    pub position_world: Vector3<f64>,
    pub velocity_world: Vector3<f64>,
    /// 3 × nv linear Jacobian of the point.
    pub jacobian: DMatrix<f64>,
    /// Acceleration of the point at ν̇ = 0.
    pub bias_acceleration: Vector3<f64>,
}

impl ContactVertex {
    pub fn gap(&self, ground_height: f64) -> f64 {
        self.position_world.z - ground_height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactResult {
    pub active: Vec<VertexId>,
    /// World-frame reaction force on every active vertex.
    pub forces: BTreeMap<VertexId, Vector3<f64>>,
    /// Wrench (force, torque) applied on frame_a and opposed on frame_b.
    pub closure_wrenches: BTreeMap<String, Vector6<f64>>,
    pub impulse_applied: bool,
    pub qp_status: QpStatus,
    /// Σ Jᵀ f over vertices and closures.
    pub generalized_force: DVector<f64>,
}

impl ContactResult {
    pub fn empty(nv: usize) -> Self {
        ContactResult {
            active: Vec::new(),
            forces: BTreeMap::new(),
            closure_wrenches: BTreeMap::new(),
            impulse_applied: false,
            qp_status: QpStatus::Optimal,
            generalized_force: DVector::zeros(nv),
        }
    }

    pub fn total_normal_force(&self) -> f64 {
        self.forces.values().map(|f| f.z).sum()
    }

    /// Smallest slack of the pyramid constraints over all forces (negative
    /// when violated).
    pub fn min_friction_slack(&self, mu: f64) -> f64 {
        self.forces
            .values()
            .map(|f| f.z.min(mu * f.z - f.x.abs()).min(mu * f.z - f.y.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Linear Jacobian, velocity and bias acceleration of a point `r` away from
/// the origin of a frame with 6-row Jacobian `j` and bias `bias`.
fn shifted_point(
    j: &DMatrix<f64>,
    bias: &Vector6<f64>,
    nu: &DVector<f64>,
    r: &Vector3<f64>,
) -> (DMatrix<f64>, Vector3<f64>, Vector3<f64>) {
    let j_lin = j.rows(0, 3);
    let j_ang = j.rows(3, 3);
    let mut jac = j_lin.into_owned();
    jac -= skew(r) * j_ang;
    let omega: Vector3<f64> = (j_ang * nu).fixed_rows::<3>(0).into_owned();
    let vel: Vector3<f64> = (&jac * nu).fixed_rows::<3>(0).into_owned();
    let a_lin = bias.fixed_rows::<3>(0).into_owned();
    let alpha = bias.fixed_rows::<3>(3).into_owned();
    let acc = a_lin + alpha.cross(r) + omega.cross(&omega.cross(r));
    (jac, vel, acc)
}

/// Contact vertices of every foot at the state `kindyn` was evaluated at.
///
/// A spherical foot's vertex is its lowest point. Its Jacobian is that of the
/// body point instantaneously there; its bias acceleration is that of the
/// sphere center, which is the bias of the rolling contact point.
pub fn contact_vertices(
    model: &RobotModel,
    state: &RobotState,
    kindyn: &KinDynQuantities,
) -> Result<Vec<ContactVertex>, ContactError> {
    state.check(model)?;
    let nu = state.velocity(model);
    let mut out = Vec::with_capacity(model.vertex_count());
    for foot in model.feet() {
        let pose = kindyn.transform(&foot.link_name)?;
        let j = kindyn.jacobian(&foot.link_name)?;
        let bias = kindyn.bias_acceleration(&foot.link_name)?;
        let origin = pose.translation.vector;
        match foot.geometry {
            FootGeometry::Rectangular { length, width, sole_height } => {
                for (index, corner) in FootGeometry::rectangular_corners(length, width, sole_height).iter().enumerate() {
                    let r = pose.rotation * corner;
                    let (jacobian, velocity_world, bias_acceleration) = shifted_point(j, bias, &nu, &r);
                    out.push(ContactVertex {
                        id: VertexId::new(&foot.link_name, index),
                        position_world: origin + r,
                        velocity_world,
                        jacobian,
                        bias_acceleration,
                    });
                }
            }
            FootGeometry::Spherical { radius, center_offset } => {
                let rc = pose.rotation * center_offset;
                let r = rc - Vector3::new(0.0, 0.0, radius);
                let (jacobian, velocity_world, _) = shifted_point(j, bias, &nu, &r);
                let (_, _, center_bias) = shifted_point(j, bias, &nu, &rc);
                out.push(ContactVertex {
                    id: VertexId::new(&foot.link_name, 0),
                    position_world: origin + r,
                    velocity_world,
                    jacobian,
                    bias_acceleration: center_bias,
                });
            }
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Vertices within `activation_tol` of the ground, in (foot, index) order.
pub fn detect_active_set(vertices: &[ContactVertex], ground_height: f64, activation_tol: f64) -> Vec<VertexId> {
    let mut ids: Vec<VertexId> =
        vertices.iter().filter(|v| v.gap(ground_height) <= activation_tol).map(|v| v.id.clone()).collect();
    ids.sort();
    ids
}

/// Active set with hysteresis: a previously active vertex stays active until
/// its normal force is zero and it has risen above the tolerance.
pub fn update_active_set(
    vertices: &[ContactVertex],
    previous: &ContactResult,
    config: &ContactConfig,
) -> Vec<VertexId> {
    let mut ids = detect_active_set(vertices, config.ground_height, config.activation_tol);
    for v in vertices {
        let loaded = previous.forces.get(&v.id).is_some_and(|f| f.z > FORCE_ZERO);
        if loaded && !ids.contains(&v.id) {
            ids.push(v.id.clone());
        }
    }
    ids.sort();
    ids
}

/// Normal forces at or below this are treated as zero (N).
pub const FORCE_ZERO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureConstraint {
    pub name: String,
    /// 6 × nv: J_a − J_b.
    pub jacobian: DMatrix<f64>,
    /// (J̇ν)_a − (J̇ν)_b.
    pub bias: Vector6<f64>,
    /// Position difference then rotation log of R_a R_bᵀ, world frame.
    pub error: Vector6<f64>,
}

pub fn loop_closure_constraints(
    model: &RobotModel,
    kindyn: &KinDynQuantities,
) -> Result<Vec<ClosureConstraint>, ContactError> {
    let mut out = Vec::with_capacity(model.loop_closures().len());
    for c in model.loop_closures() {
        let ta = kindyn.transform(&c.frame_a)?;
        let tb = kindyn.transform(&c.frame_b)?;
        let dp = ta.translation.vector - tb.translation.vector;
        let dr = (ta.rotation * tb.rotation.inverse()).scaled_axis();
        out.push(ClosureConstraint {
            name: c.name(),
            jacobian: kindyn.jacobian(&c.frame_a)? - kindyn.jacobian(&c.frame_b)?,
            bias: kindyn.bias_acceleration(&c.frame_a)? - kindyn.bias_acceleration(&c.frame_b)?,
            error: Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z),
        });
    }
    Ok(out)
}

/// Everything the force QP needs besides the vertices and closures.
#[derive(Debug, Clone, Copy)]
pub struct DynamicsTerms<'a> {
    pub mass_matrix: &'a DMatrix<f64>,
    pub bias_forces: &'a DVector<f64>,
    /// Applied generalized force: Sᵀτ plus external wrenches.
    pub applied: &'a DVector<f64>,
    pub velocity: &'a DVector<f64>,
}

fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, ContactError> {
    m.clone().cholesky().ok_or(ContactError::KinDyn(KinDynError::SingularMassMatrix))
}

/// Force QP solver that keeps its warm start across calls with the same
/// active set.
#[derive(Debug, Clone, Default)]
pub struct ContactSolver {
    pub config: ContactConfig,
    qp: QpSolver,
    last_active: Vec<VertexId>,
}

impl ContactSolver {
    pub fn new(config: ContactConfig) -> Self {
        ContactSolver { config, qp: QpSolver::new(QpOptions::default()), last_active: Vec::new() }
    }

    pub fn solve(
        &mut self,
        dynamics: DynamicsTerms<'_>,
        active: &[&ContactVertex],
        closures: &[ClosureConstraint],
    ) -> Result<ContactResult, ContactError> {
        let ids: Vec<VertexId> = active.iter().map(|v| v.id.clone()).collect();
        if ids != self.last_active {
            self.qp.reset();
            self.last_active = ids;
        }
        solve_with(&mut self.qp, &self.config, dynamics, active, closures)
    }
}

/// Stateless solve of the reaction forces.
pub fn solve_contact_forces(
    dynamics: DynamicsTerms<'_>,
    active: &[&ContactVertex],
    closures: &[ClosureConstraint],
    config: &ContactConfig,
) -> Result<ContactResult, ContactError> {
    solve_with(&mut QpSolver::new(QpOptions::default()), config, dynamics, active, closures)
}

fn solve_with(
    qp: &mut QpSolver,
    config: &ContactConfig,
    dynamics: DynamicsTerms<'_>,
    active: &[&ContactVertex],
    closures: &[ClosureConstraint],
) -> Result<ContactResult, ContactError> {
    let nv = dynamics.mass_matrix.nrows();
    let mut result = ContactResult::empty(nv);
    result.active = active.iter().map(|v| v.id.clone()).collect();
    if active.is_empty() && closures.is_empty() {
        return Ok(result);
    }
    let nvert = active.len();
    let k = 3 * nvert + 6 * closures.len();
    let lambda = config.baumgarte_lambda;

    let mut a = DMatrix::zeros(k, nv);
    let mut bias = DVector::zeros(k);
    let mut stab = DVector::zeros(k);
    let mut weight = DVector::from_element(k, 1.0);
    for (i, v) in active.iter().enumerate() {
        a.rows_mut(3 * i, 3).copy_from(&v.jacobian);
        bias.fixed_rows_mut::<3>(3 * i).copy_from(&v.bias_acceleration);
        let vel = v.velocity_world;
        let gap = v.gap(config.ground_height);
        stab[3 * i] = 2.0 * lambda * vel.x;
        stab[3 * i + 1] = 2.0 * lambda * vel.y;
        stab[3 * i + 2] = 2.0 * lambda * vel.z + lambda * lambda * gap;
        weight[3 * i] = config.tangential_weight;
        weight[3 * i + 1] = config.tangential_weight;
    }
    for (c, cl) in closures.iter().enumerate() {
        let r = 3 * nvert + 6 * c;
        a.rows_mut(r, 6).copy_from(&cl.jacobian);
        bias.fixed_rows_mut::<6>(r).copy_from(&cl.bias);
        let rel_vel = &cl.jacobian * dynamics.velocity;
        for i in 0..6 {
            stab[r + i] = 2.0 * lambda * rel_vel[i] + lambda * lambda * cl.error[i];
        }
    }

    let chol = cholesky(dynamics.mass_matrix)?;
    let minv_at = chol.solve(&a.transpose());
    let g = &a * &minv_at;
    let free = chol.solve(&(dynamics.applied - dynamics.bias_forces));
    let target = &a * free + bias + stab;
    let gw = DMatrix::from_fn(k, k, |i, j| weight[i] * g[(i, j)]);
    let mut q = g.transpose() * &gw;
    q = 0.5 * (&q + q.transpose());
    for i in 0..k {
        q[(i, i)] += 2.0 * config.regularization;
    }
    let c = gw.transpose() * &target;

    let rows = 5 * nvert;
    let mut cons = DMatrix::zeros(rows, k);
    let mut l = DVector::from_element(rows, f64::NEG_INFINITY);
    let mut u = DVector::from_element(rows, f64::INFINITY);
    let mu = config.mu;
    for i in 0..nvert {
        let (x, y, z, r) = (3 * i, 3 * i + 1, 3 * i + 2, 5 * i);
        cons[(r, z)] = 1.0;
        l[r] = 0.0;
        cons[(r + 1, x)] = 1.0;
        cons[(r + 1, z)] = -mu;
        u[r + 1] = 0.0;
        cons[(r + 2, x)] = 1.0;
        cons[(r + 2, z)] = mu;
        l[r + 2] = 0.0;
        cons[(r + 3, y)] = 1.0;
        cons[(r + 3, z)] = -mu;
        u[r + 3] = 0.0;
        cons[(r + 4, y)] = 1.0;
        cons[(r + 4, z)] = mu;
        l[r + 4] = 0.0;
    }

    let sol = qp.solve(&QpProblem { q, c, a: cons, l, u })?;
    if sol.status == QpStatus::Infeasible {
        return Err(ContactError::QpInfeasible);
    }
    result.qp_status = sol.status;
    let mut x = sol.x;
    for (i, v) in active.iter().enumerate() {
        // Strip solver round-off outside the pyramid.
        let f = project_to_pyramid(&x.fixed_rows::<3>(3 * i).into_owned(), mu);
        x.fixed_rows_mut::<3>(3 * i).copy_from(&f);
        result.forces.insert(v.id.clone(), f);
    }
    for (c, cl) in closures.iter().enumerate() {
        result.closure_wrenches.insert(cl.name.clone(), x.fixed_rows::<6>(3 * nvert + 6 * c).into_owned());
    }
    result.generalized_force = a.transpose() * &x;
    Ok(result)
}

fn project_to_pyramid(f: &Vector3<f64>, mu: f64) -> Vector3<f64> {
    let fz = f.z.max(0.0);
    let bound = mu * fz;
    Vector3::new(f.x.clamp(-bound, bound), f.y.clamp(-bound, bound), fz)
}

/// Damping added to the impact Delassus matrix.
pub const IMPACT_DAMPING: f64 = 1e-10;

/// Perfectly inelastic impact over all active vertices:
/// ν⁺ = ν⁻ − M⁻¹Jcᵀ(Jc M⁻¹ Jcᵀ + δI)⁻¹ Jc ν⁻. Returns ν⁻ unchanged when no
/// vertex newly touched down.
pub fn resolve_impacts(
    mass_matrix: &DMatrix<f64>,
    active: &[&ContactVertex],
    newly_active: &[VertexId],
    velocity: &DVector<f64>,
) -> Result<DVector<f64>, ContactError> {
    if newly_active.is_empty() || active.is_empty() {
        return Ok(velocity.clone());
    }
    let nv = mass_matrix.nrows();
    if velocity.len() != nv {
        return Err(KinDynError::Dimension { what: "velocity", expected: nv, got: velocity.len() }.into());
    }
    let mut jc = DMatrix::zeros(3 * active.len(), nv);
    for (i, v) in active.iter().enumerate() {
        jc.rows_mut(3 * i, 3).copy_from(&v.jacobian);
    }
    let chol = cholesky(mass_matrix)?;
    let minv_jt = chol.solve(&jc.transpose());
    let mut delassus = &jc * &minv_jt;
    for i in 0..delassus.nrows() {
        delassus[(i, i)] += IMPACT_DAMPING;
    }
    let dchol = delassus.clone().cholesky().ok_or(ContactError::KinDyn(KinDynError::SingularMassMatrix))?;
    let rhs = &jc * velocity;
    // Refinement against the undamped system recovers the projection
    // accuracy the damping costs on rank-deficient contact sets.
    let mut impulse = dchol.solve(&rhs);
    for _ in 0..2 {
        let residual = &rhs - (&delassus * &impulse - &impulse * IMPACT_DAMPING);
        impulse += dchol.solve(&residual);
    }
    Ok(velocity - minv_jt * impulse)
}

/// Kinetic energy ½νᵀMν.
pub fn kinetic_energy(mass_matrix: &DMatrix<f64>, velocity: &DVector<f64>) -> f64 {
    0.5 * velocity.dot(&(mass_matrix * velocity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::kindyn::{compute_quantities, default_gravity};
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    #[test]
    fn rectangular_vertices_at_sole_corners() {
        let model = fixtures::box_model(1.0, 0.2, 0.1, 0.0);
        let state = RobotState::new(&model);
        let kd = compute_quantities(&model, &state, &default_gravity()).unwrap();
        let v = contact_vertices(&model, &state, &kd).unwrap();
        assert_eq!(v.len(), 4);
        let expected = [(0.1, 0.05), (0.1, -0.05), (-0.1, 0.05), (-0.1, -0.05)];
        for (vert, (x, y)) in v.iter().zip(expected) {
            assert_relative_eq!(vert.position_world, Vector3::new(x, y, 0.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn spherical_vertex_is_lowest_point_under_rotation() {
        let model = fixtures::sphere_model(1.0, 0.05);
        let mut state = RobotState::new(&model);
        state.base_position.z = 0.05;
        for angles in [(0.0, 0.0, 0.0), (0.3, -1.2, 2.0)] {
            state.base_orientation = UnitQuaternion::from_euler_angles(angles.0, angles.1, angles.2);
            let kd = compute_quantities(&model, &state, &default_gravity()).unwrap();
            let v = contact_vertices(&model, &state, &kd).unwrap();
            assert_eq!(v.len(), 1);
            assert_relative_eq!(v[0].position_world, Vector3::zeros(), epsilon = 1e-15);
        }
    }

    #[test]
    fn detection_uses_tolerance_and_order() {
        let model = fixtures::box_model(1.0, 0.2, 0.2, 0.2);
        let mut state = RobotState::new(&model);
        state.base_position.z = 0.1 - 1e-4;
        let kd = compute_quantities(&model, &state, &default_gravity()).unwrap();
        let v = contact_vertices(&model, &state, &kd).unwrap();
        let ids = detect_active_set(&v, 0.0, 1e-3);
        assert_eq!(ids, (0..4).map(|i| VertexId::new("box", i)).collect::<Vec<_>>());
        state.base_position.z = 0.6;
        let kd = compute_quantities(&model, &state, &default_gravity()).unwrap();
        let v = contact_vertices(&model, &state, &kd).unwrap();
        assert!(detect_active_set(&v, 0.0, 1e-3).is_empty());
    }

    #[test]
    fn empty_problem_is_trivially_optimal() {
        let m = DMatrix::identity(6, 6);
        let z = DVector::zeros(6);
        let r = solve_contact_forces(
            DynamicsTerms { mass_matrix: &m, bias_forces: &z, applied: &z, velocity: &z },
            &[],
            &[],
            &ContactConfig::default(),
        )
        .unwrap();
        assert!(r.forces.is_empty());
        assert_eq!(r.qp_status, QpStatus::Optimal);
    }

    #[test]
    fn no_new_vertices_means_no_impulse() {
        let m = DMatrix::identity(6, 6);
        let nu = DVector::from_element(6, 0.3);
        assert_eq!(resolve_impacts(&m, &[], &[], &nu).unwrap(), nu);
    }
}
