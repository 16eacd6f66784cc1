//! Plücker spatial algebra in body coordinates, `[angular; linear]` ordering.

use nalgebra::{Isometry3, Matrix3, Matrix6, Vector3, Vector6};

pub(crate) type SpatialVec = Vector6<f64>;

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub(crate) fn ang(v: &SpatialVec) -> Vector3<f64> {
    v.fixed_rows::<3>(0).into_owned()
}

#[inline]
pub(crate) fn lin(v: &SpatialVec) -> Vector3<f64> {
    v.fixed_rows::<3>(3).into_owned()
}

#[inline]
pub(crate) fn join(a: &Vector3<f64>, l: &Vector3<f64>) -> SpatialVec {
    SpatialVec::new(a.x, a.y, a.z, l.x, l.y, l.z)
}

/// Coordinate transform from frame A to frame B: `rot` maps A coordinates to
/// B coordinates and `trans` is B's origin expressed in A.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Xform {
    rot: Matrix3<f64>,
    trans: Vector3<f64>,
}

impl Xform {
    /// From the pose of B expressed in A.
    pub fn from_pose(pose: &Isometry3<f64>) -> Self {
        Xform { rot: pose.rotation.to_rotation_matrix().matrix().transpose(), trans: pose.translation.vector }
    }

    pub fn apply_motion(&self, m: &SpatialVec) -> SpatialVec {
        let w = ang(m);
        let v = lin(m);
        join(&(self.rot * w), &(self.rot * (v - self.trans.cross(&w))))
    }

    /// Maps a force in B coordinates back to A: `Xᵀ f`.
    pub fn inv_apply_force(&self, f: &SpatialVec) -> SpatialVec {
        let fa = self.rot.transpose() * lin(f);
        let na = self.rot.transpose() * ang(f) + self.trans.cross(&fa);
        join(&na, &fa)
    }

    pub fn motion_matrix(&self) -> Matrix6<f64> {
        let mut x = Matrix6::zeros();
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rot);
        x.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-self.rot * skew(&self.trans)));
        x
    }
}

/// `v ×` acting on a motion vector.
pub(crate) fn cross_motion(v: &SpatialVec, m: &SpatialVec) -> SpatialVec {
    let (w, vl) = (ang(v), lin(v));
    let (mw, mv) = (ang(m), lin(m));
    join(&w.cross(&mw), &(w.cross(&mv) + vl.cross(&mw)))
}

/// `v ×*` acting on a force vector.
pub(crate) fn cross_force(v: &SpatialVec, f: &SpatialVec) -> SpatialVec {
    let (w, vl) = (ang(v), lin(v));
    let (n, fl) = (ang(f), lin(f));
    join(&(w.cross(&n) + vl.cross(&fl)), &w.cross(&fl))
}

/// Rigid-body inertia about a body frame origin.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SpatialInertia {
    mass: f64,
    /// mass times center of mass
    h: Vector3<f64>,
    /// rotational inertia about the origin
    inertia_origin: Matrix3<f64>,
}

impl SpatialInertia {
    pub fn new(mass: f64, com: &Vector3<f64>, inertia_com: &Matrix3<f64>) -> Self {
        let sc = skew(com);
        SpatialInertia { mass, h: mass * com, inertia_origin: inertia_com + mass * sc * sc.transpose() }
    }

    pub fn mul(&self, v: &SpatialVec) -> SpatialVec {
        let (w, vl) = (ang(v), lin(v));
        join(&(self.inertia_origin * w + self.h.cross(&vl)), &(self.mass * vl - self.h.cross(&w)))
    }

    pub fn matrix(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        let sh = skew(&self.h);
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.inertia_origin);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&sh);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&sh.transpose());
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * self.mass));
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Translation3, UnitQuaternion};

    fn pose() -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(0.3, -0.2, 0.5),
            UnitQuaternion::from_euler_angles(0.4, -0.7, 1.1),
        )
    }

    #[test]
    fn matrix_forms_agree_with_operators() {
        let x = Xform::from_pose(&pose());
        let m = SpatialVec::new(0.1, 0.2, -0.3, 1.0, -2.0, 0.5);
        assert_relative_eq!(x.motion_matrix() * m, x.apply_motion(&m), epsilon = 1e-14);
        assert_relative_eq!(x.motion_matrix().transpose() * m, x.inv_apply_force(&m), epsilon = 1e-14);
        let i = SpatialInertia::new(2.0, &Vector3::new(0.1, 0.0, -0.2), &Matrix3::from_diagonal_element(0.3));
        assert_relative_eq!(i.matrix() * m, i.mul(&m), epsilon = 1e-14);
    }

    #[test]
    fn force_cross_is_dual_of_motion_cross() {
        let v = SpatialVec::new(0.3, -0.1, 0.7, 0.2, 0.9, -0.4);
        let m = SpatialVec::new(1.0, 2.0, 3.0, -1.0, 0.5, 0.25);
        let f = SpatialVec::new(-0.2, 0.4, 0.1, 0.6, -0.3, 0.8);
        // (v × m) · f = -m · (v ×* f)
        assert_relative_eq!(cross_motion(&v, &m).dot(&f), -m.dot(&cross_force(&v, &f)), epsilon = 1e-14);
    }
}
