//! Ideal IMU attached to a model frame.

use nalgebra::{DVector, UnitQuaternion, Vector3};

use crate::kindyn::{forward_kinematics, frame_bias_acceleration, frame_jacobian, KinDynError, RobotState};
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading {
    /// Mount-to-world rotation.
    pub orientation: UnitQuaternion<f64>,
    /// Mount frame, rad/s.
    pub angular_velocity: Vector3<f64>,
    /// Proper acceleration a − g in the mount frame, m/s².
    pub linear_acceleration: Vector3<f64>,
}

/// Reads an IMU mounted on `frame` given the generalized acceleration `accel`.
pub fn imu_measure(
    model: &RobotModel,
    state: &RobotState,
    accel: &DVector<f64>,
    frame: &str,
    gravity: &Vector3<f64>,
) -> Result<ImuReading, KinDynError> {
    let poses = forward_kinematics(model, state)?;
    let pose = poses.get(frame).ok_or_else(|| KinDynError::UnknownFrame(frame.to_string()))?;
    let jac = frame_jacobian(model, state, frame)?;
    if accel.len() != model.nv() {
        return Err(KinDynError::Dimension { what: "accel", expected: model.nv(), got: accel.len() });
    }
    let twist = &jac * state.velocity(model);
    let acc = &jac * accel + frame_bias_acceleration(model, state, frame)?;
    let r = pose.rotation;
    let omega = Vector3::new(twist[3], twist[4], twist[5]);
    let a = Vector3::new(acc[0], acc[1], acc[2]);
    Ok(ImuReading {
        orientation: r,
        angular_velocity: r.inverse_transform_vector(&omega),
        linear_acceleration: r.inverse_transform_vector(&(a - gravity)),
    })
}
