use nalgebra::{Isometry3, UnitQuaternion, Vector3};

use super::{ContactReport, SimError, World};
use crate::control::Measurement;
use crate::multibody::{FrameId, Kinematics, RobotModel, RobotState};

/// Leg-kinematics CoM estimate: the chosen foot is assumed to stay at the
/// pose it had when the estimator was created.
#[derive(Debug, Clone)]
pub struct FootEstimator {
    pub frame: FrameId,
    pub reference: Isometry3<f64>,
}

impl FootEstimator {
    pub fn capture(model: &RobotModel, state: &RobotState, frame: FrameId) -> Result<Self, SimError> {
        let kin = Kinematics::new(model, state)?;
        Ok(Self { frame, reference: kin.frame_pose(model, frame) })
    }

    /// State with the base placed so the foot sits at its reference pose and
    /// the base twist chosen so the foot does not move.
    pub fn estimated_state(&self, model: &RobotModel, state: &RobotState) -> Result<RobotState, SimError> {
        let mut local = state.clone();
        local.base_position = Vector3::zeros();
        local.base_orientation = UnitQuaternion::identity();
        let foot_in_base = Kinematics::new(model, &local)?.frame_pose(model, self.frame);
        let base = self.reference * foot_in_base.inverse();
        let mut est = state.clone();
        est.base_position = base.translation.vector;
        est.base_orientation = base.rotation;
        est.velocity.rows_mut(0, 6).fill(0.0);
        let kin = Kinematics::new(model, &est)?;
        let j = kin.frame_jacobian(model, self.frame);
        let n = model.dof();
        let rhs = -(j.columns(6, n) * est.velocity.rows(6, n));
        let base_twist = j
            .fixed_columns::<6>(0)
            .into_owned()
            .lu()
            .solve(&rhs)
            .ok_or(crate::multibody::ModelError::SingularMassMatrix)?;
        est.velocity.rows_mut(0, 6).copy_from(&base_twist);
        Ok(est)
    }
}

/// Controller measurement from the simulated world.
pub fn measure(
    model: &RobotModel,
    world: &World,
    report: &ContactReport,
    estimator: &FootEstimator,
) -> Result<Measurement, SimError> {
    let kin = Kinematics::new(model, &world.state)?;
    let com = kin.com_position(model);
    let momentum = kin.centroidal_momentum(model);
    let est = estimator.estimated_state(model, &world.state)?;
    let ekin = Kinematics::new(model, &est)?;
    let com_estimate = ekin.com_position(model);
    let com_velocity_estimate = ekin.com_jacobian(model) * &est.velocity;
    Ok(Measurement {
        state: world.state.clone(),
        com,
        com_velocity: momentum.linear / model.total_mass(),
        com_estimate,
        com_velocity_estimate: Vector3::new(
            com_velocity_estimate[0],
            com_velocity_estimate[1],
            com_velocity_estimate[2],
        ),
        momentum,
        normal_force: report.normal_force,
    })
}
