use nalgebra::{DVector, Matrix3, UnitQuaternion, Vector3};

use super::{ModelError, RobotModel};

/// Configuration `(p_B, R_B, s)` and velocity `ν = (ṗ_B, ω_B, ṡ)`.
///
/// The base linear velocity is that of the base origin and the angular
/// velocity is expressed in inertial axes.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub base_position: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
    pub joint_positions: DVector<f64>,
    pub velocity: DVector<f64>,
}

impl RobotState {
    /// Base at the origin, identity orientation, all joints at zero, at rest.
    pub fn zeros(model: &RobotModel) -> Self {
        Self {
            base_position: Vector3::zeros(),
            base_orientation: UnitQuaternion::identity(),
            joint_positions: DVector::zeros(model.dof()),
            velocity: DVector::zeros(model.nv()),
        }
    }

    pub fn check(&self, model: &RobotModel) -> Result<(), ModelError> {
        if self.joint_positions.len() != model.dof() {
            return Err(ModelError::DimensionMismatch {
                what: "joint positions",
                expected: model.dof(),
                found: self.joint_positions.len(),
            });
        }
        if self.velocity.len() != model.nv() {
            return Err(ModelError::DimensionMismatch {
                what: "generalized velocity",
                expected: model.nv(),
                found: self.velocity.len(),
            });
        }
        Ok(())
    }

    pub fn base_rotation(&self) -> Matrix3<f64> {
        self.base_orientation.to_rotation_matrix().into_inner()
    }

    pub fn base_linear_velocity(&self) -> Vector3<f64> {
        self.velocity.fixed_rows::<3>(0).into_owned()
    }

    pub fn base_angular_velocity(&self) -> Vector3<f64> {
        self.velocity.fixed_rows::<3>(3).into_owned()
    }

    pub fn joint_velocities(&self) -> DVector<f64> {
        self.velocity.rows(6, self.velocity.len() - 6).into_owned()
    }

    pub fn set_joint_velocities(&mut self, sdot: &DVector<f64>) {
        let n = self.velocity.len() - 6;
        self.velocity.rows_mut(6, n).copy_from(sdot);
    }

    /// Base pitch: rotation about the inertial y axis, in radians.
    pub fn base_pitch(&self) -> f64 {
        let r = self.base_rotation();
        r[(0, 2)].atan2(r[(2, 2)])
    }

    pub fn is_finite(&self) -> bool {
        self.base_position.iter().all(|x| x.is_finite())
            && self.base_orientation.coords.iter().all(|x| x.is_finite())
            && self.joint_positions.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
    }

    /// Advance the configuration by `dt` along the current velocity; the
    /// orientation is updated with the exponential map.
    pub fn integrate_configuration(&mut self, dt: f64) {
        let v = self.base_linear_velocity();
        let w = self.base_angular_velocity();
        self.base_position += v * dt;
        self.base_orientation = UnitQuaternion::new_normalize(
            (UnitQuaternion::from_scaled_axis(w * dt) * self.base_orientation).into_inner(),
        );
        let n = self.joint_positions.len();
        self.joint_positions += self.velocity.rows(6, n) * dt;
    }

    /// Configuration displaced by `eps` along velocity coordinate `i`
    /// (the tangent-space `q ⊕ ε eᵢ`). Velocities are unchanged.
    pub fn perturbed(&self, i: usize, eps: f64) -> Self {
        let mut out = self.clone();
        match i {
            0..=2 => out.base_position[i] += eps,
            3..=5 => {
                let mut w = Vector3::zeros();
                w[i - 3] = eps;
                out.base_orientation = UnitQuaternion::from_scaled_axis(w) * self.base_orientation;
            }
            _ => out.joint_positions[i - 6] += eps,
        }
        out
    }
}

/// Wrench `[F; μ]` in inertial axes, with the moment taken about the origin
/// of the frame it is applied at.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl Wrench {
    pub fn new(force: Vector3<f64>, moment: Vector3<f64>) -> Self {
        Self { force, moment }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.moment.iter()).all(|x| x.is_finite())
    }
}

/// Linear and angular momentum about the instantaneous CoM, inertial axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CentroidalMomentum {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}
