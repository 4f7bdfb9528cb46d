//! Floating-base rigid-body dynamics for kinematic trees with revolute joints.
//!
//! Equations of motion follow `M(q) ν̇ + h(q, ν) = B τ + Σ Jₖᵀ fₖ`, where the
//! generalized velocity is `ν = (ṗ_B, ω_B, ṡ)`. All quantities are computed
//! with spatial vectors in inertial coordinates.

mod dynamics;
mod model;
mod spatial;
mod state;

pub use dynamics::{
    bias_forces, centroidal_momentum, centroidal_momentum_matrix, com_jacobian, com_position, forward_dynamics,
    frame_bias_acceleration, frame_jacobian, frame_pose, inverse_dynamics, kinetic_energy, mass_matrix,
    potential_energy, wrench_generalized_force, Kinematics, Matrix6xN, TORQUE_GUARD,
};
pub use model::{ContactPoint, Frame, FrameId, Joint, JointLimits, Link, Range, RobotModel};
pub use state::{CentroidalMomentum, RobotState, Wrench};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{what} has dimension {found}, model expects {expected}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("joint torque is not finite or exceeds the guard")]
    TorqueOutOfRange,
    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Standard gravity, pointing down the inertial z axis.
pub fn standard_gravity() -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(0.0, 0.0, -9.81)
}
