//! Vertical CoM launch profiles and minimum-jerk joint segments.

mod minjerk;
mod profile;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use minjerk::MinJerkSegment;
pub use profile::{CubicCurve, LaunchProfile, NormalizedCurve, ProfileSample, TimeScaling};

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("invalid jump parameters: {0}")]
    InvalidParams(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid min-jerk segment: {0}")]
    InvalidSegment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Desired jump: apex rise above take-off `Δh = h_p − h_to`, CoM
/// displacement `d` over the launch, and gravity magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpParams {
    pub height: f64,
    pub displacement: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl JumpParams {
    pub fn new(height: f64, displacement: f64, gravity: f64) -> Result<Self, TrajError> {
        let p = Self { height, displacement, gravity };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), TrajError> {
        for (name, v) in [("height", self.height), ("displacement", self.displacement), ("gravity", self.gravity)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(TrajError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for JumpParams {
    /// 4 cm jump launched over 11 cm.
    fn default() -> Self {
        Self { height: 0.04, displacement: 0.11, gravity: 9.81 }
    }
}

/// Vertical take-off speed reaching an apex `height` above the take-off CoM:
/// `√(2gΔh)`.
pub fn takeoff_speed(params: &JumpParams) -> f64 {
    (2.0 * params.gravity * params.height).sqrt()
}
