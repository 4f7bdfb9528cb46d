use std::fmt::Debug;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{takeoff_speed, JumpParams, TrajError};

/// Launch velocity shape on `t̂ ∈ [0, 1]` with `v̂(0) = 0`, `v̂′(0) = 0` and
/// `v̂(1) = 1`.
pub trait NormalizedCurve: Debug + Send + Sync {
    fn velocity(&self, t: f64) -> f64;
    fn acceleration(&self, t: f64) -> f64;
    /// `∫₀ᵗ v̂`.
    fn displacement(&self, t: f64) -> f64;

    /// `D̂ = ∫₀¹ v̂`.
    fn unit_displacement(&self) -> f64 {
        self.displacement(1.0)
    }
}

/// `v̂(t̂) = a·t̂² + (1 − a)·t̂³`.
///
/// `a = 3` is smoothstep (`D̂ = ½`, zero final acceleration). `D̂ = (a + 3)/12`
/// and `v̂′(1) = 3 − a`, so `a > 3` ends the launch decelerating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubicCurve {
    pub a: f64,
}

impl CubicCurve {
    pub fn smoothstep() -> Self {
        Self { a: 3.0 }
    }

    /// Member of the family with the given unit displacement.
    pub fn with_unit_displacement(d_hat: f64) -> Result<Self, TrajError> {
        let c = Self { a: 12.0 * d_hat - 3.0 };
        c.validate()?;
        Ok(c)
    }

    /// Requires `v̂ > 0` on `(0, 1]`, i.e. `a > 0`.
    pub fn validate(&self) -> Result<(), TrajError> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(TrajError::InvalidCurve(format!("cubic coefficient a = {} must be positive", self.a)));
        }
        Ok(())
    }
}

impl Default for CubicCurve {
    fn default() -> Self {
        Self::smoothstep()
    }
}

impl NormalizedCurve for CubicCurve {
    fn velocity(&self, t: f64) -> f64 {
        t * t * (self.a + (1.0 - self.a) * t)
    }

    fn acceleration(&self, t: f64) -> f64 {
        t * (2.0 * self.a + 3.0 * (1.0 - self.a) * t)
    }

    fn displacement(&self, t: f64) -> f64 {
        t * t * t * (self.a / 3.0 + (1.0 - self.a) * t / 4.0)
    }
}

/// How the normalized curve is stretched to physical time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScaling {
    /// `T = d / (v_to·D̂)`: the launch covers exactly `d`.
    #[default]
    Displacement,
    /// `T = −v_to·v̂′(1) / g`: the launch ends at `z̈ = −g`. The displacement
    /// then follows from the curve.
    FinalAcceleration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub z: f64,
    pub zdot: f64,
    pub zddot: f64,
}

/// Desired vertical CoM motion, relative to the squat height at `t = 0`.
///
/// Before `t = 0` the profile rests at zero; after take-off it continues
/// ballistically.
#[derive(Debug, Clone)]
pub struct LaunchProfile {
    curve: Arc<dyn NormalizedCurve>,
    takeoff_time: f64,
    takeoff_speed: f64,
    gravity: f64,
}

impl LaunchProfile {
    pub fn new(
        params: &JumpParams,
        curve: impl NormalizedCurve + 'static,
        scaling: TimeScaling,
    ) -> Result<Self, TrajError> {
        params.validate()?;
        let v = takeoff_speed(params);
        let d_hat = curve.unit_displacement();
        if !(d_hat.is_finite() && d_hat > 0.0) {
            return Err(TrajError::InvalidCurve(format!("unit displacement {d_hat} must be positive")));
        }
        let t = match scaling {
            TimeScaling::Displacement => params.displacement / (v * d_hat),
            TimeScaling::FinalAcceleration => {
                let end = curve.acceleration(1.0);
                if end >= 0.0 {
                    return Err(TrajError::InvalidCurve(format!(
                        "final-acceleration scaling needs a decelerating curve end, v̂′(1) = {end}"
                    )));
                }
                -v * end / params.gravity
            }
        };
        Ok(Self { curve: Arc::new(curve), takeoff_time: t, takeoff_speed: v, gravity: params.gravity })
    }

    /// Smoothstep curve with displacement scaling.
    pub fn smoothstep(params: &JumpParams) -> Result<Self, TrajError> {
        Self::new(params, CubicCurve::smoothstep(), TimeScaling::Displacement)
    }

    pub fn takeoff_time(&self) -> f64 {
        self.takeoff_time
    }

    pub fn takeoff_speed(&self) -> f64 {
        self.takeoff_speed
    }

    /// CoM rise over the launch.
    pub fn displacement(&self) -> f64 {
        self.takeoff_speed * self.takeoff_time * self.curve.unit_displacement()
    }

    pub fn curve(&self) -> &dyn NormalizedCurve {
        self.curve.as_ref()
    }

    pub fn sample(&self, t: f64) -> ProfileSample {
        let (v, big_t) = (self.takeoff_speed, self.takeoff_time);
        if t <= 0.0 {
            return ProfileSample { z: 0.0, zdot: 0.0, zddot: 0.0 };
        }
        if t <= big_t {
            let u = t / big_t;
            return ProfileSample {
                z: v * big_t * self.curve.displacement(u),
                zdot: v * self.curve.velocity(u),
                zddot: v * self.curve.acceleration(u) / big_t,
            };
        }
        let dt = t - big_t;
        ProfileSample {
            z: self.displacement() + v * dt - 0.5 * self.gravity * dt * dt,
            zdot: v - self.gravity * dt,
            zddot: -self.gravity,
        }
    }

    /// Writes `t,z_d,zdot_d,zddot_d` rows from 0 to take-off inclusive.
    pub fn write_csv(&self, mut out: impl Write, dt: f64) -> Result<(), TrajError> {
        if !(dt > 0.0) {
            return Err(TrajError::InvalidParams(format!("sample period {dt} must be positive")));
        }
        writeln!(out, "t,z_d,zdot_d,zddot_d")?;
        let n = (self.takeoff_time / dt).ceil() as usize;
        for k in 0..=n {
            let t = (k as f64 * dt).min(self.takeoff_time);
            let s = self.sample(t);
            writeln!(out, "{t},{},{},{}", s.z, s.zdot, s.zddot)?;
        }
        Ok(())
    }
}
