use nalgebra::DVector;

use super::TrajError;

/// Rest-to-rest minimum-jerk move `q₀ → q_f` over `duration` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct MinJerkSegment {
    start: DVector<f64>,
    end: DVector<f64>,
    duration: f64,
}

impl MinJerkSegment {
    pub fn new(start: DVector<f64>, end: DVector<f64>, duration: f64) -> Result<Self, TrajError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(TrajError::InvalidSegment(format!("duration {duration} must be positive")));
        }
        if start.len() != end.len() {
            return Err(TrajError::InvalidSegment(format!("start has {} entries, end has {}", start.len(), end.len())));
        }
        Ok(Self { start, end, duration })
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.start
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.end
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Position, velocity and acceleration at `t`. Times outside
    /// `[0, duration]` are clamped, so the segment holds its endpoints.
    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let big_t = self.duration;
        let u = (t / big_t).clamp(0.0, 1.0);
        let (u2, u3) = (u * u, u * u * u);
        let p = u3 * (10.0 - 15.0 * u + 6.0 * u2);
        let v = 30.0 * u2 * (1.0 - u) * (1.0 - u) / big_t;
        let a = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / (big_t * big_t);
        let delta = &self.end - &self.start;
        (&self.start + &delta * p, &delta * v, &delta * a)
    }
}
