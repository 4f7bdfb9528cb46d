use nalgebra::DVector;

use super::{Command, ControlOutput, ControllerConfig, ControllerState, Phase};

/// Advances the phase machine with the measured total normal force.
/// Returns the new phase on a transition.
///
/// Launch ends when the force drops below the take-off threshold or when
/// `t` passes the profile take-off time plus the guard. Landing starts once
/// the robot has been airborne for the arming delay and the force exceeds
/// the touchdown threshold.
pub fn phase_step(
    state: &mut ControllerState,
    config: &ControllerConfig,
    normal_force: f64,
    t: f64,
    takeoff_time: f64,
) -> Option<Phase> {
    if state.airborne_since.is_none() && t > 0.0 && normal_force < config.takeoff_force {
        state.airborne_since = Some(t);
    }
    let next = match state.phase {
        Phase::Launch => {
            let lifted = t > 0.0 && normal_force < config.takeoff_force;
            (lifted || t > takeoff_time + config.takeoff_guard).then_some(Phase::Aerial)
        }
        Phase::Aerial => state
            .airborne_since
            .filter(|&since| t - since >= config.arming_delay && normal_force > config.touchdown_force)
            .map(|_| Phase::Landing),
        Phase::Landing => None,
    };
    if let Some(p) = next {
        state.phase = p;
        state.phase_start = t;
    }
    next
}

/// Joint reference along the retraction segment.
pub fn aerial_tick(state: &ControllerState, t: f64) -> ControlOutput {
    let (start, seg) = state.aerial.as_ref().expect("retraction is set up before the aerial phase");
    let (position, velocity, _) = seg.eval(t - start);
    ControlOutput { command: Command::Position { position, velocity }, clamped: false, diagnostics: None }
}

/// Holds the landing configuration.
pub fn landing_tick(state: &ControllerState) -> ControlOutput {
    let position = state.landing.clone().expect("landing posture is set on take-off");
    let velocity = DVector::zeros(position.len());
    ControlOutput { command: Command::Position { position, velocity }, clamped: false, diagnostics: None }
}
