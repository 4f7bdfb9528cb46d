use nalgebra::{DMatrix, DVector, Vector3};

use super::{
    clamp_to, solve_launch_qp, Command, ControlError, ControlOutput, ControllerConfig, ControllerState, Feet,
    Measurement,
};
use crate::multibody::{Kinematics, RobotModel};
use crate::qpsolver::{QpProblem, QpSolver};
use crate::trajgen::LaunchProfile;

/// One launch tick of the velocity-controlled robot: finds `ν` tracking the
/// CoM profile with both feet fixed and the integral of `H_ω` regulated to
/// zero, and returns the joint velocity part.
#[allow(clippy::too_many_arguments)]
pub fn velocity_tick(
    model: &RobotModel,
    meas: &Measurement,
    profile: &LaunchProfile,
    t: f64,
    config: &ControllerConfig,
    state: &mut ControllerState,
    solver: &mut QpSolver,
    feet: Feet,
) -> Result<ControlOutput, ControlError> {
    let n = model.dof();
    let nv = model.nv();
    let g = &config.gains;
    let dt = state.period;
    let kin = Kinematics::new(model, &meas.state)?;
    let s = &meas.state.joint_positions;

    state.momentum_integral += meas.momentum.angular * dt;

    let sample = profile.sample(t + config.reference_lead * dt);
    let x_d = state.com_reference + Vector3::new(0.0, 0.0, sample.z);
    let (com, _) = meas.com_feedback(config.com_feedback());
    let com_rhs = Vector3::new(0.0, 0.0, sample.zdot) - g.k_com * (com - x_d);

    let momentum_rows = if config.disable_momentum_constraint { 0 } else { 3 };
    let rows = 3 + 12 + momentum_rows + n;
    let mut a = DMatrix::zeros(rows, nv);
    let mut lb = DVector::zeros(rows);
    let mut ub = DVector::zeros(rows);

    // feet first: the other task rows are nearly dependent on them and the
    // solver admits equalities in row order
    a.rows_mut(0, 6).copy_from(&kin.frame_jacobian(model, feet.left));
    a.rows_mut(6, 6).copy_from(&kin.frame_jacobian(model, feet.right));
    a.rows_mut(12, 3).copy_from(&kin.com_jacobian(model));
    lb.rows_mut(12, 3).copy_from(&com_rhs);
    ub.rows_mut(12, 3).copy_from(&com_rhs);
    let mut r = 15;
    if momentum_rows > 0 {
        let jm = kin.centroidal_momentum_matrix(model);
        let rhs = -g.k_h * state.momentum_integral;
        a.rows_mut(r, 3).copy_from(&jm.fixed_rows::<3>(3));
        lb.rows_mut(r, 3).copy_from(&rhs);
        ub.rows_mut(r, 3).copy_from(&rhs);
        r += 3;
    }
    for (j, joint) in model.joints().iter().enumerate() {
        let lim = &joint.limits;
        a[(r + j, 6 + j)] = 1.0;
        lb[r + j] = lim.velocity.lower.max((lim.position.lower - s[j]) / dt);
        ub[r + j] = lim.velocity.upper.min((lim.position.upper - s[j]) / dt);
        if lb[r + j] > ub[r + j] {
            // outside the position range: allow the move back only
            let back = lim.velocity.clamp((lim.position.clamp(s[j]) - s[j]) / dt);
            lb[r + j] = back;
            ub[r + j] = back;
        }
    }

    let mut h = DMatrix::zeros(nv, nv);
    let mut grad = DVector::zeros(nv);
    for i in 0..6 {
        h[(i, i)] = config.base_regularization;
    }
    for j in 0..n {
        let target = -g.kp_post * (s[j] - state.posture[j]);
        h[(6 + j, 6 + j)] = g.lambda[j] + g.delta[j];
        grad[6 + j] = -(g.lambda[j] * target + g.delta[j] * state.previous_command[j]);
    }

    let problem = QpProblem::new(h, grad, a, lb, ub)?;
    let (sol, diag) = solve_launch_qp(problem, t, state, solver)?;
    let mut sdot = sol.x.rows(6, n).into_owned();
    let clamped = clamp_to(&mut sdot, model.joints().iter().map(|j| j.limits.velocity));
    state.previous_command = sdot.clone();
    Ok(ControlOutput { command: Command::Velocity(sdot), clamped, diagnostics: Some(diag) })
}
