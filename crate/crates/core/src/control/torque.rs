use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{
    clamp_to, solve_launch_qp, Command, ControlError, ControlOutput, ControllerConfig, ControllerState, Feet,
    Measurement,
};
use crate::multibody::{Kinematics, ModelError, RobotModel, Wrench};
use crate::qpsolver::{QpProblem, QpSolver, INF};

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Largest violation of the contact constraints (inscribed friction pyramid,
/// minimum normal force, centre of pressure inside the sole) by a foot
/// wrench. Zero when all hold.
pub fn contact_violation(w: &Wrench, config: &ControllerConfig) -> f64 {
    let mu = config.friction / std::f64::consts::SQRT_2;
    let (f, m) = (&w.force, &w.moment);
    [
        f.x.abs() - mu * f.z,
        f.y.abs() - mu * f.z,
        config.min_normal_force - f.z,
        m.x.abs() - config.sole_half_width * f.z,
        m.y.abs() - config.sole_half_length * f.z,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// One launch tick of the torque-controlled robot. The decision variable is
/// `u = [τ; F_l; μ_l; F_r; μ_r]`; the dynamics are eliminated through
/// `ν̇ = G u + ν̇₀`.
#[allow(clippy::too_many_arguments)]
pub fn torque_tick(
    model: &RobotModel,
    meas: &Measurement,
    profile: &crate::trajgen::LaunchProfile,
    t: f64,
    config: &ControllerConfig,
    state: &mut ControllerState,
    solver: &mut QpSolver,
    feet: Feet,
) -> Result<ControlOutput, ControlError> {
    let n = model.dof();
    let nv = model.nv();
    let nu = n + 12;
    let g = &config.gains;
    let dt = state.period;
    let kin = Kinematics::new(model, &meas.state)?;
    let s = &meas.state.joint_positions;
    let sdot = meas.state.joint_velocities();

    let mass = kin.mass_matrix(model);
    let bias = kin.bias_forces(model, &state.gravity);
    let chol = mass.cholesky().ok_or(ModelError::SingularMassMatrix)?;
    let jl = kin.frame_jacobian(model, feet.left);
    let jr = kin.frame_jacobian(model, feet.right);

    let mut b = DMatrix::zeros(nv, nu);
    for j in 0..n {
        b[(6 + j, j)] = 1.0;
    }
    b.columns_mut(n, 6).copy_from(&jl.transpose());
    b.columns_mut(n + 6, 6).copy_from(&jr.transpose());
    let gmat = chol.solve(&b);
    let nd0 = -chol.solve(&bias);
    let sg = gmat.rows(6, n).into_owned();
    let snd0 = nd0.rows(6, n).into_owned();

    // postural cost
    let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&g.lambda));
    let sdd_star = DVector::from_fn(n, |j, _| -g.kd_post * sdot[j] - g.kp_post * (s[j] - state.posture[j]));
    let mut h = sg.transpose() * &lambda * &sg;
    let mut grad = sg.transpose() * &lambda * (&snd0 - &sdd_star);
    for j in 0..n {
        h[(j, j)] += g.delta[j];
        grad[j] -= g.delta[j] * state.previous_command[j];
    }
    for i in n..nu {
        h[(i, i)] += config.force_regularization;
    }

    let momentum_rows = if config.disable_momentum_constraint { 0 } else { 3 };
    let eq = 3 + 12 + momentum_rows;
    let ineq = 2 * n + 2 * 9;
    let rows = eq + ineq;
    let mut a = DMatrix::zeros(rows, nu);
    let mut lb = DVector::from_element(rows, -INF);
    let mut ub = DVector::from_element(rows, INF);

    let sample = profile.sample(t);
    let x_d = state.com_reference + Vector3::new(0.0, 0.0, sample.z);
    let xd_dot = Vector3::new(0.0, 0.0, sample.zdot);
    let xd_ddot = Vector3::new(0.0, 0.0, sample.zddot);
    let jc = kin.com_jacobian(model);
    let (com, com_velocity) = meas.com_feedback(config.com_feedback());
    let com_rhs = xd_ddot
        - g.kp_com * (com - x_d)
        - g.kd_com * (com_velocity - xd_dot)
        - kin.com_bias_acceleration(model)
        - &jc * &nd0;
    // feet rows first, as in the velocity QP
    a.rows_mut(12, 3).copy_from(&(&jc * &gmat));
    lb.rows_mut(12, 3).copy_from(&com_rhs);
    ub.rows_mut(12, 3).copy_from(&com_rhs);
    for (k, (jf, frame)) in [(&jl, feet.left), (&jr, feet.right)].into_iter().enumerate() {
        let r = 6 * k;
        let rhs = -kin.frame_bias_acceleration(model, frame) - jf * &nd0;
        a.rows_mut(r, 6).copy_from(&(jf * &gmat));
        lb.rows_mut(r, 6).copy_from(&rhs);
        ub.rows_mut(r, 6).copy_from(&rhs);
    }
    if momentum_rows > 0 {
        // rate of H_ω from the contact wrenches about the CoM
        let c = meas.com;
        let rhs = -g.k_h * meas.momentum.angular;
        for (k, frame) in [feet.left, feet.right].into_iter().enumerate() {
            let arm = kin.frame_pose(model, frame).translation.vector - c;
            let col = n + 6 * k;
            a.view_mut((15, col), (3, 3)).copy_from(&skew(&arm));
            a.view_mut((15, col + 3), (3, 3)).copy_from(&Matrix3::identity());
        }
        lb.rows_mut(15, 3).copy_from(&rhs);
        ub.rows_mut(15, 3).copy_from(&rhs);
    }

    let mut r = eq;
    for (j, joint) in model.joints().iter().enumerate() {
        let lim = &joint.limits;
        a[(r, j)] = 1.0;
        lb[r] = lim.torque.lower;
        ub[r] = lim.torque.upper;
        r += 1;
        let lo =
            ((lim.velocity.lower - sdot[j]) / dt).max(2.0 * (lim.position.lower - s[j] - sdot[j] * dt) / (dt * dt));
        let hi =
            ((lim.velocity.upper - sdot[j]) / dt).min(2.0 * (lim.position.upper - s[j] - sdot[j] * dt) / (dt * dt));
        a.row_mut(r).copy_from(&sg.row(j));
        lb[r] = lo.min(hi) - snd0[j];
        ub[r] = hi - snd0[j];
        r += 1;
    }
    let mu = config.friction / std::f64::consts::SQRT_2;
    for k in 0..2 {
        let o = n + 6 * k;
        let (fz, fx, fy, mx, my) = (o + 2, o, o + 1, o + 3, o + 4);
        // each pair bounds x − c·F_z from above and x + c·F_z from below
        for (var, c) in [(fx, mu), (fy, mu), (mx, config.sole_half_width), (my, config.sole_half_length)] {
            a[(r, var)] = 1.0;
            a[(r, fz)] = -c;
            ub[r] = 0.0;
            r += 1;
            a[(r, var)] = 1.0;
            a[(r, fz)] = c;
            lb[r] = 0.0;
            r += 1;
        }
        a[(r, fz)] = 1.0;
        lb[r] = config.min_normal_force;
        r += 1;
    }
    debug_assert_eq!(r, rows);

    let problem = QpProblem::new(h, grad, a, lb, ub)?;
    let (sol, mut diag) = solve_launch_qp(problem, t, state, solver)?;
    let wrench = |o: usize| {
        Wrench::new(
            Vector3::new(sol.x[o], sol.x[o + 1], sol.x[o + 2]),
            Vector3::new(sol.x[o + 3], sol.x[o + 4], sol.x[o + 5]),
        )
    };
    diag.contact = Some([wrench(n), wrench(n + 6)]);
    let mut tau = sol.x.rows(0, n).into_owned();
    let clamped = clamp_to(&mut tau, model.joints().iter().map(|j| j.limits.torque));
    state.previous_command = tau.clone();
    Ok(ControlOutput { command: Command::Torque(tau), clamped, diagnostics: Some(diag) })
}
