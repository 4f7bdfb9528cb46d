//! Launch-phase QP controllers, the jump phase machine and the aerial/landing
//! position references.

mod phase;
mod torque;
mod velocity;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multibody::{CentroidalMomentum, FrameId, ModelError, RobotModel, RobotState, Wrench};
use crate::qpsolver::{QpError, QpProblem, QpSolver, QpStatus, WarmStart};
use crate::trajgen::{LaunchProfile, MinJerkSegment};

pub use phase::{aerial_tick, landing_tick, phase_step};
pub use torque::{contact_violation, torque_tick};
pub use velocity::velocity_tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    #[default]
    Velocity,
    Torque,
}

/// Which CoM measurement closes the CoM task loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComFeedback {
    /// Leg-kinematics estimate assuming the feet have not moved.
    Estimate,
    /// Simulator ground truth.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Launch,
    Aerial,
    Landing,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Launch => "launch",
            Phase::Aerial => "aerial",
            Phase::Landing => "landing",
        }
    }
}

/// Controller gains and cost weights. `lambda` and `delta` are the diagonals
/// of Λ and Δ, one entry per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSet {
    /// CoM position feedback of the velocity controller [1/s].
    pub k_com: f64,
    /// CoM PD gains of the torque controller.
    pub kp_com: f64,
    pub kd_com: f64,
    /// Angular momentum gain [1/s].
    pub k_h: f64,
    pub kp_post: f64,
    pub kd_post: f64,
    pub lambda: Vec<f64>,
    pub delta: Vec<f64>,
}

impl Default for GainSet {
    fn default() -> Self {
        Self {
            k_com: 5.0,
            kp_com: 100.0,
            kd_com: 20.0,
            k_h: 10.0,
            kp_post: 25.0,
            kd_post: 10.0,
            lambda: vec![1.0; 3],
            delta: vec![10.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    pub gains: GainSet,
    pub disable_momentum_constraint: bool,
    /// Defaults to the estimate in velocity mode and the measured CoM in
    /// torque mode. The torque loop acts on contact wrenches and excites the
    /// feet rocking on the ground, which the estimate reads as CoM motion.
    pub com_feedback: Option<ComFeedback>,
    /// The velocity command is held over a control period; the profile is
    /// sampled this fraction of a period ahead.
    pub reference_lead: f64,
    /// Launch ends when the total normal force drops below this [N].
    pub takeoff_force: f64,
    /// Touchdown is declared above this total normal force [N].
    pub touchdown_force: f64,
    /// Minimum time airborne before touchdown can be declared [s].
    pub arming_delay: f64,
    /// Launch is forced to end this long after the profile's take-off time
    /// [s]. The retraction starts at the take-off time regardless.
    pub takeoff_guard: f64,
    /// Duration of the aerial min-jerk retraction [s].
    pub aerial_duration: f64,
    /// Landing configuration relative to the take-off configuration [rad].
    pub landing_offset: Vec<f64>,
    /// Friction coefficient of the contact pyramid (inscribed in the cone).
    pub friction: f64,
    /// Minimum normal force per foot [N].
    pub min_normal_force: f64,
    pub sole_half_length: f64,
    pub sole_half_width: f64,
    /// Weight on the base velocity in the velocity QP, which the postural
    /// cost leaves unweighted.
    pub base_regularization: f64,
    /// Weight on `‖f‖²` in the torque QP; picks the internal force split
    /// between the two feet.
    pub force_regularization: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: ControlMode::Velocity,
            gains: GainSet::default(),
            disable_momentum_constraint: false,
            com_feedback: None,
            reference_lead: 0.5,
            takeoff_force: 2.0,
            touchdown_force: 10.0,
            arming_delay: 0.02,
            takeoff_guard: 0.05,
            aerial_duration: 0.15,
            landing_offset: vec![-0.05, 0.1, -0.05],
            friction: 0.8,
            min_normal_force: 1.0,
            sole_half_length: 0.07,
            sole_half_width: 0.025,
            base_regularization: 1e-4,
            force_regularization: 1e-6,
        }
    }
}

impl ControllerConfig {
    pub fn com_feedback(&self) -> ComFeedback {
        self.com_feedback.unwrap_or(match self.mode {
            ControlMode::Velocity => ComFeedback::Estimate,
            ControlMode::Torque => ComFeedback::Measured,
        })
    }

    pub fn validate(&self, model: &RobotModel) -> Result<(), ControlError> {
        let n = model.dof();
        let g = &self.gains;
        let positive = [
            ("k_com", g.k_com),
            ("kp_com", g.kp_com),
            ("kd_com", g.kd_com),
            ("kp_post", g.kp_post),
            ("kd_post", g.kd_post),
            ("aerial_duration", self.aerial_duration),
            ("sole_half_length", self.sole_half_length),
            ("sole_half_width", self.sole_half_width),
            ("base_regularization", self.base_regularization),
            ("force_regularization", self.force_regularization),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ControlError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("k_h", g.k_h),
            ("takeoff_force", self.takeoff_force),
            ("touchdown_force", self.touchdown_force),
            ("arming_delay", self.arming_delay),
            ("takeoff_guard", self.takeoff_guard),
            ("reference_lead", self.reference_lead),
            ("friction", self.friction),
            ("min_normal_force", self.min_normal_force),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ControlError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("lambda", &g.lambda), ("delta", &g.delta), ("landing_offset", &self.landing_offset)] {
            if v.len() != n {
                return Err(ControlError::Config(format!("{name} has {} entries, model has {n} joints", v.len())));
            }
        }
        if g.lambda.iter().chain(&g.delta).any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(ControlError::Config("Λ and Δ entries must be positive".into()));
        }
        Ok(())
    }
}

/// What the controller sees at one tick.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub state: RobotState,
    /// True CoM position and velocity.
    pub com: Vector3<f64>,
    pub com_velocity: Vector3<f64>,
    /// CoM assuming the feet have not moved since launch start.
    pub com_estimate: Vector3<f64>,
    pub com_velocity_estimate: Vector3<f64>,
    pub momentum: CentroidalMomentum,
    /// Total ground normal force [N].
    pub normal_force: f64,
}

impl Measurement {
    /// CoM position and velocity used for feedback.
    pub fn com_feedback(&self, source: ComFeedback) -> (Vector3<f64>, Vector3<f64>) {
        match source {
            ComFeedback::Estimate => (self.com_estimate, self.com_velocity_estimate),
            ComFeedback::Measured => (self.com, self.com_velocity),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Velocity(DVector<f64>),
    Torque(DVector<f64>),
    Position { position: DVector<f64>, velocity: DVector<f64> },
}

/// Per-tick QP bookkeeping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickDiagnostics {
    pub iterations: usize,
    /// Largest `|Ax − b|` over equality rows.
    pub equality_residual: f64,
    /// Largest bound violation over inequality rows.
    pub inequality_violation: f64,
    /// Planned foot wrenches (torque mode), left then right.
    pub contact: Option<[Wrench; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub command: Command,
    /// Some entry of the command was clipped to the model limits.
    pub clamped: bool,
    pub diagnostics: Option<TickDiagnostics>,
}

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("launch QP ended with status {status:?} at t = {time:.4} s")]
    Qp { status: QpStatus, time: f64, problem: Box<QpProblem> },
    #[error(transparent)]
    Problem(#[from] QpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid controller configuration: {0}")]
    Config(String),
}

impl ControlError {
    /// The offending QP, for replay.
    pub fn problem(&self) -> Option<&QpProblem> {
        match self {
            ControlError::Qp { problem, .. } => Some(problem),
            _ => None,
        }
    }
}

/// Mutable controller memory carried between ticks.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub phase: Phase,
    /// Time the current phase began [s].
    pub phase_start: f64,
    /// First time the normal force dropped below the take-off threshold.
    pub airborne_since: Option<f64>,
    /// `ṡ_{k−1}` in velocity mode, `τ_{k−1}` in torque mode.
    pub previous_command: DVector<f64>,
    /// `∫₀ᵗ H_ω dτ` [kg·m²].
    pub momentum_integral: Vector3<f64>,
    /// Postural reference `s_d`.
    pub posture: DVector<f64>,
    /// CoM at launch start; the profile is added to its z component.
    pub com_reference: Vector3<f64>,
    pub period: f64,
    pub gravity: Vector3<f64>,
    /// Retraction towards the landing posture and its start time.
    pub aerial: Option<(f64, MinJerkSegment)>,
    pub landing: Option<DVector<f64>>,
    pub warm_start: Option<WarmStart>,
    warm_start_rows: usize,
}

impl ControllerState {
    /// State at launch start from the current measurement.
    pub fn new(meas: &Measurement, config: &ControllerConfig, period: f64, gravity: Vector3<f64>) -> Self {
        let n = meas.state.joint_positions.len();
        Self {
            phase: Phase::Launch,
            phase_start: 0.0,
            airborne_since: None,
            previous_command: DVector::zeros(n),
            momentum_integral: Vector3::zeros(),
            posture: meas.state.joint_positions.clone(),
            com_reference: meas.com_feedback(config.com_feedback()).0,
            period,
            gravity,
            aerial: None,
            landing: None,
            warm_start: None,
            warm_start_rows: 0,
        }
    }
}

/// Feet frames used by both launch controllers.
#[derive(Debug, Clone, Copy)]
pub struct Feet {
    pub left: FrameId,
    pub right: FrameId,
}

impl Feet {
    pub fn of(model: &RobotModel) -> Result<Self, ModelError> {
        Ok(Self { left: model.frame_id("left_foot")?, right: model.frame_id("right_foot")? })
    }
}

/// Complete jump controller: runs the phase machine and dispatches to the
/// launch QP or the position references.
#[derive(Debug)]
pub struct Controller {
    config: ControllerConfig,
    profile: LaunchProfile,
    state: ControllerState,
    solver: QpSolver,
    feet: Feet,
}

impl Controller {
    pub fn new(
        model: &RobotModel,
        config: ControllerConfig,
        profile: LaunchProfile,
        meas: &Measurement,
        period: f64,
        gravity: Vector3<f64>,
    ) -> Result<Self, ControlError> {
        config.validate(model)?;
        if !(period.is_finite() && period > 0.0) {
            return Err(ControlError::Config(format!("control period {period} must be positive")));
        }
        let feet = Feet::of(model)?;
        let mut state = ControllerState::new(meas, &config, period, gravity);
        if config.mode == ControlMode::Torque {
            state.previous_command = gravity_torques(model, &meas.state, &gravity)?;
        }
        Ok(Self { config, profile, state, solver: QpSolver::new(), feet })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn profile(&self) -> &LaunchProfile {
        &self.profile
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn tick(&mut self, model: &RobotModel, meas: &Measurement, t: f64) -> Result<ControlOutput, ControlError> {
        let takeoff = self.profile.takeoff_time();
        phase_step(&mut self.state, &self.config, meas.normal_force, t, takeoff);
        let past_profile = self.state.phase == Phase::Launch && t > takeoff;
        if self.state.aerial.is_none() && (self.state.phase == Phase::Aerial || past_profile) {
            // retraction starts at contact loss or at the end of the profile
            let start = meas.state.joint_positions.clone();
            let mut end = &start + DVector::from_column_slice(&self.config.landing_offset);
            for (j, joint) in model.joints().iter().enumerate() {
                end[j] = joint.limits.position.clamp(end[j]);
            }
            let seg = MinJerkSegment::new(start, end.clone(), self.config.aerial_duration).expect("validated");
            self.state.aerial = Some((t, seg));
            self.state.landing = Some(end);
        }
        match self.state.phase {
            Phase::Launch if past_profile => Ok(aerial_tick(&self.state, t)),
            Phase::Launch => match self.config.mode {
                ControlMode::Velocity => velocity_tick(
                    model,
                    meas,
                    &self.profile,
                    t,
                    &self.config,
                    &mut self.state,
                    &mut self.solver,
                    self.feet,
                ),
                ControlMode::Torque => torque_tick(
                    model,
                    meas,
                    &self.profile,
                    t,
                    &self.config,
                    &mut self.state,
                    &mut self.solver,
                    self.feet,
                ),
            },
            Phase::Aerial => Ok(aerial_tick(&self.state, t)),
            Phase::Landing => Ok(landing_tick(&self.state)),
        }
    }
}

/// Joint torques holding `state` at rest against gravity with the robot
/// supported by a single contact wrench at the left foot.
pub fn gravity_torques(
    model: &RobotModel,
    state: &RobotState,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, ModelError> {
    let mut still = state.clone();
    still.velocity.fill(0.0);
    let kin = crate::multibody::Kinematics::new(model, &still)?;
    let h = kin.bias_forces(model, gravity);
    let jl = kin.frame_jacobian(model, model.frame_id("left_foot")?);
    let n = model.dof();
    // base rows give the wrench, joint rows the torques
    let jb = jl.fixed_columns::<6>(0).transpose();
    let w = jb.lu().solve(&h.fixed_rows::<6>(0).into_owned()).ok_or(ModelError::SingularMassMatrix)?;
    let js = jl.columns(6, n).transpose();
    Ok(h.rows(6, n) - js * w)
}

pub(crate) fn clamp_to(values: &mut DVector<f64>, ranges: impl Iterator<Item = crate::multibody::Range>) -> bool {
    let mut clamped = false;
    for (v, r) in values.iter_mut().zip(ranges) {
        let c = r.clamp(*v);
        if c != *v {
            clamped = true;
            *v = c;
        }
    }
    clamped
}

/// Replaces the equality rows by an orthonormal basis of their row space
/// with the least-squares right-hand side. Structurally dependent task rows
/// (for instance lateral CoM and roll momentum on a planar robot) then cannot
/// make the problem infeasible through rounding.
fn compress_equalities(p: &QpProblem) -> Result<QpProblem, QpError> {
    let eq: Vec<usize> = (0..p.rows()).filter(|&r| p.is_equality(r)).collect();
    let ineq: Vec<usize> = (0..p.rows()).filter(|&r| !p.is_equality(r)).collect();
    if eq.is_empty() {
        return Ok(p.clone());
    }
    let svd = p.a.select_rows(&eq).svd(true, false);
    let u = svd.u.as_ref().expect("requested");
    let sigma = &svd.singular_values;
    let cutoff = 1e-9 * sigma.max();
    let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > cutoff).collect();
    let b = p.lb.select_rows(&eq);
    let rows = keep.len() + ineq.len();
    let mut a = DMatrix::zeros(rows, p.vars());
    let mut lb = DVector::zeros(rows);
    let mut ub = DVector::zeros(rows);
    let a_eq = p.a.select_rows(&eq);
    for (k, &i) in keep.iter().enumerate() {
        let ui = u.column(i);
        a.row_mut(k).copy_from(&(ui.transpose() * &a_eq));
        let rhs = ui.dot(&b);
        lb[k] = rhs;
        ub[k] = rhs;
    }
    for (k, &r) in ineq.iter().enumerate() {
        let row = keep.len() + k;
        a.row_mut(row).copy_from(&p.a.row(r));
        lb[row] = p.lb[r];
        ub[row] = p.ub[r];
    }
    QpProblem::new(p.h.clone(), p.g.clone(), a, lb, ub)
}

pub(crate) fn solve_launch_qp(
    problem: QpProblem,
    t: f64,
    state: &mut ControllerState,
    solver: &mut QpSolver,
) -> Result<(crate::qpsolver::QpSolution, TickDiagnostics), ControlError> {
    let reduced = compress_equalities(&problem)?;
    if state.warm_start_rows != reduced.rows() {
        state.warm_start = None;
    }
    state.warm_start_rows = reduced.rows();
    let sol = solver.solve(&reduced, state.warm_start.as_ref())?;
    if sol.status != QpStatus::Solved {
        state.warm_start = None;
        return Err(ControlError::Qp { status: sol.status, time: t, problem: Box::new(reduced) });
    }
    state.warm_start = Some(sol.warm_start());
    let ax = &problem.a * &sol.x;
    let mut diag = TickDiagnostics { iterations: sol.iterations, ..Default::default() };
    for r in 0..problem.rows() {
        if problem.is_equality(r) {
            diag.equality_residual = diag.equality_residual.max((ax[r] - problem.lb[r]).abs());
        } else {
            let over = (problem.lb[r] - ax[r]).max(ax[r] - problem.ub[r]).max(0.0);
            diag.inequality_violation = diag.inequality_violation.max(over);
        }
    }
    Ok((sol, diag))
}
