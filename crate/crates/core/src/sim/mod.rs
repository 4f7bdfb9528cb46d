//! Fixed-step penalty-contact simulation, joint servos, measurements and the
//! full jump experiment.

mod measure;
mod run;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::Command;
use crate::multibody::{Kinematics, ModelError, RobotModel, RobotState, Wrench};

pub use measure::{measure, FootEstimator};
pub use run::Squat;
pub use run::{run_jump, squat_state, Fault, FaultKind, JumpError, JumpLog, JumpRun, JumpSummary};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation configuration: {0}")]
    Config(String),
    #[error("state became non-finite at t = {0:.5} s")]
    NonFinite(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Flat-ground spring-damper contact with regularized Coulomb friction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactModel {
    pub ground_height: f64,
    /// [N/m]
    pub stiffness: f64,
    /// [N·s/m]
    pub damping: f64,
    pub friction: f64,
    /// Tangential speed at which friction reaches `tanh(1)` of its limit [m/s].
    pub regularization_velocity: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self { ground_height: 0.0, stiffness: 1e5, damping: 1e3, friction: 0.8, regularization_velocity: 1e-3 }
    }
}

impl ContactModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.ground_height.is_finite()
            && self.stiffness > 0.0
            && self.damping > 0.0
            && self.friction >= 0.0
            && self.regularization_velocity > 0.0
            && [self.stiffness, self.damping, self.friction, self.regularization_velocity]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("bad contact model {self:?}")))
        }
    }

    /// Force on a point at `position` moving with `velocity`, and the
    /// Jacobian `−∂F/∂v` used by the implicit velocity update.
    pub fn point_force(&self, position: &Vector3<f64>, velocity: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let depth = self.ground_height - position.z;
        if depth <= 0.0 {
            return (Vector3::zeros(), Matrix3::zeros());
        }
        let raw = self.stiffness * depth - self.damping * velocity.z;
        if raw <= 0.0 {
            return (Vector3::zeros(), Matrix3::zeros());
        }
        let fz = raw;
        let mut d = Matrix3::zeros();
        d[(2, 2)] = self.damping;
        let vt = nalgebra::Vector2::new(velocity.x, velocity.y);
        let speed = vt.norm();
        let vr = self.regularization_velocity;
        let limit = self.friction * fz;
        let (ft, dt) = if speed > 0.0 {
            let s = speed / vr;
            let dir = vt / speed;
            let th = s.tanh();
            let outer = dir * dir.transpose();
            let sech2 = 1.0 - th * th;
            let dt = (nalgebra::Matrix2::identity() - outer) * (th / speed) + outer * (sech2 / vr);
            (-dir * (limit * th), dt * limit)
        } else {
            (nalgebra::Vector2::zeros(), nalgebra::Matrix2::identity() * (limit / vr))
        };
        d.fixed_view_mut::<2, 2>(0, 0).copy_from(&dt);
        (Vector3::new(ft.x, ft.y, fz), d)
    }
}

/// Low-level joint servo gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoGains {
    /// Velocity servo proportional gain [N·m·s/rad].
    pub velocity_p: f64,
    /// Velocity servo integral gain [N·m/rad].
    pub velocity_i: f64,
    pub position_p: f64,
    pub position_d: f64,
}

impl Default for ServoGains {
    fn default() -> Self {
        Self { velocity_p: 2000.0, velocity_i: 1e5, position_p: 2000.0, position_d: 28.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Physics step [s].
    pub step: f64,
    /// Controller period, an integer multiple of `step` [s].
    pub period: f64,
    /// Longest simulated time after launch start [s].
    pub duration: f64,
    /// Position hold before launch start [s].
    pub settle: f64,
    /// Time simulated after touchdown [s].
    pub landing_time: f64,
    pub gravity: [f64; 3],
    pub contact: ContactModel,
    pub servo: ServoGains,
    /// Initial posture, resting on the ground.
    pub squat: Squat,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            period: 2.5e-3,
            duration: 2.0,
            settle: 0.5,
            landing_time: 0.3,
            gravity: [0.0, 0.0, -9.81],
            contact: ContactModel::default(),
            servo: ServoGains::default(),
            squat: Squat::default(),
        }
    }
}

impl SimConfig {
    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    /// Physics steps per controller tick.
    pub fn substeps(&self) -> Result<usize, SimError> {
        if !(self.step.is_finite() && self.step > 0.0 && self.period.is_finite() && self.period > 0.0) {
            return Err(SimError::Config("step and period must be positive".into()));
        }
        let k = (self.period / self.step).round();
        if k < 1.0 || ((k * self.step - self.period).abs() > 1e-9 * self.period) {
            return Err(SimError::Config(format!("period {} is not a multiple of step {}", self.period, self.step)));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.substeps()?;
        self.contact.validate()?;
        for (name, v) in [("duration", self.duration), ("settle", self.settle), ("landing_time", self.landing_time)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        let s = &self.servo;
        if [s.velocity_p, s.velocity_i, s.position_p, s.position_d].iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(SimError::Config("servo gains must be non-negative".into()));
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(SimError::Config("gravity must be finite".into()));
        }
        Ok(())
    }
}

/// Joint-level input for one physics step.
#[derive(Debug, Clone, PartialEq)]
pub enum Actuation {
    /// Zero joint torque.
    Free,
    Torque(DVector<f64>),
    /// Joint velocity reference tracked by the PI servo.
    Velocity(DVector<f64>),
    /// Joint position/velocity reference tracked by the PD servo.
    Position {
        position: DVector<f64>,
        velocity: DVector<f64>,
    },
}

impl From<&Command> for Actuation {
    fn from(c: &Command) -> Self {
        match c {
            Command::Velocity(v) => Actuation::Velocity(v.clone()),
            Command::Torque(t) => Actuation::Torque(t.clone()),
            Command::Position { position, velocity } => {
                Actuation::Position { position: position.clone(), velocity: velocity.clone() }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ServoMode {
    Other,
    Velocity,
}

/// Simulated robot plus servo memory.
#[derive(Debug, Clone)]
pub struct World {
    pub state: RobotState,
    pub time: f64,
    /// Joint torques applied over the last step.
    pub applied_torque: DVector<f64>,
    servo_integral: DVector<f64>,
    servo_mode: ServoMode,
}

impl World {
    pub fn new(state: RobotState, time: f64) -> Self {
        let n = state.joint_positions.len();
        Self {
            state,
            time,
            applied_torque: DVector::zeros(n),
            servo_integral: DVector::zeros(n),
            servo_mode: ServoMode::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointContact {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub force: Vector3<f64>,
}

/// Contact state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactReport {
    pub points: Vec<PointContact>,
    /// Net wrench per contact frame, moments about the frame origin. Order
    /// follows the model's frames that carry contact points.
    pub wrenches: Vec<Wrench>,
    pub normal_force: f64,
}

/// What one physics step saw at its start.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub contact: ContactReport,
    pub com: Vector3<f64>,
    pub com_velocity: Vector3<f64>,
}

/// Contact forces and their damping Jacobian in generalized coordinates.
struct ContactEval {
    report: ContactReport,
    force: DVector<f64>,
    damping: DMatrix<f64>,
}

fn contact_frames(model: &RobotModel) -> Vec<crate::multibody::FrameId> {
    let mut frames = Vec::new();
    for i in 0..model.contact_points().len() {
        let f = model.contact_frame(i);
        if !frames.contains(&f) {
            frames.push(f);
        }
    }
    frames
}

fn evaluate_contacts(model: &RobotModel, kin: &Kinematics, contact: &ContactModel) -> ContactEval {
    let nv = model.nv();
    let frames = contact_frames(model);
    let mut wrenches = vec![Wrench::default(); frames.len()];
    let mut points = Vec::with_capacity(model.contact_points().len());
    let mut force = DVector::zeros(nv);
    let mut damping = DMatrix::zeros(nv, nv);
    let mut normal = 0.0;
    for i in 0..model.contact_points().len() {
        let link = Kinematics::contact_point_link(model, i);
        let p = kin.contact_point_position(model, i);
        let v = kin.point_velocity(link, &p);
        let (f, d) = contact.point_force(&p, &v);
        if f.z > 0.0 {
            let j = kin.point_jacobian(model, link, &p);
            let jl = j.fixed_rows::<3>(0);
            force += jl.transpose() * f;
            damping += jl.transpose() * d * jl;
            normal += f.z;
            let frame = model.contact_frame(i);
            let k = frames.iter().position(|&fr| fr == frame).expect("listed");
            let origin = kin.frame_pose(model, frame).translation.vector;
            wrenches[k].force += f;
            wrenches[k].moment += (p - origin).cross(&f);
        }
        points.push(PointContact { position: p, velocity: v, force: f });
    }
    ContactEval { report: ContactReport { points, wrenches, normal_force: normal }, force, damping }
}

/// Contact state of `world` without advancing it.
pub fn contact_report(model: &RobotModel, world: &World, contact: &ContactModel) -> Result<ContactReport, SimError> {
    let kin = Kinematics::new(model, &world.state)?;
    Ok(evaluate_contacts(model, &kin, contact).report)
}

/// Joint torques of the servo for `actuation`, plus the servo damping per
/// joint (zero where saturated).
fn servo_torque(
    model: &RobotModel,
    state: &RobotState,
    actuation: &Actuation,
    integral: &DVector<f64>,
    gains: &ServoGains,
) -> (DVector<f64>, DVector<f64>) {
    let n = model.dof();
    let s = &state.joint_positions;
    let sdot = state.velocity.rows(6, n);
    let (mut tau, mut damp) = match actuation {
        Actuation::Free => (DVector::zeros(n), DVector::zeros(n)),
        Actuation::Torque(t) => (t.clone(), DVector::zeros(n)),
        Actuation::Velocity(v) => (
            DVector::from_fn(n, |j, _| gains.velocity_p * (v[j] - sdot[j]) + integral[j]),
            DVector::from_element(n, gains.velocity_p),
        ),
        Actuation::Position { position, velocity } => (
            DVector::from_fn(n, |j, _| {
                gains.position_p * (position[j] - s[j]) + gains.position_d * (velocity[j] - sdot[j])
            }),
            DVector::from_element(n, gains.position_d),
        ),
    };
    for (j, joint) in model.joints().iter().enumerate() {
        let c = joint.limits.torque.clamp(tau[j]);
        if c != tau[j] {
            tau[j] = c;
            damp[j] = 0.0;
        }
    }
    (tau, damp)
}

/// Half kick `ν ← ν + (M + h D)⁻¹ h f(q, ν)` with the velocity-dependent
/// contact and servo forces treated linearly implicitly. With `probe` the
/// Coriolis and centrifugal forces are evaluated at that velocity, which
/// keeps the closing kick second order.
fn kick(
    model: &RobotModel,
    world: &mut World,
    actuation: &Actuation,
    config: &SimConfig,
    h: f64,
    probe: Option<&DVector<f64>>,
) -> Result<(StepReport, DVector<f64>), SimError> {
    let kin = Kinematics::new(model, &world.state)?;
    let com = kin.com_position(model);
    let com_velocity = kin.com_jacobian(model) * &world.state.velocity;
    let contacts = evaluate_contacts(model, &kin, &config.contact);
    let (tau, servo_damping) = servo_torque(model, &world.state, actuation, &world.servo_integral, &config.servo);
    let bias = match probe {
        None => kin.bias_forces(model, &config.gravity()),
        Some(v) => {
            let mut ahead = world.state.clone();
            ahead.velocity.copy_from(v);
            Kinematics::new(model, &ahead)?.bias_forces(model, &config.gravity())
        }
    };
    let mut rhs = contacts.force - bias;
    let mut lhs = kin.mass_matrix(model) + contacts.damping * h;
    for j in 0..model.dof() {
        rhs[6 + j] += tau[j];
        lhs[(6 + j, 6 + j)] += h * servo_damping[j];
    }
    let chol = lhs.cholesky().ok_or(ModelError::SingularMassMatrix)?;
    world.state.velocity += chol.solve(&rhs) * h;
    let report = StepReport {
        contact: contacts.report,
        com,
        com_velocity: Vector3::new(com_velocity[0], com_velocity[1], com_velocity[2]),
    };
    Ok((report, tau))
}

/// Advances `world` by one physics step of `config.step` seconds using a
/// kick-drift-kick scheme. Returns the contact state at the start of the
/// step.
pub fn step(
    model: &RobotModel,
    world: &mut World,
    actuation: &Actuation,
    config: &SimConfig,
) -> Result<StepReport, SimError> {
    let dt = config.step;
    let n = model.dof();
    if !world.state.is_finite() {
        return Err(SimError::NonFinite(world.time));
    }
    if let Actuation::Torque(t) | Actuation::Velocity(t) = actuation {
        if t.len() != n || t.iter().any(|x| !x.is_finite()) {
            return Err(SimError::Config("joint command has wrong size or is not finite".into()));
        }
    }
    let mode = if matches!(actuation, Actuation::Velocity(_)) { ServoMode::Velocity } else { ServoMode::Other };
    if mode == ServoMode::Velocity && world.servo_mode != ServoMode::Velocity {
        // bumpless entry: start from the torque applied so far
        world.servo_integral = world.applied_torque.clone();
    }
    world.servo_mode = mode;

    let start = world.state.velocity.clone();
    let (report, tau) = kick(model, world, actuation, config, 0.5 * dt, None)?;
    if !world.state.is_finite() {
        return Err(SimError::NonFinite(world.time));
    }
    world.state.integrate_configuration(dt);
    // velocities at the end of the step, to first order
    let probe = &world.state.velocity * 2.0 - &start;
    let (_, tau_end) = kick(model, world, actuation, config, 0.5 * dt, Some(&probe))?;
    if !world.state.is_finite() {
        return Err(SimError::NonFinite(world.time + dt));
    }
    world.applied_torque = 0.5 * (tau + tau_end);

    if let Actuation::Velocity(v) = actuation {
        let g = &config.servo;
        let sdot = world.state.velocity.rows(6, n);
        for (j, joint) in model.joints().iter().enumerate() {
            let next = world.servo_integral[j] + g.velocity_i * (v[j] - sdot[j]) * dt;
            // no wind-up while the servo is saturated
            let total = g.velocity_p * (v[j] - sdot[j]) + next;
            if joint.limits.torque.contains(total) {
                world.servo_integral[j] = next;
            }
        }
    }
    world.time += dt;
    Ok(report)
}
