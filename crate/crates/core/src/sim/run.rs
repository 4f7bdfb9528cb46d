use std::io::Write;

use nalgebra::{DVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{contact_report, measure, step, Actuation, FootEstimator, SimConfig, SimError, World};
use crate::control::{
    contact_violation, Command, ControlError, ControlMode, Controller, ControllerConfig, Feet, Phase,
};
use crate::multibody::{Kinematics, RobotModel, RobotState};
use crate::qpsolver::QpProblem;
use crate::trajgen::LaunchProfile;

/// Initial crouched posture: base pitch and joint angles. The base is placed
/// so the lowest contact point rests at its static penetration depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Squat {
    pub base_pitch: f64,
    pub joints: Vec<f64>,
}

impl Default for Squat {
    fn default() -> Self {
        // soles flat: pitch + hip + knee + ankle = 0
        Self { base_pitch: 0.4, joints: vec![-1.542, 1.8, -0.658] }
    }
}

/// Squat state at rest on the ground of `config`.
pub fn squat_state(model: &RobotModel, config: &SimConfig) -> Result<RobotState, SimError> {
    let sq = &config.squat;
    if sq.joints.len() != model.dof() {
        return Err(SimError::Config(format!(
            "squat has {} joint angles, model has {} joints",
            sq.joints.len(),
            model.dof()
        )));
    }
    let mut state = RobotState::zeros(model);
    state.joint_positions = DVector::from_column_slice(&sq.joints);
    state.base_orientation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), sq.base_pitch);
    let kin = Kinematics::new(model, &state)?;
    let points = model.contact_points().len();
    if points == 0 {
        return Err(SimError::Config("model has no contact points".into()));
    }
    let lowest = (0..points).map(|i| kin.contact_point_position(model, i).z).fold(f64::INFINITY, f64::min);
    let c = &config.contact;
    let weight = model.total_mass() * config.gravity().norm();
    let depth = weight / (c.stiffness * points as f64);
    state.base_position.z = c.ground_height - depth - lowest;
    Ok(state)
}

#[derive(Debug, Error)]
pub enum JumpError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Controller,
    Simulation,
    NoTakeoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub kind: FaultKind,
    pub time: f64,
    pub message: String,
}

/// Per-tick time series.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLog {
    columns: Vec<String>,
    phases: Vec<Phase>,
    rows: Vec<Vec<f64>>,
}

const FOOT_AXES: [&str; 6] = ["fx", "fy", "fz", "mx", "my", "mz"];

impl JumpLog {
    fn new(model: &RobotModel, feet: &[String]) -> Self {
        let mut columns: Vec<String> = [
            "t",
            "com_x_true",
            "com_y_true",
            "com_z_true",
            "com_vx_true",
            "com_vy_true",
            "com_vz_true",
            "com_x_estimate",
            "com_y_estimate",
            "com_z_estimate",
            "com_vz_estimate",
            "com_z_desired",
            "com_vz_desired",
            "base_x",
            "base_z",
            "base_pitch",
            "normal_force",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for j in model.joints() {
            for suffix in ["pos", "vel", "cmd", "tau"] {
                columns.push(format!("{}_{suffix}", j.name));
            }
        }
        for prefix in ["", "plan_"] {
            for f in feet {
                for a in FOOT_AXES {
                    columns.push(format!("{f}_{prefix}{a}"));
                }
            }
        }
        for c in ["h_lx", "h_ly", "h_lz", "h_wx", "h_wy", "h_wz"] {
            columns.push(c.into());
        }
        for c in ["qp_iterations", "qp_equality_residual", "qp_inequality_violation", "contact_violation"] {
            columns.push(c.into());
        }
        Self { columns, phases: Vec::new(), rows: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// CSV with a `phase` column after `t`.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t", "phase"];
        header.extend(self.columns[1..].iter().map(String::as_str));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (row, phase) in self.rows.iter().zip(&self.phases) {
            record.clear();
            record.push(row[0].to_string());
            record.push(phase.as_str().to_string());
            record.extend(row[1..].iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scalar outcome of one jump. Lengths in metres, angles in radians.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JumpSummary {
    pub mode: ControlMode,
    pub desired_takeoff_speed: f64,
    pub desired_takeoff_time: f64,
    /// Vertical CoM velocity when the normal force first drops below the
    /// take-off threshold.
    pub takeoff_speed: Option<f64>,
    pub takeoff_time: Option<f64>,
    pub flight_time: Option<f64>,
    /// Apex CoM height above the take-off CoM height.
    pub flight_com_rise: Option<f64>,
    /// `2 v_to / g` and `v_to² / 2g` for the measured take-off speed.
    pub ballistic_flight_time: Option<f64>,
    pub ballistic_rise: Option<f64>,
    /// Highest lowest-contact-point height during flight.
    pub peak_feet_height: Option<f64>,
    /// Largest `|pitch − pitch_to|` during flight.
    pub pitch_excursion: Option<f64>,
    /// `‖H_ω‖` at take-off.
    pub takeoff_angular_momentum: Option<f64>,
    /// Largest contact-point displacement during launch.
    pub feet_drift: f64,
    /// `∫ ΣF_z dt` over the launch.
    pub launch_vertical_impulse: f64,
    pub landing_peak_force: Option<f64>,
    pub peak_joint_speeds: Vec<f64>,
    pub peak_joint_torques: Vec<f64>,
    pub max_equality_residual: f64,
    pub max_inequality_violation: f64,
    /// Largest contact-constraint violation of the planned foot wrenches.
    pub max_contact_violation: f64,
    pub max_qp_iterations: usize,
    pub clamped_ticks: usize,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone)]
pub struct JumpRun {
    pub log: JumpLog,
    pub summary: JumpSummary,
    /// QP that the controller failed on, if any.
    pub failed_problem: Option<QpProblem>,
}

#[derive(Default)]
struct Tracker {
    liftoff: Option<f64>,
    liftoff_com_z: f64,
    liftoff_speed: f64,
    liftoff_pitch: f64,
    liftoff_h: f64,
    touchdown: Option<f64>,
    apex: f64,
    feet_peak: f64,
    pitch_excursion: f64,
    feet_drift: f64,
    impulse: f64,
    landing_peak: f64,
}

/// Runs a squat jump: settle under position hold, then launch, flight and
/// landing under `controller`. Configuration errors are returned as `Err`;
/// faults during the run end it early and are recorded in the summary.
pub fn run_jump(
    model: &RobotModel,
    sim: &SimConfig,
    controller: &ControllerConfig,
    profile: &LaunchProfile,
) -> Result<JumpRun, JumpError> {
    sim.validate()?;
    controller.validate(model)?;
    let substeps = sim.substeps()?;
    let gravity = sim.gravity();
    let n = model.dof();
    let feet = Feet::of(model).map_err(SimError::from)?;
    let foot_names: Vec<String> = [feet.left, feet.right].iter().map(|&f| model.frame(f).name.clone()).collect();

    let mut world = World::new(squat_state(model, sim)?, -sim.settle);
    let hold = Actuation::Position { position: world.state.joint_positions.clone(), velocity: DVector::zeros(n) };
    for _ in 0..(sim.settle / sim.step).round() as usize {
        step(model, &mut world, &hold, sim)?;
    }
    world.time = 0.0;

    let estimator = FootEstimator::capture(model, &world.state, feet.left)?;
    let report = contact_report(model, &world, &sim.contact)?;
    let meas = measure(model, &world, &report, &estimator)?;
    let mut ctrl = Controller::new(model, controller.clone(), profile.clone(), &meas, sim.period, gravity)?;
    let initial_points: Vec<Vector3<f64>> = report.points.iter().map(|p| p.position).collect();

    let mut log = JumpLog::new(model, &foot_names);
    let mut summary = JumpSummary {
        mode: controller.mode,
        desired_takeoff_speed: profile.takeoff_speed(),
        desired_takeoff_time: profile.takeoff_time(),
        takeoff_speed: None,
        takeoff_time: None,
        flight_time: None,
        flight_com_rise: None,
        ballistic_flight_time: None,
        ballistic_rise: None,
        peak_feet_height: None,
        pitch_excursion: None,
        takeoff_angular_momentum: None,
        feet_drift: 0.0,
        launch_vertical_impulse: 0.0,
        landing_peak_force: None,
        peak_joint_speeds: vec![0.0; n],
        peak_joint_torques: vec![0.0; n],
        max_equality_residual: 0.0,
        max_inequality_violation: 0.0,
        max_contact_violation: 0.0,
        max_qp_iterations: 0,
        clamped_ticks: 0,
        fault: None,
    };
    let mut failed_problem = None;
    let mut tr = Tracker::default();
    let ticks = (sim.duration / sim.period).floor() as usize;
    let g = gravity.norm();

    'run: for k in 0..=ticks {
        let t = k as f64 * sim.period;
        world.time = t;
        let report = contact_report(model, &world, &sim.contact)?;
        let meas = measure(model, &world, &report, &estimator)?;
        let out = match ctrl.tick(model, &meas, t) {
            Ok(out) => out,
            Err(e) => {
                failed_problem = e.problem().cloned();
                summary.fault = Some(Fault { kind: FaultKind::Controller, time: t, message: e.to_string() });
                break;
            }
        };
        let phase = ctrl.phase();
        if phase == Phase::Landing && t - ctrl.state().phase_start >= sim.landing_time {
            break;
        }

        let actuation = Actuation::from(&out.command);
        let mut tau_sum = DVector::zeros(n);
        for _ in 0..substeps {
            let before = world.state.clone();
            let time = world.time;
            let rep = match step(model, &mut world, &actuation, sim) {
                Ok(rep) => rep,
                Err(e) => {
                    summary.fault = Some(Fault { kind: FaultKind::Simulation, time, message: e.to_string() });
                    break 'run;
                }
            };
            tau_sum += &world.applied_torque;
            let force = rep.contact.normal_force;
            let lowest = rep.contact.points.iter().map(|p| p.position.z).fold(f64::INFINITY, f64::min)
                - sim.contact.ground_height;
            match (tr.liftoff, tr.touchdown) {
                (None, _) => {
                    if force < controller.takeoff_force {
                        tr.liftoff = Some(time);
                        tr.liftoff_com_z = rep.com.z;
                        tr.liftoff_speed = rep.com_velocity.z;
                        tr.liftoff_pitch = before.base_pitch();
                        tr.liftoff_h = Kinematics::new(model, &before)
                            .map_err(SimError::from)?
                            .centroidal_momentum(model)
                            .angular
                            .norm();
                        tr.apex = rep.com.z;
                        tr.feet_peak = lowest;
                    } else {
                        tr.impulse += force * sim.step;
                        for (p, p0) in rep.contact.points.iter().zip(&initial_points) {
                            tr.feet_drift = tr.feet_drift.max((p.position - p0).norm());
                        }
                    }
                }
                (Some(lift), None) => {
                    if time - lift >= controller.arming_delay && force > controller.touchdown_force {
                        tr.touchdown = Some(time);
                        tr.landing_peak = force;
                    } else {
                        tr.apex = tr.apex.max(rep.com.z);
                        tr.feet_peak = tr.feet_peak.max(lowest);
                        tr.pitch_excursion = tr.pitch_excursion.max((before.base_pitch() - tr.liftoff_pitch).abs());
                    }
                }
                (Some(_), Some(_)) => tr.landing_peak = tr.landing_peak.max(force),
            }
        }
        let tau = tau_sum / substeps as f64;
        log_row(&mut log, model, &ctrl, profile, &meas, &report, &out, &tau, t);

        let sdot = meas.state.joint_velocities();
        for j in 0..n {
            summary.peak_joint_speeds[j] = summary.peak_joint_speeds[j].max(sdot[j].abs());
            summary.peak_joint_torques[j] = summary.peak_joint_torques[j].max(tau[j].abs());
        }
        if out.clamped {
            summary.clamped_ticks += 1;
        }
        if let Some(d) = &out.diagnostics {
            summary.max_equality_residual = summary.max_equality_residual.max(d.equality_residual);
            summary.max_inequality_violation = summary.max_inequality_violation.max(d.inequality_violation);
            summary.max_qp_iterations = summary.max_qp_iterations.max(d.iterations);
            if let Some(w) = &d.contact {
                for wr in w {
                    summary.max_contact_violation =
                        summary.max_contact_violation.max(contact_violation(wr, controller));
                }
            }
        }
    }

    summary.feet_drift = tr.feet_drift;
    summary.launch_vertical_impulse = tr.impulse;
    if let Some(lift) = tr.liftoff {
        let v = tr.liftoff_speed;
        summary.takeoff_time = Some(lift);
        summary.takeoff_speed = Some(v);
        summary.takeoff_angular_momentum = Some(tr.liftoff_h);
        summary.flight_com_rise = Some(tr.apex - tr.liftoff_com_z);
        summary.ballistic_flight_time = Some(2.0 * v / g);
        summary.ballistic_rise = Some(v * v / (2.0 * g));
        summary.peak_feet_height = Some(tr.feet_peak);
        summary.pitch_excursion = Some(tr.pitch_excursion);
        if let Some(td) = tr.touchdown {
            summary.flight_time = Some(td - lift);
            summary.landing_peak_force = Some(tr.landing_peak);
        }
    } else if summary.fault.is_none() {
        summary.fault = Some(Fault {
            kind: FaultKind::NoTakeoff,
            time: world.time,
            message: format!("normal force never dropped below {} N", controller.takeoff_force),
        });
    }
    Ok(JumpRun { log, summary, failed_problem })
}

#[allow(clippy::too_many_arguments)]
fn log_row(
    log: &mut JumpLog,
    model: &RobotModel,
    ctrl: &Controller,
    profile: &LaunchProfile,
    meas: &crate::control::Measurement,
    report: &super::ContactReport,
    out: &crate::control::ControlOutput,
    tau: &DVector<f64>,
    t: f64,
) {
    let st = &meas.state;
    let sample = profile.sample(t);
    let mut row = vec![
        t,
        meas.com.x,
        meas.com.y,
        meas.com.z,
        meas.com_velocity.x,
        meas.com_velocity.y,
        meas.com_velocity.z,
        meas.com_estimate.x,
        meas.com_estimate.y,
        meas.com_estimate.z,
        meas.com_velocity_estimate.z,
        ctrl.state().com_reference.z + sample.z,
        sample.zdot,
        st.base_position.x,
        st.base_position.z,
        st.base_pitch(),
        meas.normal_force,
    ];
    let cmd = match &out.command {
        Command::Velocity(v) | Command::Torque(v) => v,
        Command::Position { position, .. } => position,
    };
    for j in 0..model.dof() {
        row.extend([st.joint_positions[j], st.velocity[6 + j], cmd[j], tau[j]]);
    }
    for w in &report.wrenches {
        row.extend(w.force.iter().chain(w.moment.iter()));
    }
    let plan = out.diagnostics.as_ref().and_then(|d| d.contact);
    for k in 0..2 {
        match plan {
            Some(w) => row.extend(w[k].force.iter().chain(w[k].moment.iter())),
            None => row.extend([f64::NAN; 6]),
        }
    }
    let h = &meas.momentum;
    row.extend(h.linear.iter().chain(h.angular.iter()));
    match &out.diagnostics {
        Some(d) => row.extend([
            d.iterations as f64,
            d.equality_residual,
            d.inequality_violation,
            d.contact.map_or(f64::NAN, |w| w.iter().map(|x| contact_violation(x, ctrl.config())).fold(0.0, f64::max)),
        ]),
        None => row.extend([f64::NAN; 4]),
    }
    log.phases.push(ctrl.phase());
    log.rows.push(row);
}
