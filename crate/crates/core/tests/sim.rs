use jump_core::control::{ControlMode, ControllerConfig, Phase};
use jump_core::multibody::{
    centroidal_momentum, com_position, kinetic_energy, potential_energy, ContactPoint, Frame, Joint, JointLimits,
    Kinematics, Link, Range, RobotModel, RobotState,
};
use jump_core::sim::{
    contact_report, measure, run_jump, squat_state, step, Actuation, ContactModel, FaultKind, FootEstimator, JumpRun,
    SimConfig, SimError, World,
};
use jump_core::trajgen::{JumpParams, LaunchProfile};
use nalgebra::{DVector, Isometry3, Matrix3, Vector3};
use proptest::prelude::*;
use std::sync::OnceLock;

fn default_run() -> &'static JumpRun {
    static RUN: OnceLock<JumpRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let profile = LaunchProfile::smoothstep(&JumpParams::default()).unwrap();
        run_jump(&RobotModel::icub_sagittal(), &SimConfig::default(), &ControllerConfig::default(), &profile).unwrap()
    })
}

fn hold(state: &RobotState) -> Actuation {
    Actuation::Position {
        position: state.joint_positions.clone(),
        velocity: DVector::zeros(state.joint_positions.len()),
    }
}

fn airborne_state(model: &RobotModel) -> RobotState {
    let sim = SimConfig::default();
    let mut s = squat_state(model, &sim).unwrap();
    s.base_position.z += 5.0;
    s
}

#[test]
fn dropped_robot_settles_on_its_weight() {
    let model = RobotModel::icub_sagittal();
    let config = SimConfig::default();
    let mut state = squat_state(&model, &config).unwrap();
    state.base_position.z += 0.1;
    let act = hold(&state);
    let mut world = World::new(state, 0.0);
    // the crouched torso rocks slowly on the hold servo before coming to rest
    for _ in 0..60_000 {
        step(&model, &mut world, &act, &config).unwrap();
    }
    let report = contact_report(&model, &world, &config.contact).unwrap();
    let weight = model.total_mass() * 9.81;
    assert!((report.normal_force - weight).abs() < 0.1, "{} vs {weight}", report.normal_force);
    assert!(world.state.velocity.amax() < 1e-2, "{}", world.state.velocity);
}

#[test]
fn contact_free_com_follows_a_parabola() {
    let model = RobotModel::icub_sagittal();
    let config = SimConfig::default();
    let mut state = airborne_state(&model);
    state.velocity = DVector::from_column_slice(&[0.3, 0.0, 1.0, 0.0, 0.5, 0.0, 1.0, -2.0, 1.5]);
    let c0 = com_position(&model, &state).unwrap();
    let v0 = centroidal_momentum(&model, &state).unwrap().linear / model.total_mass();
    let g = config.gravity();
    let mut world = World::new(state, 0.0);
    let mut worst: f64 = 0.0;
    for k in 1..=5000 {
        step(&model, &mut world, &Actuation::Free, &config).unwrap();
        let t = k as f64 * config.step;
        let expected = c0 + v0 * t + g * (0.5 * t * t);
        worst = worst.max((com_position(&model, &world.state).unwrap() - expected).amax());
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn flight_conserves_energy_and_momentum() {
    let model = RobotModel::icub_sagittal();
    let config = SimConfig::default();
    let mut state = airborne_state(&model);
    state.velocity = DVector::from_column_slice(&[0.1, 0.0, 0.5, 0.0, 1.0, 0.0, 2.0, -1.0, 0.5]);
    let g = config.gravity();
    let energy = |s: &RobotState| kinetic_energy(&model, s).unwrap() + potential_energy(&model, s, &g).unwrap();
    let e0 = energy(&state);
    let h0 = centroidal_momentum(&model, &state).unwrap();
    let mut world = World::new(state, 0.0);
    let mut drift: f64 = 0.0;
    for _ in 0..10_000 {
        step(&model, &mut world, &Actuation::Free, &config).unwrap();
        drift = drift.max((energy(&world.state) - e0).abs());
    }
    assert!(drift < 1e-3, "{drift}");
    let h = centroidal_momentum(&model, &world.state).unwrap();
    assert!((h.angular - h0.angular).amax() < 1e-6);
    let expected = h0.linear + g * model.total_mass() * world.time;
    assert!((h.linear - expected).amax() < 1e-6);
}

fn pendulum() -> RobotModel {
    // a very heavy base so the joint sees only the link inertia
    let links = vec![
        Link { name: "base".into(), mass: 1e6, inertia: Matrix3::identity() * 1e6, com: Vector3::zeros() },
        Link { name: "arm".into(), mass: 20.0, inertia: Matrix3::identity() * 0.05, com: Vector3::new(0.0, 0.0, -0.5) },
    ];
    let joints = vec![Joint {
        name: "j".into(),
        parent: "base".into(),
        child: "arm".into(),
        axis: Vector3::y_axis(),
        origin: Isometry3::identity(),
        limits: JointLimits {
            position: Range::new(-10.0, 10.0),
            velocity: Range::new(-50.0, 50.0),
            torque: Range::new(-1e4, 1e4),
        },
    }];
    let frames = vec![Frame { name: "tip".into(), link: "arm".into(), origin: Isometry3::identity() }];
    let contacts = vec![ContactPoint { frame: "tip".into(), name: "c".into(), position: Vector3::zeros() }];
    RobotModel::new("pendulum", "base", links, joints, frames, contacts).unwrap()
}

#[test]
fn velocity_servo_reaches_its_command_within_five_time_constants() {
    let model = pendulum();
    let config = SimConfig { gravity: [0.0; 3], ..Default::default() };
    let mut state = RobotState::zeros(&model);
    state.base_position.z = 10.0;
    // slowest root of I s² + Kv s + Ki, the PI loop on the link inertia
    let inertia = 0.05 + 20.0 * 0.25;
    let (kv, ki) = (config.servo.velocity_p, config.servo.velocity_i);
    let disc = kv * kv - 4.0 * inertia * ki;
    let slowest = if disc >= 0.0 { (kv - disc.sqrt()) / (2.0 * inertia) } else { kv / (2.0 * inertia) };
    let tau = 1.0 / slowest;
    let steps = (5.0 * tau / config.step).ceil() as usize;
    let target = 2.0;
    let mut world = World::new(state, 0.0);
    let act = Actuation::Velocity(DVector::from_element(1, target));
    for _ in 0..steps {
        step(&model, &mut world, &act, &config).unwrap();
    }
    let v = world.state.velocity[6];
    assert!((v - target).abs() < 0.02 * target, "{v}");
}

#[test]
fn non_finite_state_is_a_fault() {
    let model = RobotModel::icub_sagittal();
    let config = SimConfig::default();
    let mut state = airborne_state(&model);
    state.velocity[0] = f64::NAN;
    let mut world = World::new(state, 0.25);
    assert!(matches!(step(&model, &mut world, &Actuation::Free, &config), Err(SimError::NonFinite(t)) if t == 0.25));
}

#[test]
fn misaligned_period_is_rejected() {
    let config = SimConfig { period: 2.55e-3, ..Default::default() };
    assert!(config.validate().is_err());
    let profile = LaunchProfile::smoothstep(&JumpParams::default()).unwrap();
    let r = run_jump(&RobotModel::icub_sagittal(), &config, &ControllerConfig::default(), &profile);
    assert!(r.is_err());
}

proptest! {
    #[test]
    fn normal_force_is_never_negative(z in -0.01..0.01f64, vx in -1.0..1.0f64, vy in -1.0..1.0f64, vz in -2.0..2.0f64) {
        let c = ContactModel::default();
        let (f, d) = c.point_force(&Vector3::new(0.0, 0.0, z), &Vector3::new(vx, vy, vz));
        prop_assert!(f.z >= 0.0);
        if z >= 0.0 {
            prop_assert_eq!(f, Vector3::zeros());
            prop_assert_eq!(d, Matrix3::zeros());
        }
        // friction stays inside the cone
        prop_assert!(f.xy().norm() <= c.friction * f.z + 1e-12);
    }
}

#[test]
fn momentum_velocity_matches_com_jacobian() {
    let model = RobotModel::icub_sagittal();
    let config = SimConfig::default();
    let mut state = squat_state(&model, &config).unwrap();
    state.velocity = DVector::from_column_slice(&[0.2, 0.0, 0.4, 0.0, -0.3, 0.0, 1.0, -2.0, 1.0]);
    let world = World::new(state.clone(), 0.0);
    let report = contact_report(&model, &world, &config.contact).unwrap();
    let est = FootEstimator::capture(&model, &state, model.frame_id("left_foot").unwrap()).unwrap();
    let meas = measure(&model, &world, &report, &est).unwrap();
    let kin = Kinematics::new(&model, &state).unwrap();
    let jc = kin.com_jacobian(&model) * &state.velocity;
    assert!((meas.com_velocity - Vector3::new(jc[0], jc[1], jc[2])).amax() < 1e-9);
}

#[test]
fn com_estimate_tracks_on_the_ground_and_drifts_in_flight() {
    let run = default_run();
    let log = &run.log;
    let phases = log.phases();
    let col = |n: &str| log.column(n).unwrap();
    let (t, z, ze) = (col("t"), col("com_z_true"), col("com_z_estimate"));
    let mut ground: f64 = 0.0;
    let mut flight: f64 = 0.0;
    for i in 0..log.len() {
        let err = (z[i] - ze[i]).abs();
        match phases[i] {
            Phase::Launch if t[i] >= 0.0 => ground = ground.max(err),
            Phase::Aerial => flight = flight.max(err),
            _ => {}
        }
    }
    assert!(ground < 1e-3, "{ground}");
    assert!(flight > 1e-2, "{flight}");
}

#[test]
fn launch_impulse_matches_takeoff_momentum() {
    let s = &default_run().summary;
    let model = RobotModel::icub_sagittal();
    let m = model.total_mass();
    let expected = m * (s.takeoff_speed.unwrap() + 9.81 * s.takeoff_time.unwrap());
    let rel = (s.launch_vertical_impulse - expected).abs() / expected;
    assert!(rel < 0.05, "{} vs {expected}", s.launch_vertical_impulse);
}

#[test]
fn normal_force_log_is_never_negative() {
    let f = default_run().log.column("normal_force").unwrap();
    assert!(f.iter().all(|&x| x >= 0.0));
}

#[test]
fn run_is_deterministic() {
    let profile = LaunchProfile::smoothstep(&JumpParams::default()).unwrap();
    let again =
        run_jump(&RobotModel::icub_sagittal(), &SimConfig::default(), &ControllerConfig::default(), &profile).unwrap();
    let mut a = Vec::new();
    let mut b = Vec::new();
    default_run().log.write_csv(&mut a).unwrap();
    again.log.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(default_run().summary, again.summary);
}

#[test]
fn log_has_one_row_per_tick_and_the_phase_sequence() {
    let run = default_run();
    let log = &run.log;
    let mut csv = Vec::new();
    log.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("t,phase,com_x_true,"));
    let t = log.column("t").unwrap();
    assert!(t.windows(2).all(|w| ((w[1] - w[0]) - 2.5e-3).abs() < 1e-9));
    let mut seen = vec![log.phases()[0]];
    for &p in log.phases() {
        if *seen.last().unwrap() != p {
            seen.push(p);
        }
    }
    assert_eq!(seen, [Phase::Launch, Phase::Aerial, Phase::Landing]);
    assert!(run.summary.fault.is_none());
    assert!(run.summary.max_equality_residual < 1e-9);
}

#[test]
fn missing_takeoff_is_reported_as_a_fault() {
    let profile = LaunchProfile::smoothstep(&JumpParams::default()).unwrap();
    // a threshold the force can never drop below
    let ctrl = ControllerConfig { takeoff_force: 0.0, ..Default::default() };
    let sim = SimConfig { duration: 1.0, ..Default::default() };
    let run = run_jump(&RobotModel::icub_sagittal(), &sim, &ctrl, &profile).unwrap();
    let fault = run.summary.fault.unwrap();
    assert_eq!(fault.kind, FaultKind::NoTakeoff);
    assert!(run.summary.takeoff_speed.is_none());
}

#[test]
fn torque_mode_plans_feasible_contact_wrenches() {
    let profile = LaunchProfile::smoothstep(&JumpParams::default()).unwrap();
    let ctrl = ControllerConfig { mode: ControlMode::Torque, ..Default::default() };
    let run = run_jump(&RobotModel::icub_sagittal(), &SimConfig::default(), &ctrl, &profile).unwrap();
    let s = &run.summary;
    assert!(s.fault.is_none(), "{:?}", s.fault);
    assert!(s.max_contact_violation <= 1e-6);
    assert!(s.max_equality_residual < 1e-9, "{}", s.max_equality_residual);
    assert!(run.log.column("left_foot_plan_fz").unwrap().iter().any(|f| f.is_finite()));
}
