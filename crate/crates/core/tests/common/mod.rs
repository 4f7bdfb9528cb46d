//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod qp;

use jump_core::multibody::{
    forward_dynamics, ContactPoint, Frame, Joint, JointLimits, Link, Range, RobotModel, RobotState,
};
use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_spd3(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    (a * a.transpose() + Matrix3::identity() * 0.2) * scale
}

fn limits() -> JointLimits {
    JointLimits {
        position: Range::new(-3.0, 3.0),
        velocity: Range::new(-10.0, 10.0),
        torque: Range::new(-100.0, 100.0),
    }
}

fn random_link(rng: &mut ChaCha8Rng, name: String) -> Link {
    Link {
        name,
        mass: rng.gen_range(0.5..5.0),
        inertia: random_spd3(rng, 0.02),
        com: Vector3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.05..0.05), rng.gen_range(-0.2..0.0)),
    }
}

/// Random serial chain of `links` bodies (base included) whose joint axes are
/// all parallel to y. One frame per link, at a random offset.
pub fn random_sagittal_chain(rng: &mut ChaCha8Rng, links: usize) -> RobotModel {
    let mut ls = Vec::new();
    let mut js = Vec::new();
    let mut fs = Vec::new();
    for i in 0..links {
        ls.push(random_link(rng, format!("l{i}")));
        fs.push(Frame {
            name: format!("f{i}"),
            link: format!("l{i}"),
            origin: Isometry3::new(
                Vector3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.3..0.0)),
                Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ),
        });
        if i > 0 {
            js.push(Joint {
                name: format!("j{i}"),
                parent: format!("l{}", i - 1),
                child: format!("l{i}"),
                axis: Vector3::y_axis(),
                origin: Isometry3::translation(rng.gen_range(-0.05..0.05), 0.0, -rng.gen_range(0.1..0.4)),
                limits: limits(),
            });
        }
    }
    let cps = vec![ContactPoint { frame: format!("f{}", links - 1), name: "c".into(), position: Vector3::zeros() }];
    RobotModel::new("random-sagittal", "l0", ls, js, fs, cps).unwrap()
}

/// Random branched tree with arbitrary joint axes and origins.
pub fn random_tree(rng: &mut ChaCha8Rng, links: usize) -> RobotModel {
    let mut ls = Vec::new();
    let mut js = Vec::new();
    let mut fs = Vec::new();
    for i in 0..links {
        ls.push(random_link(rng, format!("l{i}")));
        fs.push(Frame {
            name: format!("f{i}"),
            link: format!("l{i}"),
            origin: Isometry3::new(
                Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)),
                Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ),
        });
        if i > 0 {
            let parent = rng.gen_range(0..i);
            let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            js.push(Joint {
                name: format!("j{i}"),
                parent: format!("l{parent}"),
                child: format!("l{i}"),
                axis: nalgebra::Unit::new_normalize(axis),
                origin: Isometry3::new(
                    Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)),
                    Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ),
                limits: limits(),
            });
        }
    }
    RobotModel::new("random-tree", "l0", ls, js, fs, vec![]).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, model: &RobotModel) -> RobotState {
    let q = Quaternion::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    RobotState {
        base_position: Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.5)),
        base_orientation: UnitQuaternion::from_quaternion(q),
        joint_positions: DVector::from_fn(model.dof(), |_, _| rng.gen_range(-2.0..2.0)),
        velocity: DVector::from_fn(model.nv(), |_, _| rng.gen_range(-2.0..2.0)),
    }
}

/// Configuration advanced by `eps` along the tangent direction `dir`
/// (base position, base rotation vector in inertial axes, joint angles).
pub fn retract(state: &RobotState, dir: &DVector<f64>, eps: f64) -> RobotState {
    let mut out = state.clone();
    out.base_position += Vector3::new(dir[0], dir[1], dir[2]) * eps;
    out.base_orientation =
        UnitQuaternion::from_scaled_axis(Vector3::new(dir[3], dir[4], dir[5]) * eps) * state.base_orientation;
    for j in 0..state.joint_positions.len() {
        out.joint_positions[j] += dir[6 + j] * eps;
    }
    out
}

/// Relative pose difference as a `[linear; angular]` 6-vector.
pub fn pose_difference(a: &Isometry3<f64>, b: &Isometry3<f64>) -> DVector<f64> {
    let dp = a.translation.vector - b.translation.vector;
    let dr = (a.rotation * b.rotation.inverse()).scaled_axis();
    DVector::from_column_slice(&[dp.x, dp.y, dp.z, dr.x, dr.y, dr.z])
}

/// Central-difference Jacobian of a pose-valued function of the configuration.
pub fn fd_pose_jacobian(
    state: &RobotState,
    nv: usize,
    eps: f64,
    pose: impl Fn(&RobotState) -> Isometry3<f64>,
) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, nv);
    for i in 0..nv {
        let mut e = DVector::zeros(nv);
        e[i] = 1.0;
        let plus = pose(&retract(state, &e, eps));
        let minus = pose(&retract(state, &e, -eps));
        j.set_column(i, &(pose_difference(&plus, &minus) / (2.0 * eps)));
    }
    j
}

/// Central-difference Jacobian of a vector-valued function of the configuration.
pub fn fd_vector_jacobian(
    state: &RobotState,
    nv: usize,
    eps: f64,
    f: impl Fn(&RobotState) -> DVector<f64>,
) -> DMatrix<f64> {
    let rows = f(state).len();
    let mut j = DMatrix::zeros(rows, nv);
    for i in 0..nv {
        let mut e = DVector::zeros(nv);
        e[i] = 1.0;
        let d = (f(&retract(state, &e, eps)) - f(&retract(state, &e, -eps))) / (2.0 * eps);
        j.set_column(i, &d);
    }
    j
}

/// One classical RK4 step of the contact-free, zero-torque dynamics. The base
/// quaternion is integrated as a 4-vector and renormalized.
pub fn rk4_step(model: &RobotModel, state: &RobotState, gravity: &Vector3<f64>, dt: f64) -> RobotState {
    let n = model.dof();
    let tau = DVector::zeros(n);
    // x = (p, quat, s, nu) flattened
    let pack = |s: &RobotState| -> DVector<f64> {
        let q = s.base_orientation.quaternion();
        let mut x = DVector::zeros(3 + 4 + n + model.nv());
        x.rows_mut(0, 3).copy_from(&s.base_position);
        x[3] = q.w;
        x[4] = q.i;
        x[5] = q.j;
        x[6] = q.k;
        x.rows_mut(7, n).copy_from(&s.joint_positions);
        x.rows_mut(7 + n, model.nv()).copy_from(&s.velocity);
        x
    };
    let unpack = |x: &DVector<f64>| -> RobotState {
        RobotState {
            base_position: Vector3::new(x[0], x[1], x[2]),
            base_orientation: UnitQuaternion::from_quaternion(Quaternion::new(x[3], x[4], x[5], x[6])),
            joint_positions: x.rows(7, n).into_owned(),
            velocity: x.rows(7 + n, model.nv()).into_owned(),
        }
    };
    let deriv = |x: &DVector<f64>| -> DVector<f64> {
        let s = unpack(x);
        let acc = forward_dynamics(model, &s, &tau, &[], gravity).unwrap();
        let mut d = DVector::zeros(x.len());
        d.rows_mut(0, 3).copy_from(&s.velocity.rows(0, 3));
        let w = Quaternion::new(0.0, s.velocity[3], s.velocity[4], s.velocity[5]);
        let q = Quaternion::new(x[3], x[4], x[5], x[6]);
        let qd = w * q * 0.5;
        d[3] = qd.w;
        d[4] = qd.i;
        d[5] = qd.j;
        d[6] = qd.k;
        d.rows_mut(7, n).copy_from(&s.velocity.rows(6, n));
        d.rows_mut(7 + n, model.nv()).copy_from(&acc);
        d
    };
    let x0 = pack(state);
    let k1 = deriv(&x0);
    let k2 = deriv(&(&x0 + &k1 * (dt / 2.0)));
    let k3 = deriv(&(&x0 + &k2 * (dt / 2.0)));
    let k4 = deriv(&(&x0 + &k3 * dt));
    unpack(&(x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)))
}

pub fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.abs().max().max(1e-12);
    (a - b).abs().max() / scale
}

/// Composite Gauss–Legendre (5 nodes) quadrature; exact for the piecewise
/// polynomials used here.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] =
        [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    const W: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let mid = a + h * (k as f64 + 0.5);
            X.iter().zip(W).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}
