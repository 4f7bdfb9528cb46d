use nalgebra::{
    DMatrix, DVector, Dyn, Isometry3, Matrix3, Matrix6, OMatrix, Point3, Translation3, UnitQuaternion, Vector3,
    Vector6, U6,
};

use super::spatial::{ang, cross_force, cross_motion, lin, skew, spatial_inertia, stack};
use super::{CentroidalMomentum, FrameId, ModelError, RobotModel, RobotState, Wrench};

/// 6 × (n+6) matrix.
pub type Matrix6xN = OMatrix<f64, U6, Dyn>;

/// Forward kinematics of one `(model, state)` pair, shared by all the
/// quantities derived from it.
#[derive(Debug, Clone)]
pub struct Kinematics {
    link_pose: Vec<Isometry3<f64>>,
    /// Joint motion subspaces, spatial coordinates.
    motion: Vec<Vector6<f64>>,
    inertia: Vec<Matrix6<f64>>,
    link_com: Vec<Vector3<f64>>,
    velocity: Vec<Vector6<f64>>,
    /// Spatial accelerations for ν̇ = 0 and no gravity.
    bias_accel: Vec<Vector6<f64>>,
    base_position: Vector3<f64>,
    nu: DVector<f64>,
}

impl Kinematics {
    pub fn new(model: &RobotModel, state: &RobotState) -> Result<Self, ModelError> {
        state.check(model)?;
        let nl = model.links().len();
        let mut link_pose = vec![Isometry3::identity(); nl];
        let base = model.base_link();
        link_pose[base] = Isometry3::from_parts(Translation3::from(state.base_position), state.base_orientation);
        let mut motion = vec![Vector6::zeros(); model.dof()];
        for &j in &model.joint_order {
            let joint = &model.joints()[j];
            let parent = link_pose[model.joint_parent[j]];
            let at_joint = parent * joint.origin;
            let axis = at_joint.rotation * joint.axis.into_inner();
            let point = at_joint.translation.vector;
            motion[j] = stack(&axis, &point.cross(&axis));
            let rot = UnitQuaternion::from_axis_angle(&joint.axis, state.joint_positions[j]);
            link_pose[model.joint_child[j]] = at_joint * rot;
        }

        let mut inertia = Vec::with_capacity(nl);
        let mut link_com = Vec::with_capacity(nl);
        for (i, link) in model.links().iter().enumerate() {
            let pose = &link_pose[i];
            let c = pose * Point3::from(link.com);
            let r = pose.rotation.to_rotation_matrix().into_inner();
            let ic = r * link.inertia * r.transpose();
            inertia.push(spatial_inertia(link.mass, &c.coords, &ic));
            link_com.push(c.coords);
        }

        let base_position = state.base_position;
        let vb = state.base_linear_velocity();
        let wb = state.base_angular_velocity();
        let mut velocity = vec![Vector6::zeros(); nl];
        let mut bias_accel = vec![Vector6::zeros(); nl];
        velocity[base] = stack(&wb, &(vb + base_position.cross(&wb)));
        bias_accel[base] = stack(&Vector3::zeros(), &vb.cross(&wb));
        for &j in &model.joint_order {
            let (p, c) = (model.joint_parent[j], model.joint_child[j]);
            let sdot = state.velocity[6 + j];
            let vj = motion[j] * sdot;
            velocity[c] = velocity[p] + vj;
            bias_accel[c] = bias_accel[p] + cross_motion(&velocity[c], &vj);
        }

        Ok(Self {
            link_pose,
            motion,
            inertia,
            link_com,
            velocity,
            bias_accel,
            base_position,
            nu: state.velocity.clone(),
        })
    }

    pub fn link_pose(&self, link: usize) -> &Isometry3<f64> {
        &self.link_pose[link]
    }

    pub fn frame_pose(&self, model: &RobotModel, frame: FrameId) -> Isometry3<f64> {
        self.link_pose[model.frame_link[frame.0]] * model.frame(frame).origin
    }

    /// World position of contact point `i`.
    pub fn contact_point_position(&self, model: &RobotModel, i: usize) -> Vector3<f64> {
        let cp = &model.contact_points()[i];
        let pose = self.frame_pose(model, model.contact_frame(i));
        (pose * Point3::from(cp.position)).coords
    }

    /// Link that carries contact point `i`.
    pub fn contact_point_link(model: &RobotModel, i: usize) -> usize {
        model.frame_link[model.contact_frame(i).0]
    }

    /// Velocity of a world point rigidly attached to `link`.
    pub fn point_velocity(&self, link: usize, point: &Vector3<f64>) -> Vector3<f64> {
        let v = &self.velocity[link];
        lin(v) + ang(v).cross(point)
    }

    fn base_motion(&self) -> Matrix6<f64> {
        let mut s = Matrix6::zeros();
        s.fixed_view_mut::<3, 3>(3, 0).copy_from(&Matrix3::identity());
        s.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        s.fixed_view_mut::<3, 3>(3, 3).copy_from(&skew(&self.base_position));
        s
    }

    /// Spatial Jacobian of a link: spatial velocity `[ω; v_O]` = J ν.
    fn link_spatial_jacobian(&self, model: &RobotModel, link: usize) -> Matrix6xN {
        let mut j = Matrix6xN::zeros(model.nv());
        j.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.base_motion());
        for &k in &model.link_support[link] {
            j.column_mut(6 + k).copy_from(&self.motion[k]);
        }
        j
    }

    /// Jacobian of a world point attached to `link`, `[linear; angular]` rows.
    pub fn point_jacobian(&self, model: &RobotModel, link: usize, point: &Vector3<f64>) -> Matrix6xN {
        let js = self.link_spatial_jacobian(model, link);
        let mut out = Matrix6xN::zeros(model.nv());
        let w = js.fixed_rows::<3>(0);
        let v = js.fixed_rows::<3>(3);
        out.fixed_rows_mut::<3>(0).copy_from(&(v - skew(point) * w));
        out.fixed_rows_mut::<3>(3).copy_from(&w);
        out
    }

    pub fn frame_jacobian(&self, model: &RobotModel, frame: FrameId) -> Matrix6xN {
        let x = self.frame_pose(model, frame).translation.vector;
        self.point_jacobian(model, model.frame_link[frame.0], &x)
    }

    /// `J̇ν` of a frame, `[linear; angular]`.
    pub fn frame_bias_acceleration(&self, model: &RobotModel, frame: FrameId) -> Vector6<f64> {
        let link = model.frame_link[frame.0];
        let x = self.frame_pose(model, frame).translation.vector;
        let (a, v) = (&self.bias_accel[link], &self.velocity[link]);
        let w = ang(v);
        let vx = lin(v) + w.cross(&x);
        let acc = lin(a) + ang(a).cross(&x) + w.cross(&vx);
        stack(&acc, &ang(a))
    }

    pub fn com_position(&self, model: &RobotModel) -> Vector3<f64> {
        model.links().iter().zip(&self.link_com).map(|(l, c)| l.mass * c).sum::<Vector3<f64>>() / model.total_mass()
    }

    pub fn com_jacobian(&self, model: &RobotModel) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(3, model.nv());
        for (i, link) in model.links().iter().enumerate() {
            let jp = self.point_jacobian(model, i, &self.link_com[i]);
            j += jp.fixed_rows::<3>(0) * (link.mass / model.total_mass());
        }
        j
    }

    /// `J̇_c ν` for the CoM.
    pub fn com_bias_acceleration(&self, model: &RobotModel) -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        for (i, link) in model.links().iter().enumerate() {
            let (a, v) = (&self.bias_accel[i], &self.velocity[i]);
            let x = &self.link_com[i];
            let w = ang(v);
            let vx = lin(v) + w.cross(x);
            acc += link.mass * (lin(a) + ang(a).cross(x) + w.cross(&vx));
        }
        acc / model.total_mass()
    }

    /// Centroidal momentum matrix `[J_M^l; J_M^ω]` about the current CoM.
    pub fn centroidal_momentum_matrix(&self, model: &RobotModel) -> Matrix6xN {
        let mut h = Matrix6xN::zeros(model.nv());
        for (i, inertia) in self.inertia.iter().enumerate() {
            h += inertia * self.link_spatial_jacobian(model, i);
        }
        let c = self.com_position(model);
        let l_origin = h.fixed_rows::<3>(0).into_owned();
        let p = h.fixed_rows::<3>(3).into_owned();
        let mut out = Matrix6xN::zeros(model.nv());
        out.fixed_rows_mut::<3>(0).copy_from(&p);
        out.fixed_rows_mut::<3>(3).copy_from(&(l_origin - skew(&c) * &p));
        out
    }

    pub fn centroidal_momentum(&self, model: &RobotModel) -> CentroidalMomentum {
        let h = self.centroidal_momentum_matrix(model) * &self.nu;
        CentroidalMomentum { linear: h.fixed_rows::<3>(0).into_owned(), angular: h.fixed_rows::<3>(3).into_owned() }
    }

    /// Composite rotational inertia about the CoM with all joints locked.
    pub fn locked_inertia(&self, model: &RobotModel) -> Matrix3<f64> {
        let total: Matrix6<f64> = self.inertia.iter().sum();
        let c = self.com_position(model);
        let m = model.total_mass();
        let cx = skew(&c);
        total.fixed_view::<3, 3>(0, 0).into_owned() - m * cx * cx.transpose()
    }

    /// Composite-rigid-body mass matrix.
    pub fn mass_matrix(&self, model: &RobotModel) -> DMatrix<f64> {
        let nv = model.nv();
        let mut composite = self.inertia.clone();
        for &j in model.joint_order.iter().rev() {
            let (p, c) = (model.joint_parent[j], model.joint_child[j]);
            let ic = composite[c];
            composite[p] += ic;
        }
        let sb = self.base_motion();
        let mut m = DMatrix::zeros(nv, nv);
        let base_block = sb.transpose() * composite[model.base_link()] * sb;
        m.view_mut((0, 0), (6, 6)).copy_from(&base_block);
        for j in 0..model.dof() {
            let f = composite[model.joint_child[j]] * self.motion[j];
            m[(6 + j, 6 + j)] = self.motion[j].dot(&f);
            for &k in &model.link_support[model.joint_parent[j]] {
                let v = self.motion[k].dot(&f);
                m[(6 + k, 6 + j)] = v;
                m[(6 + j, 6 + k)] = v;
            }
            let col = sb.transpose() * f;
            for r in 0..6 {
                m[(r, 6 + j)] = col[r];
                m[(6 + j, r)] = col[r];
            }
        }
        m
    }

    /// Recursive Newton–Euler: returns `M ν̇ + h(q, ν)` for gravity `gravity`.
    pub fn inverse_dynamics(
        &self,
        model: &RobotModel,
        nu_dot: &DVector<f64>,
        gravity: &Vector3<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        if nu_dot.len() != model.nv() {
            return Err(ModelError::DimensionMismatch {
                what: "generalized acceleration",
                expected: model.nv(),
                found: nu_dot.len(),
            });
        }
        let nl = model.links().len();
        let base = model.base_link();
        let sb = self.base_motion();
        let base_acc = sb * nu_dot.fixed_rows::<6>(0);
        let mut acc = vec![Vector6::zeros(); nl];
        acc[base] = base_acc + self.bias_accel[base] + stack(&Vector3::zeros(), &(-gravity));
        for &j in &model.joint_order {
            let (p, c) = (model.joint_parent[j], model.joint_child[j]);
            let vj = self.motion[j] * self.nu[6 + j];
            acc[c] = acc[p] + self.motion[j] * nu_dot[6 + j] + cross_motion(&self.velocity[c], &vj);
        }
        let mut force: Vec<Vector6<f64>> = (0..nl)
            .map(|i| {
                let iv = self.inertia[i] * self.velocity[i];
                self.inertia[i] * acc[i] + cross_force(&self.velocity[i], &iv)
            })
            .collect();
        let mut out = DVector::zeros(model.nv());
        for &j in model.joint_order.iter().rev() {
            let (p, c) = (model.joint_parent[j], model.joint_child[j]);
            out[6 + j] = self.motion[j].dot(&force[c]);
            let fc = force[c];
            force[p] += fc;
        }
        out.fixed_rows_mut::<6>(0).copy_from(&(sb.transpose() * force[base]));
        Ok(out)
    }

    pub fn bias_forces(&self, model: &RobotModel, gravity: &Vector3<f64>) -> DVector<f64> {
        self.inverse_dynamics(model, &DVector::zeros(model.nv()), gravity).expect("dimensions match by construction")
    }
}

/// Generalized force of a wrench applied at a frame origin: `Jᵀ [F; μ]`.
pub fn wrench_generalized_force(jacobian: &Matrix6xN, wrench: &Wrench) -> DVector<f64> {
    let w = stack(&wrench.force, &wrench.moment);
    jacobian.transpose() * w
}

pub fn mass_matrix(model: &RobotModel, state: &RobotState) -> Result<DMatrix<f64>, ModelError> {
    Ok(Kinematics::new(model, state)?.mass_matrix(model))
}

pub fn bias_forces(model: &RobotModel, state: &RobotState, gravity: &Vector3<f64>) -> Result<DVector<f64>, ModelError> {
    Ok(Kinematics::new(model, state)?.bias_forces(model, gravity))
}

pub fn inverse_dynamics(
    model: &RobotModel,
    state: &RobotState,
    nu_dot: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, ModelError> {
    Kinematics::new(model, state)?.inverse_dynamics(model, nu_dot, gravity)
}

pub fn frame_pose(model: &RobotModel, state: &RobotState, frame: FrameId) -> Result<Isometry3<f64>, ModelError> {
    model.check_frame(frame)?;
    Ok(Kinematics::new(model, state)?.frame_pose(model, frame))
}

pub fn frame_jacobian(model: &RobotModel, state: &RobotState, frame: FrameId) -> Result<Matrix6xN, ModelError> {
    model.check_frame(frame)?;
    Ok(Kinematics::new(model, state)?.frame_jacobian(model, frame))
}

pub fn frame_bias_acceleration(
    model: &RobotModel,
    state: &RobotState,
    frame: FrameId,
) -> Result<Vector6<f64>, ModelError> {
    model.check_frame(frame)?;
    Ok(Kinematics::new(model, state)?.frame_bias_acceleration(model, frame))
}

pub fn com_position(model: &RobotModel, state: &RobotState) -> Result<Vector3<f64>, ModelError> {
    Ok(Kinematics::new(model, state)?.com_position(model))
}

pub fn com_jacobian(model: &RobotModel, state: &RobotState) -> Result<DMatrix<f64>, ModelError> {
    Ok(Kinematics::new(model, state)?.com_jacobian(model))
}

pub fn centroidal_momentum_matrix(model: &RobotModel, state: &RobotState) -> Result<Matrix6xN, ModelError> {
    Ok(Kinematics::new(model, state)?.centroidal_momentum_matrix(model))
}

pub fn centroidal_momentum(model: &RobotModel, state: &RobotState) -> Result<CentroidalMomentum, ModelError> {
    Ok(Kinematics::new(model, state)?.centroidal_momentum(model))
}

/// Largest joint torque accepted by [`forward_dynamics`].
pub const TORQUE_GUARD: f64 = 1e6;

/// `ν̇ = M⁻¹ (Bτ + Σ Jₖᵀ fₖ − h)`.
pub fn forward_dynamics(
    model: &RobotModel,
    state: &RobotState,
    tau: &DVector<f64>,
    contacts: &[(FrameId, Wrench)],
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, ModelError> {
    let kin = Kinematics::new(model, state)?;
    if tau.len() != model.dof() {
        return Err(ModelError::DimensionMismatch { what: "joint torques", expected: model.dof(), found: tau.len() });
    }
    if tau.iter().any(|t| !t.is_finite() || t.abs() > TORQUE_GUARD) {
        return Err(ModelError::TorqueOutOfRange);
    }
    let mut rhs = -kin.bias_forces(model, gravity);
    for (j, t) in tau.iter().enumerate() {
        rhs[6 + j] += t;
    }
    for (frame, wrench) in contacts {
        model.check_frame(*frame)?;
        rhs += wrench_generalized_force(&kin.frame_jacobian(model, *frame), wrench);
    }
    let m = kin.mass_matrix(model);
    let chol = m.cholesky().ok_or(ModelError::SingularMassMatrix)?;
    Ok(chol.solve(&rhs))
}

/// Kinetic energy `½ νᵀ M ν`.
pub fn kinetic_energy(model: &RobotModel, state: &RobotState) -> Result<f64, ModelError> {
    let m = mass_matrix(model, state)?;
    Ok(0.5 * state.velocity.dot(&(&m * &state.velocity)))
}

/// Gravitational potential energy `−m g·c`.
pub fn potential_energy(model: &RobotModel, state: &RobotState, gravity: &Vector3<f64>) -> Result<f64, ModelError> {
    Ok(-model.total_mass() * gravity.dot(&com_position(model, state)?))
}
