//! 6-D spatial vector helpers.
//!
//! Spatial vectors are stacked `[angular; linear]` and expressed in inertial
//! coordinates about the inertial origin. Public APIs use the `[linear; angular]`
//! ordering instead; conversions happen at the boundary.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub(crate) fn ang(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(0).into_owned()
}

#[inline]
pub(crate) fn lin(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(3).into_owned()
}

#[inline]
pub(crate) fn stack(a: &Vector3<f64>, l: &Vector3<f64>) -> Vector6<f64> {
    Vector6::new(a.x, a.y, a.z, l.x, l.y, l.z)
}

/// Motion cross product `v ×ₘ m`.
pub(crate) fn cross_motion(v: &Vector6<f64>, m: &Vector6<f64>) -> Vector6<f64> {
    let (w, v0) = (ang(v), lin(v));
    let (mw, mv) = (ang(m), lin(m));
    stack(&w.cross(&mw), &(v0.cross(&mw) + w.cross(&mv)))
}

/// Force cross product `v ×* f`.
pub(crate) fn cross_force(v: &Vector6<f64>, f: &Vector6<f64>) -> Vector6<f64> {
    let (w, v0) = (ang(v), lin(v));
    let (fn_, ff) = (ang(f), lin(f));
    stack(&(w.cross(&fn_) + v0.cross(&ff)), &w.cross(&ff))
}

/// Spatial inertia of a body with mass `mass`, centre of mass at `com`
/// and rotational inertia `inertia_com` about its centre of mass, all in
/// inertial coordinates.
pub(crate) fn spatial_inertia(mass: f64, com: &Vector3<f64>, inertia_com: &Matrix3<f64>) -> Matrix6<f64> {
    let c = skew(com);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&(inertia_com + mass * c * c.transpose()));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(mass * c));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(mass * c.transpose()));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(mass * Matrix3::identity()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skew_matches_cross() {
        let a = Vector3::new(0.3, -1.2, 2.0);
        let b = Vector3::new(-0.7, 0.4, 1.1);
        assert!((skew(&a) * b - a.cross(&b)).norm() < 1e-15);
    }

    #[test]
    fn force_cross_is_dual_of_motion_cross() {
        // (v ×* f)·m = -f·(v ×ₘ m)
        let v = Vector6::new(0.1, -0.2, 0.3, 1.0, 0.5, -0.4);
        let f = Vector6::new(2.0, 0.1, -1.0, 0.3, 0.2, 0.9);
        let m = Vector6::new(-0.5, 0.7, 0.2, 0.1, -1.3, 0.6);
        let lhs = cross_force(&v, &f).dot(&m);
        let rhs = -f.dot(&cross_motion(&v, &m));
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn spatial_inertia_momentum_of_translating_body() {
        let com = Vector3::new(0.2, 0.0, 1.0);
        let inertia = spatial_inertia(2.0, &com, &Matrix3::identity());
        let v = Vector3::new(1.0, 0.0, 0.0);
        let h = inertia * stack(&Vector3::zeros(), &v);
        assert!((lin(&h) - 2.0 * v).norm() < 1e-15);
        // angular momentum about the origin is com × p
        assert!((ang(&h) - com.cross(&(2.0 * v))).norm() < 1e-15);
    }
}
