//! Squat-jump stack for floating-base legged robots: rigid-body dynamics,
//! a dense QP solver, velocity- and torque-level launch controllers, a CoM
//! launch-profile generator, a penalty-contact simulator and a scenario
//! harness.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod harness;
pub mod multibody;
pub mod qpsolver;
pub mod sim;
pub mod trajgen;
