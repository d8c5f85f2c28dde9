//! Recursive inverse dynamics of parallel kinematic manipulators, together
//! with its first and second time derivatives.
//!
//! The engine follows the platform trajectory down to the actuators: a
//! five-pass kinematics sweep produces joint rates up to fourth order, a
//! backward Newton-Euler sweep per limb produces the generalized forces and
//! their derivatives, and the actuation forces are assembled through the
//! inverse kinematics Jacobian.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod fixtures;
pub mod flatness;
pub mod invdyn;
pub mod liegroup;
pub mod limb_kinematics;
pub mod lu;
pub mod model;
pub mod oracle;
pub mod par;
pub mod pkm_kinematics;
pub mod taskspace;
pub mod trajectory;
#[cfg(test)]
mod testutil;

pub use liegroup::{Pose, Screw, Twist, Wrench};
pub use batch::{run_trajectory, RunOptions, TrajectoryRow};
pub use flatness::{sea_feedforward, FeedforwardResult};
pub use invdyn::{second_order_invdyn, InvDynOptions, InvDynResult};
pub use model::{load_model, load_model_file, PkmModel, PkmState, TaskMotion};
pub use oracle::{verify_model, FdConfig, VerificationReport, VerifyOptions};
pub use pkm_kinematics::{fourth_order_kinematics, KinematicsOptions};
pub use taskspace::{task_eom, TaskSpaceEom};
pub use trajectory::{ScrewTrajectory, TrajectorySpec};
