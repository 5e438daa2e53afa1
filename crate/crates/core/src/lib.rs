//! Simulation and design analysis of a passive three-joint assistive eating
//! mechanism: linkage kinematics, spring balancing, damped dynamics with a
//! compliant utensil mount, and handle-variant comparisons.

// negated float comparisons are deliberate: NaN must fail the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod kinematics;
pub mod statics;

pub use config::ConfigFile;
pub use dynamics::{Device, Scenario, SimResult};
pub use kinematics::{JointState, MechanismParams, Pose};
