//! Control coordinate frames for teleoperation: frame construction, input
//! mapping, a simulated arm, task worlds, metrics, a synthetic operator and
//! the session state machine behind the live server.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod frames;
pub mod geometry;
pub mod kinematics;
pub mod mapping;
pub mod metrics;
pub mod operator;
pub mod scenarios;
pub mod scene;
pub mod session;
pub mod sim;
pub mod trial;
