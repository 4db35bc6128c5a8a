//! Closed-loop inverse kinematics on the continuous shape of soft robots.
//!
//! The crate composes an actuation-to-shape map (closed-form constant
//! curvature, a quasi-static morphoelastic rod, or a learned branch/trunk
//! operator network) with shape-to-task functionals, and drives the
//! actuation with a Jacobian-inverse feedback law.
//!
//! Module overview:
//! - [`curve`], [`actuation`], [`gain`], [`rng`]: shared types.
//! - [`cc_model`]: planar constant-curvature segment.
//! - [`rod`]: three-fiber active filament under gravity, solved by shooting.
//! - [`model`], [`tasks`]: the shape-model interface, task functionals and
//!   composed Jacobians.
//! - [`neuralop`]: branch/trunk operator network with exact gradients.
//! - [`dataset`], [`trainer`]: data generation, persistence and training.
//! - [`clik`], [`plot`]: the control loop and its CSV/SVG outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuation;
pub mod cc_model;
pub mod clik;
pub mod curve;
pub mod dataset;
pub mod error;
pub mod gain;
mod hash;
pub mod model;
pub mod neuralop;
pub mod plot;
pub mod rng;
pub mod rod;
pub mod tasks;
pub mod trainer;

pub use actuation::ActuationBox;
pub use error::{Error, Result};
pub use gain::GainMatrix;
pub use model::ShapeModel;
