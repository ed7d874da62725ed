#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Phase-type approximation of heavy-tailed distributions.
//!
//! The crate fits Bernstein phase-type (BPH) bodies, hyperexponential (HE)
//! tails and their combination (BPH_HE), selects the HE fitting points with an
//! Adam-driven search, and evaluates the resulting models in M/PH/1 queues,
//! both analytically and by simulation.

pub mod bph;
pub mod constants;
pub mod error;
pub mod fit;
pub mod he_fit;
pub mod hybrid;
pub mod model_io;
pub mod optimizer;
pub mod phase_type;
pub mod quadrature;
pub mod sim;
pub mod queueing;
pub mod target;

pub use error::{Error, InvalidReason, Result};
pub use phase_type::PhaseTypeModel;
pub use target::{TargetDistribution, TargetKind, Window};
