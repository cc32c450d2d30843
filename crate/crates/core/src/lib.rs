//! Joint beamforming and downsampling-depth design for a downlink MU-MISO
//! system that serves conventional bit-users under rate floors together with
//! semantic users scored by a fitted generalized-logistic quality curve.
//!
//! Solvers:
//! - [`mmfp::solve_p2`]: majorization-minimization with fractional-programming
//!   transforms and a fixed-point multiplier search.
//! - [`lpmmfp::solve_lp`]: one-shot directions plus power allocation.
//! - [`baselines`]: ZF, MRT and WMMSE directions followed by the same power allocation.
//! - [`ksearch::solve_p1`]: exhaustive search over the downsampling depth.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod ksearch;
pub mod linalg;
pub mod lpmmfp;
pub mod metrics;
pub mod mmfp;
pub mod model;
pub mod semrate;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Beamformer, ChannelSet, SolveReport, SystemConfig};
pub use semrate::SemanticRateModel;
pub use solver::{SolveOptions, SolverKind};
