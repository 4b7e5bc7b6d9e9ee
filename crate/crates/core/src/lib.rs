//! Data-driven sub-optimal linear-quadratic regulators for discrete-time
//! linear systems with a known input delay.
//!
//! The crate covers the delayed plant and its augmented model ([`plant`]),
//! input/state data and the set of models consistent with it ([`data`]),
//! the expanded matrix S-lemma ([`slemma`]) and the LMI-based gain
//! synthesis built on it ([`synthesis`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod linalg;
pub mod matrix_serde;
pub mod par;
pub mod plant;
pub mod random;
pub mod sdp;
pub mod slemma;
pub mod synthesis;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use par::Execution;
pub use plant::{
    closed_loop, evaluate_cost, evaluate_cost_truncated, lift_augmented, simulate, AugmentedModel,
    AugmentedState, CostWeights, DelayPlant, Gain, InputSource, Trajectory,
};
