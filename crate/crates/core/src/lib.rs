//! Sliding-window approximations of finite partially observed Markov decision
//! processes.
//!
//! The crate builds the finite "window MDP" whose state is the last `N + 1`
//! observations and `N` actions, with the belief `N` steps back frozen at a
//! reference predictor `z*`. On top of that it provides:
//!
//! * exact Bayesian filter/predictor recursions ([`filter`]),
//! * distances and kernel coefficients on finite distributions ([`metrics`]),
//! * construction, value iteration and exact true-model evaluation of window
//!   policies ([`window`]),
//! * tabular Q-learning on window states ([`qlearning`]),
//! * empirical filter-stability terms and closed-form geometric error bounds
//!   ([`stability`]),
//! * an experiment driver producing schema-stable CSV/JSON ([`experiment`]).
//!
//! Window states are encoded oldest-first: observation digits (base `|Y|`)
//! are most significant, followed by action digits (base `|U|`). See
//! [`filter::WindowState`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builders;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod metrics;
pub mod model;
pub mod normal;
pub mod qlearning;
pub mod rng;
pub mod simulate;
pub mod stability;
pub mod window;

pub use error::{Error, Result};
pub use filter::{Measured, WindowState};
pub use model::{Belief, FinitePomdp, ModelConstants, Violation};
pub use window::{PolicyProvenance, WindowMdp, WindowPolicy};
