//! Tabular actor-critic policy-update laboratory.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: finite MDPs, exact policy evaluation, value iteration.
//! * [`parametrization`]: softmax, escort and direct policy parametrizations,
//!   their analytic gradients and the Euclidean projection onto the simplex.
//! * [`updates`]: the five actor update operators (policy gradient with softmax,
//!   policy gradient with escort, direct, cross-entropy, modified cross-entropy).
//! * [`environments`]: random MDPs, the chain, the cliff and a one-state bandit.
//! * [`jekyll_hyde`]: the two-personality exploration/exploitation agent.
//! * [`theory`]: executable unlearning, domino, gravity-well and monotonicity settings.
//! * [`experiment`]: configuration, seeded sweeps, aggregation, CSV and SVG output.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod environments;
pub mod error;
pub mod experiment;
pub mod jekyll_hyde;
pub mod mdp;
pub mod parametrization;
pub mod table;
pub mod theory;
pub mod updates;

pub use error::{LabError, Result};
pub use mdp::{FiniteMdp, Policy, ValueFunctions};
pub use parametrization::{ParamKind, PolicyParams};
pub use table::Table;
pub use updates::{RuleKind, UpdateRule};
