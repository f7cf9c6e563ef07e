//! Impulse control with an unknown reaction parameter.
//!
//! A controller acts on a diffusion through impulses that resolve after a
//! latency window.  Each resolved impulse reveals a noisy observation of the
//! reaction parameter, and the controller's belief over a finite parameter set
//! is updated by Bayes' rule.  This crate provides the discrete-time dynamic
//! programming solver for that problem, together with policy extraction,
//! Monte Carlo simulation under the exact outcome laws, and an independent
//! expectimax oracle used to cross-check the solver on finite instances.

pub mod bayes;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod policy;
pub mod sim;
pub mod solver;

pub use bayes::{ParameterSet, Prior};
pub use model::{Action, Impulse, ModelSpec, Outcome, OutcomeKernel, State};
pub use numerics::{GridSpec, NumericOpts, ValueField};
pub use policy::Policy;
pub use solver::{SolveReport, SolverOpts};
