//! Bilevel Bayesian optimization over black-box upper and lower objectives.
//!
//! Both levels are modelled by Gaussian processes over the joint
//! `(x_u, x_l)` space. The lower-level best response `Φ(x_u)` is estimated
//! from the lower posterior mean, the upper level is explored by Thompson
//! sampling the upper posterior restricted to `(x_u, Φ(x_u))`, and the lower
//! level is queried with REVI (a weighted sum of fixed-task knowledge
//! gradients) or its Thompson-sampling variant REVITS.
//!
//! The crate also ships the nested EI benchmark, the synthetic test problems
//! with brute-force ground truth, and the gap metrics used to compare runs.
//!
//! With the `parallel` feature (on by default) the embarrassingly parallel
//! inner loops run on rayon; without it every [`Execution`] runs sequentially
//! and produces identical results.

pub mod acquisition;
pub mod algorithms;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod response_map;
pub mod sampling;
pub mod testbed;

pub use error::{Error, Result};
pub use par::Execution;
