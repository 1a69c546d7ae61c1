//! Boundless distributed alignment search.
//!
//! Searches, by gradient descent, for an orthogonal rotation of a hidden
//! representation together with learned subspace boundaries such that
//! interchanging those subspaces between inputs reproduces the
//! counterfactual behaviour of an interpretable high-level causal model.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkernel`]: `f64` matrices, LU solves, and a reverse-mode tape.
//! - [`causal`]: symbolic causal models, interchange interventions, and
//!   the four price-tagging hypotheses.
//! - [`target`]: the price-tagging task, planted ground-truth networks,
//!   and a small trainable decoder.
//! - [`intervene`]: Cayley rotations, boundary masks, hard and soft
//!   distributed interchange interventions.
//! - [`bdas`]: counterfactual datasets, the training loop, IIA
//!   evaluation, sweeps, and boundary dynamics.
//! - [`cli`]: configuration, artifact writing, and summary reports.

pub mod bdas;
pub mod causal;
pub mod cli;
pub mod error;
pub mod intervene;
pub mod io;
pub mod numkernel;
pub mod target;

pub use error::{Error, Result};
