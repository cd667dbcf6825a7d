//! Hypothesis management over simulation data: structural models, causal
//! dependencies, probabilistic u-relations and Bayesian conditioning.

pub mod api;
pub mod catalog;
pub mod causal;
pub mod closure;
pub mod error;
pub mod inference;
pub mod matching;
pub mod num;
pub mod structure;
pub mod synthesis;
pub mod urel;
pub mod workspace;

pub use error::{Error, ErrorKind, Result};
