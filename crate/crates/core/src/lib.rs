//! Adversarially robust one-stage learning-to-defer.
//!
//! The crate provides cost-sensitive deferral losses for classification and
//! regression together with their adversarial and smooth adversarial
//! surrogates, outcome-specific PGD attacks, regularized ERM trainers,
//! evaluation metrics, and brute-force verifiers for small instances.
//!
//! Action indices are 0-based throughout: for classification with `K`
//! classes and `J` experts, actions `0..K` predict a class and `K + j`
//! defers to expert `j`; for regression, action `0` trusts the predictor
//! and action `j + 1` defers to expert `j`.

pub mod agents;
pub mod attacks;
pub mod data;
pub mod diffcore;
pub mod evaluation;
pub mod exec;
pub mod oracle;
pub mod surrogates;
pub mod training;

mod error;

pub use error::{Error, Result};
