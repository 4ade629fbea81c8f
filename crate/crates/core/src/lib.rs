//! Opioid use disorder prediction from insurance claims: cohort
//! construction, feature engineering, selection, class balancing, model
//! training and evaluation.

pub mod balance;
pub mod claims;
pub mod cohort;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod matrix;
pub mod models;
pub mod pipeline;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
