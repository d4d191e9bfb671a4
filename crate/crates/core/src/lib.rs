//! Structured sequential decision-making for disaster management.
//!
//! A scenario walks a decision maker through five levels (informativeness,
//! humanitarian category, ground, satellite and drone damage assessment). At
//! each level the decision maker sees a classifier's confidence vector and
//! either commits to a class or spends a credit to gather another record.
//! This crate holds the environment, the record sources, a from-scratch A2C
//! learner, the argmax benchmark, metrics and the hyperparameter tuner.

pub mod a2c;
pub mod agents;
pub mod env;
pub mod error;
pub mod judgement;
pub mod level;
pub mod metrics;
pub mod source;
pub mod tuner;

pub use error::{Error, Result};
pub use level::{Level, GATHER_SLOT, N_SLOTS};
