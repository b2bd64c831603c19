//! Confidence-oriented debiasing for multi-label emotion classifiers.
//!
//! A biased model trained with generalized cross-entropy ranks every emotion
//! subset by loss; low-loss "guiding" samples are re-voiced with speakers of
//! high-loss "contrary" samples and the union is used to retrain a classifier
//! whose fairness is measured by TPR-gap and DP-gap across speaker groups.

pub mod augment;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod partition;
pub mod records;
pub mod seed;

pub use error::{Error, Result};
