//! Attention-over-features classification with intervention-based fairness
//! attribution and post-processing bias mitigation.
//!
//! The pipeline: raw rows ([`datasets`]) are encoded into per-feature entity
//! ids ([`schema`]), an attention classifier is trained on them ([`nn`]),
//! each feature's attention weight is zeroed in turn to attribute fairness and
//! accuracy to it ([`attribution`]), and the features found to drive
//! unfairness are decayed at inference time ([`mitigation`]).

pub mod attribution;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod fairness;
pub mod harness;
pub mod mitigation;
pub mod nn;
pub mod rng;
pub mod schema;

pub use error::{Error, Result};
