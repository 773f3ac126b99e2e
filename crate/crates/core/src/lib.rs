//! Shape-constrained polynomial regression for small tabular datasets.

pub mod artifact;
pub mod constraints;
pub mod domain;
pub mod fidelity;
pub mod gpr;
pub mod lowdisc;
pub mod metrics;
pub mod model;
pub mod polybasis;
pub mod pipeline;
pub mod qp;
pub mod regression;
pub mod sip;
pub mod synthetic;
pub mod violation;
