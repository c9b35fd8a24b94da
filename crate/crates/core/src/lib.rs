//! Numerical holonomy of metric connections on coordinate charts.
//!
//! Metric families are sampled on a chart, transported around loops, and the
//! resulting holonomy algebras are classified up to conjugation against a
//! small catalog of subgroups of `SO(l)`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod holonomy;
pub mod linalg;
pub mod subgroup;
pub mod transport;

pub use error::{Error, Result};
pub use linalg::Matrix;
