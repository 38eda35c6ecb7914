//! Variance synthesis and robust parameter design.
//!
//! A transfer function is written as a plain-text expression over named
//! design variables. The crate propagates the variances (and pairwise
//! correlations) of those variables to the response with the first-order
//! delta method, breaks the transmitted variance down per source, and picks
//! nominals that minimize it while holding the response on target.
//!
//! ```
//! use varsynth::{Expr, Assignment};
//!
//! let volume = Expr::parse("pi*(D^2 - B^2)*L/4").unwrap();
//! let point = Assignment::from_pairs([("D", 1.69), ("B", 0.625), ("L", 1.92)]);
//! let v = volume.evaluate(&point).unwrap();
//! assert!((v - 3.7178).abs() < 1e-4);
//! ```
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the
//! command-line front end live in `varsynth-cli`.

#![cfg_attr(not(test), no_std)]
#![warn(missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod assignment;
pub mod design;
pub mod dimension;
mod error;
pub mod expr;
pub mod gradient;
mod linalg;
pub mod mc;
mod qp;
mod sqp;
pub mod scalar;
pub mod variance;

pub use assignment::Assignment;
pub use design::{
    evaluate_candidate, optimize, sweep_correlation, DesignSolution, Feasibility, Study,
    SweepRow, Tolerances,
};
pub use dimension::{reduce, DimensionedVariable, PiGroup, Rational};
pub use error::{Error, Result};
pub use expr::Expr;
pub use gradient::{check_gradient, partials, Gradient};
pub use mc::{simulate, McEstimate};
pub use scalar::{Dual, Scalar};
pub use variance::{
    rank_contributions, sigma_of, transmit, Correlation, CorrelationSet, DesignVariable,
    LinkModel, RankedContribution, SignConvention, Source, TransmitOptions,
    VarianceDecomposition, DEFAULT_COV_LIMIT,
};
