//! Study files, reports and the `varsynth` command-line front end.
//!
//! Every verb is also available as a library call returning the report it
//! would write, which keeps the binary a thin wrapper.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
mod commands;
pub mod contour;
mod error;
pub mod report;
pub mod scenario;
pub mod studyfile;

pub use commands::{
    run_analyze, run_mc_check, run_optimize, run_pi_reduce, run_sweep, DEFAULT_MAX_RELATIVE_GAP,
    STANDARD_ERRORS,
};
pub use contour::{run_contour, Cell, ContourGrid, ContourSpec};
pub use error::{exit, CliError};
pub use report::{Report, Status};
pub use studyfile::{load_study, load_study_file, StudyFile};
