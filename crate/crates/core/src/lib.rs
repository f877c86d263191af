//! Covariance-corrected multiple permutation tests.
//!
//! Permutation resampling gets the joint covariance of multiple test
//! statistics wrong whenever the pooled-sample limit differs from the
//! original one. This crate repairs the covariance of the permuted contrast
//! estimates under three assumption regimes, forms family-wise error
//! controlling decisions through balanced critical values, and ships a
//! Monte-Carlo harness for error-rate and power studies plus competitor
//! procedures for comparison.
//!
//! Entry points:
//! * [`engine::run`] computes observed statistics and the corrected
//!   permutation matrix for grouped or survival data.
//! * [`mtp`] turns a run into decisions, p-values, and competitor reports.
//! * [`sim`] runs scenario files end to end and reports error rates/power.
//! * [`io`] loads CSV data and writes reports.

pub mod contrasts;
pub mod correction;
pub mod engine;
pub mod error;
pub mod io;
pub mod linalg;
pub mod moments;
pub mod mtp;
pub mod sim;
pub mod special;
pub mod statistics;
pub mod survival;

pub use contrasts::ContrastSpec;
pub use correction::{CaseMode, CorrectionCase};
pub use engine::{DataSet, PermutationRun, RunConfig};
pub use error::{Error, Result};
pub use moments::GroupedSample;
pub use mtp::TestReport;
pub use statistics::KernelKind;
pub use survival::SurvivalSample;
