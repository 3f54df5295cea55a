//! Factorial cumulant generating functions for count distributions.
//!
//! A count variable `X` is described by `C(t) = log E[(1+t)^X]`. Everything in
//! this crate flows through [`fcgf::AnalyticFcgf`]: exact PMFs come out of the
//! [`series`] engine, the [`families`] catalog builds named members, and the
//! [`asymptotics`] module measures convergence in total variation.

pub mod asymptotics;
pub mod error;
pub mod families;
pub mod fcgf;
pub mod multivariate;
pub mod poisson_tweedie;
pub mod series;
pub mod tweedie;

pub use error::{Error, Result};
pub use fcgf::{AnalyticFcgf, DispersionReport, Interval};
pub use families::FamilySpec;
pub use series::{PmfConfig, PmfTable, PowerSeries};
