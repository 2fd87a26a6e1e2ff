//! Semi-implicit time stepping for the nonlinear Caginalp phase-field system
//!
//! ```text
//! theta_t + ell phi_t - lap theta = f
//! phi_t - lap phi + beta(phi) + pi(phi) = ell theta      (beta maximal monotone)
//! ```
//!
//! with homogeneous Neumann conditions, for regular, logarithmic and
//! double-obstacle potentials. Nonsmooth `beta` is replaced in each step by
//! its Yosida approximation and solved with semismooth Newton.
//!
//! The numerical core is generic over [`Scalar`] (`f32`, `f64`); the
//! [`harness`] works in `f64`.

pub mod error;
pub mod estimates;
pub mod grid;
pub mod harness;
pub mod interpolants;
pub mod nonlinear_solver;
pub mod potentials;
pub mod quadrature;
pub mod scalar;
pub mod source;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Truncation};
pub use nonlinear_solver::{EpsSchedule, StepSolveConfig};
pub use potentials::{Potential, PotentialKind};
pub use scalar::Scalar;
pub use stepper::{run, Forcing, SchemeParams, Trajectory};

pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type Potential64 = Potential<f64>;
pub type SchemeParams64 = SchemeParams<f64>;
pub type Trajectory64 = Trajectory<f64>;

pub type Grid32 = Grid<f32>;
pub type Field32 = Field<f32>;
pub type Potential32 = Potential<f32>;
pub type SchemeParams32 = SchemeParams<f32>;
pub type Trajectory32 = Trajectory<f32>;
