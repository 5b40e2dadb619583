//! Numerical laboratory for nonlinear growth-fragmentation equations and the
//! low-dimensional ODE systems they reduce to on the eigenmanifold.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: coefficients, kernels, nonlinearities, controls, assumption checks
//! * [`eigen`]: Perron eigenelements on a finite-volume grid
//! * [`pde`]: the discretised PDE, its closures and diagnostics
//! * [`reduced`]: the reduced ODE systems and a shared integrator
//! * [`analysis`]: steady states, Lyapunov functional, stability, Hopf scan,
//!   limit cycles and Floquet comparisons
//! * [`figures`]: the canned phase-plane experiments
//!
//! Data-parallel loops go through [`exec`]; build without the `parallel`
//! feature to get the purely sequential code path.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod eigen;
pub mod error;
pub mod exec;
pub mod figures;
pub mod grid;
pub mod io;
pub mod model;
pub mod numerics;
pub mod pde;
pub mod reduced;
pub mod suites;

pub use error::{Error, Result};
pub use exec::Execution;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
