//! Exact spacetime laboratory for finite-temperature P-form Z_N homological codes.
//!
//! The crate builds cubical tori, their Trotter suspensions and duals, evaluates
//! decorated Trotterized traces on tiny Hilbert spaces, and checks them against
//! classical fixed-background partition functions, closed-defect and polymer
//! gases, Kramers-Wannier duality and the plaquette random-cluster coupling.

pub mod complex;
pub mod defects;
pub mod duality;
pub mod error;
pub mod falgebra;
pub mod gauge_prcm;
pub mod lowactivity;
pub mod quantum_oracle;
pub mod spacetime;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Crate version, recorded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
