//! Pseudo-spectral decay laboratory for coupled dissipative systems on a
//! periodic box.
//!
//! The crate evolves the asymmetric (micropolar) fluid system and a family
//! of companion dissipative systems with a Fourier pseudo-spectral method,
//! evolves their exact linearizations through per-mode symbol exponentials,
//! and measures algebraic decay rates of derivative norms, of the
//! nonlinear-minus-linear error fields, and of the pressure. Explicit
//! decay constants are evaluated by a small constants engine and checked
//! against the measured series by the diagnostics layer.
//!
//! Layout:
//! - [`lattice`], [`fft`], [`field`]: periodic lattice, transforms, fields,
//!   differential operators and norms,
//! - [`constants`]: decay constants, exponent tables and time bounds,
//! - [`semigroup`]: symbol matrices, per-mode exponentials, eigenvalue
//!   bounds, semigroup comparisons and whole-space quadrature,
//! - [`systems`]: right-hand sides of the nonlinear systems and pressure
//!   recovery,
//! - [`stepper`]: integrating-factor time integration and trajectories,
//! - [`diagnostics`]: decay-exponent estimation and verification reports,
//! - [`oracle`]: brute-force reference computations used by the test suite,
//! - [`config`], [`cli`], [`output`]: experiment harness.

pub mod cli;
pub mod config;
pub mod constants;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod field;
pub mod lattice;
pub mod oracle;
pub mod output;
pub mod semigroup;
pub mod stepper;
pub mod systems;

pub use error::{Error, Result};
pub use field::{Block, SpectralField, State};
pub use lattice::Lattice;
pub use systems::{SystemId, SystemParams};

/// Crate version string embedded in every report header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
