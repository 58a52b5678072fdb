//! Generalized two-step BDF2 and AM2 time integrators.
//!
//! The crate is split along the lines of the workflow it supports:
//!
//! - [`schemes`] builds the coefficient sets `(a₀,a₁,a₂; b₀,b₁,b₂)` of the
//!   generalized BDF2 / AM2 families (one free parameter `alpha`) and of
//!   arbitrary user supplied three-level schemes.
//! - [`stability`] answers A-stability questions: closed-form thresholds,
//!   Cohn–Schur checks along the imaginary axis, stability-region rasters and
//!   the 2×2 companion matrix of the one-step reformulation.
//! - [`integrators`] runs the fully implicit and the IMEX steppers on linear
//!   damped systems `y' + L y + Ls y = g(t)` and on general right-hand sides.
//! - [`energy`] holds the G-norm machinery used to monitor uniform-in-time
//!   boundedness of IMEX-BDF2 runs.
//! - [`problems`] provides the benchmark problems with closed-form solutions
//!   and a plain-text format for custom ones.
//!
//! ```
//! use twostep::schemes::{SchemeCoefficients, SchemeFamily};
//! use twostep::stability::{a_stable_closed_form, a_stable_sampled};
//!
//! let s = SchemeCoefficients::new(SchemeFamily::GeneralizedBdf2, 0.9).unwrap();
//! assert!(a_stable_closed_form(SchemeFamily::GeneralizedBdf2, 0.9).unwrap());
//! assert!(a_stable_sampled(&s, 2001).unwrap().stable);
//! ```

pub mod energy;
pub mod error;
pub mod integrators;
pub mod problems;
pub mod schemes;
pub mod stability;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Solution value at one time level.
pub type StateVector = nalgebra::DVector<f64>;
