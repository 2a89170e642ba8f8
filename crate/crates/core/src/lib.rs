//! Numerical toolkit for canonical Hamiltonian systems `J M' = z H M` on the
//! half-line with Hamiltonians that are piecewise given and constant after a
//! finite time.
//!
//! The crate computes transfer matrices, Titchmarsh-Weyl functions, spectral
//! densities, the Szego entropy `K_m`, the oscillation functional `K~(H)`,
//! both constructive factorizations `H = G^T Q G` and the generalized Krein
//! system built on top of them.
//!
//! ```
//! use debranges::{mat2::Mat2R, hamiltonian::PiecewiseHamiltonian};
//! use debranges::{functionals::ktilde, solver::entropy_closed_form};
//!
//! // diag(1,0) on [0, 5], identity afterwards.
//! let h = PiecewiseHamiltonian::from_constant(&[(5.0, Mat2R::diag(1.0, 0.0))], Mat2R::IDENTITY).unwrap();
//! assert!((ktilde(&h).unwrap().total - 10.0).abs() < 1e-12);
//! assert!((entropy_closed_form(&h).unwrap() - 6f64.ln()).abs() < 1e-12);
//! ```

// Guards like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod factorization;
pub mod functionals;
pub mod hamiltonian;
pub mod io;
pub mod krein;
pub mod mat2;
pub mod models;
pub mod ode;
pub mod par;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
