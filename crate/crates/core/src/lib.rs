//! Time-local master equations for a particle coupled to a free scalar field,
//! and the predictability sieve built on top of them.
//!
//! The crate is organised bottom-up:
//!
//! * [`hilbert`]: truncated Fock-space operators, density matrices, entropies.
//! * [`bath`]: field spectral models and the kernels `G_R`, `G_H`, `F_R`, `F_H`.
//! * [`coeffs`]: time-dependent Brownian-motion coefficients from a kernel table.
//! * [`solvers`]: the dipole (QBM), channel and secular master equations.
//! * [`sieve`]: entropy-production ranking of candidate initial states.
//! * [`oracle`]: exact joint system + few-mode bath evolution for validation.
//! * [`scenario`], [`run`], [`plot`]: configuration, pipelines and output.
//!
//! Units are fixed to `hbar = 1`; the oscillator mass and frequency default to 1.

// `!(x > 0.0)` is how parameter checks reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod coeffs;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod optimize;
pub mod oracle;
pub mod output;
pub mod par;
pub mod plot;
pub mod quadrature;
pub mod run;
pub mod scenario;
pub mod sieve;
pub mod solvers;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix (column-major).
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
