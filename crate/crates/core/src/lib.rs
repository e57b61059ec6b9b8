//! Pilot-based OFDM channel estimation at link level.
//!
//! The crate simulates a 72-subcarrier, 14-symbol OFDM frame with two pilot
//! symbols, passes it through 3GPP tapped-delay-line fading channels and
//! compares channel estimators:
//!
//! * least squares with bilinear interpolation ([`classical`]),
//! * LMMSE with learned correlation matrices ([`classical`]),
//! * the LS-augmented interpolated DNN, LSiDNN ([`dlmodels`]),
//! * the iResNet convolutional baseline ([`dlmodels`]).
//!
//! [`fxp`] emulates fixed-point word lengths and searches for the smallest
//! `(W, I)` format that keeps the estimation error at its floating-point
//! level. [`bench`] ties everything into datasets, link runs, sweeps and the
//! file formats used by the `ofdm-chest` command line tool.

pub mod bench;
pub mod channel;
pub mod classical;
pub mod dft;
pub mod dlmodels;
mod error;
pub mod fxp;
pub mod grid;
pub mod linalg;
pub mod neural;
pub mod seeds;

pub use error::{Error, Result};
pub use grid::{ComplexGrid, PhyConfig};

pub use num_complex::Complex64;
