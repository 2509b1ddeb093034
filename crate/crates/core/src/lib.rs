//! Optimal boundary feedback for a heated rod with a quadratic reaction term.
//!
//! The rod `z_t = z_xx + alpha z^2` on `[0, 1]` is insulated at `x = 0` and
//! actuated through the Robin condition `z_x(1) = beta (u - z(1))`. The crate
//! provides:
//!
//! * the open-loop eigenbasis ([`spectral_basis`]),
//! * the boundary LQR in that basis, solved by a completing-the-square
//!   fixed-point sweep ([`riccati_spectral`]),
//! * the closed-loop spectrum of the resulting linear feedback
//!   ([`closed_loop_spectrum`]),
//! * the cubic cost term and quadratic gain in the eigenbasis
//!   ([`albrekht_spectral`]),
//! * a ghost-point finite-difference model with polynomial feedback through
//!   cubic terms ([`finite_model`]),
//! * Crank-Nicolson simulation and basin-of-stability sweeps ([`simulator`]).

pub mod albrekht;
pub mod albrekht_spectral;
pub mod closed_loop_spectrum;
pub mod config;
pub mod error;
pub mod feedback;
pub mod finite_model;
pub mod linalg;
pub mod output;
pub mod riccati_spectral;
pub mod simulator;
pub mod spectral_basis;
pub mod symtensor;

pub use error::{Error, Result};
