//! Spectral simulation of the nonlinear Schrödinger equation
//! `i u_t + Δu + λ|u|^α u = 0` on a periodic box, built around the weighted
//! space `X`, the lens (pseudo-conformal) transform and a fixed-point solver
//! for the transformed Duhamel equation, together with numerical checks of the
//! estimates that drive the contraction argument.

// `!(x > 0.0)` is used on purpose so that NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod cli;
pub mod duhamel;
pub mod error;
pub mod initial_data;
pub mod lens;
pub mod nlsf;
pub mod nonlinearity;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod verify;
pub mod weighted;

pub use error::{NlsError, Result};
pub use spectral::{Field, GridSpec, SpectralField, C64};
