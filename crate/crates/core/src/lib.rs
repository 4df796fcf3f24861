//! Numerical lab for the nonlinear Schrödinger equation with modulated
//! dispersion on the torus,
//!
//! ```text
//! i ∂_t u = Δu · dw/dt + |u|^{2k} u,
//! ```
//!
//! where `w` is a rough path. The solver works in the interaction variable
//! `φ = U^{w(t)} u(t)` and treats the nonlinearity as a Young integral driven
//! by the oscillatory integrals of `w`.

pub mod cli;
pub mod error;
pub mod io;
pub mod paths;
pub mod phi;
pub mod resonance;
pub mod spectral;
pub mod solver;
pub mod young;

pub use error::{Error, Result};
