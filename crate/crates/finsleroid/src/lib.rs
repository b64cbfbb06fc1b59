//! Numerical implementation of the Finsleroid–Finsler space FF^PD_g.
//!
//! The space is built over an associated Riemannian manifold (a_ij(x), b_i(x))
//! with a scalar charge g, |g| < 2.  This crate evaluates the metric function
//! K(x,y) and its full tensor family at a support element, the conformal
//! osculating map to the associated Riemannian space, the two-vector angle,
//! the angle-preserving nonlinear connection with its curvature tensors, and
//! indicatrix geometry (induced metric, geodesics, expansion coefficients).
//!
//! Everything is organised as pure functions over immutable value types, so
//! batch verification can fan out over threads without shared state.

pub mod angle;
pub mod connection;
pub mod curvature;
pub mod error;
pub mod fd;
pub mod finsler;
pub mod indicatrix;
pub mod kappa;
pub mod manifold;
pub mod sample;
pub mod tensor;

pub use error::EvalError;
pub use finsler::FinslerEval;
pub use kappa::KappaJet;
pub use manifold::{ManifoldSpec, PointFrame};
pub use tensor::{T3, T4, T5};

/// Shorthand used throughout: dense dynamic vector/matrix over f64.
pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
