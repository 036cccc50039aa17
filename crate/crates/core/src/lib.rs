//! Numerical laboratory for divergence-form elliptic and parabolic equations
//!
//! ```text
//!   −D_i(a_ij D_j u) + b_i D_i u = 0
//!   ∂_t u − D_i(a_ij D_j u) + b_i D_i u = 0
//! ```
//!
//! with a uniformly elliptic tensor `a` and a drift `b` whose divergence is
//! nonpositive in the distributional sense. The crate builds grids and the
//! geometric constructions used to propagate lower bounds ([`geometry`]),
//! coefficient fields including singular drift families ([`fields`]), the
//! Lebesgue, anisotropic and Morrey norms that control the estimates
//! ([`norms`]), a monotone finite-volume discretization ([`solver`]), and
//! turns the qualitative estimates (local boundedness, growth, oscillation
//! decay, Harnack, maximum principles, Liouville behaviour) into measurable
//! checks ([`verify`], [`hydro`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fields;
pub mod geometry;
pub mod hydro;
pub mod norms;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
