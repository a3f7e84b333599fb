//! Numerical conformal geometry on analytic model spaces.
//!
//! The crate evaluates curvature, conformally weighted tensors, and tractor
//! operators at sample points of explicit metrics, using truncated
//! multivariate Taylor arithmetic so that every covariant derivative is exact
//! up to the chosen jet order. On top of the pointwise calculus it checks the
//! structural identities of the theory: conformal transformation laws,
//! tractor connection invariance, hypersurface decompositions, and the
//! boundary calculus of the scale tractor.
//!
//! Module map:
//! - [`jets`]: dense truncated Taylor arithmetic, the numerical substrate.
//! - [`riemann`]: metric charts, Levi-Civita connection, curvature suite.
//! - [`conformal`]: weighted fields and conformal rescaling laws.
//! - [`tractor`]: standard tractor bundle, Thomas operator, GJMS-type powers.
//! - [`hypersurface`]: embedded hypersurfaces and the tractor Gauss formula.
//! - [`boundary`]: scale-tractor boundary calculus and asymptotic extension.
//! - [`adjoint`]: adjoint tractors, conformal Killing fields, Lie derivatives.
//! - [`models`]: catalog of analytic geometries with known invariants.
//! - [`expr`]: tiny expression language for user-supplied metrics.

pub mod adjoint;
pub mod boundary;
pub mod conformal;
pub mod error;
pub mod expr;
pub mod hypersurface;
pub mod jets;
pub mod models;
pub mod par;
pub mod riemann;
pub mod tol;
pub mod tractor;
pub mod util;

pub use error::{Error, Result};

/// Default jet truncation order, overridable via `TRACTOR_DEFAULT_ORDER`.
pub fn default_order() -> usize {
    std::env::var("TRACTOR_DEFAULT_ORDER")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(6)
}
