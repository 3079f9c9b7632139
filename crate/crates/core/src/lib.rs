//! Robust approximations of individual chance-constrained programs whose
//! random constraint is affine in the decision and polynomial in the
//! perturbation.
//!
//! The chance constraint `P{h(x, ξ) >= 0} >= 1 - ε` is replaced by the robust
//! constraint `h(x, ξ) >= 0` on an ellipsoid `U`, which is then enforced with
//! Moment-SOS semidefinite relaxations. The size of `U` is chosen by an
//! order-statistic quantile bound refined with bisection on Monte Carlo
//! violation estimates.

pub mod certkit;
pub mod conicore;
pub mod error;
pub mod momentkit;
pub mod polycore;
pub mod robustsolve;
pub mod uncertainkit;

pub use error::{Error, Result};
