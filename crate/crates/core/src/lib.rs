//! Numerical tools for `Lu + u^p = 0` with fully nonlinear and
//! non-divergence uniformly elliptic operators.

pub mod ode;
pub mod operators;
pub mod nondegeneracy;
pub mod radial;
pub mod domain;
