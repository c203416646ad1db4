//! Numerical construction of exact solutions of `dx/dt = t^k f(x, t)` near an
//! `n`-parametric asymptotic family `X(t; a)`.
//!
//! The pipeline measures the asymptotic exponents of the family
//! ([`exponents`]), checks the sufficient conditions for existence, builds
//! the remainder `R = J C` by successive approximations in a weighted
//! function space ([`contraction`]) and cross-checks the predicted decay
//! against a reference integrator ([`verify`]).

pub mod contraction;
pub mod exponents;
pub mod expr;
pub mod family;
pub mod grid;
pub mod linalg;
pub mod pipeline;
pub mod problem;
pub mod quadrature;
pub mod report;
pub mod verify;
