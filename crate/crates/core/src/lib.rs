//! Numerical Lorentz-Finsler geometry.

pub mod busemann;
pub mod cli;
pub mod congruence;
pub mod connection;
pub mod curvature;
pub mod error;
pub mod geodesic;
pub mod jet;
pub mod legendre;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod report;
pub mod sampling;
pub mod splitting;

pub use error::{Error, Result};
