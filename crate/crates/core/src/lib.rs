//! Finite-difference laboratory for the damped wave equation
//! `eps u_tt + u_t + beta u - div(A grad u) = f(x, u)` on a Dirichlet box and
//! its parabolic limit `u_t + beta u - div(A grad u) = f(x, u)`.

pub mod attractor;
pub mod cutoff;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod nonlinearity;
pub mod norms;
pub mod operator;
pub mod oracle;
pub mod tails;

pub use error::{Error, Result};
pub use grid::{CoefficientField, Grid};
pub use nonlinearity::Nonlinearity;
pub use operator::{build_operator, DiscreteOperator};
