//! Special functions, quadrature, 1-D solvers and reproducible random streams
//! shared by the channel, error and optimizer models.

mod gamma;
mod lambert;
mod qfunc;
mod quadrature;
mod rng;
mod solve;

pub use gamma::{ln_gamma, ln_lower_incomplete_gamma, lower_incomplete_gamma};
pub use lambert::{lambert_w, LambertBranch};
pub use qfunc::{q_approx3, q_exact, Q_APPROX_A, Q_APPROX_B};
pub use quadrature::{
    integrate, integrate_breakpoints, integrate_power_singular, integrate_semi_infinite,
    QuadratureSpec,
};
pub use rng::RngStream;
pub use solve::{bisect_root, golden_section_min, GoldenMin};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },
    #[error("lambert W has no real solution for x = {0} (< -1/e)")]
    NoRealSolution(f64),
    #[error("quadrature did not reach tolerance: estimate {estimate:e}, error {error:e}")]
    Accuracy { estimate: f64, error: f64 },
    #[error("root is not bracketed on [{a}, {b}]")]
    NotBracketed { a: f64, b: f64 },
}

pub type Result<T> = std::result::Result<T, NumericsError>;
