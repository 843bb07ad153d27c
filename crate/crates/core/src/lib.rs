//! Omega scale functions of spectrally negative Lévy processes and the
//! optimal dividend barrier under a level-dependent bankruptcy rate.
//!
//! The pipeline runs bottom-up:
//!
//! * [`levy`]: the process (drift, Gaussian part, hyperexponential jumps),
//!   its Laplace exponent `ψ` and the roots of `ψ(s) = r`.
//! * [`scale`]: the classical scale functions `W_r` and `Z_r(·; Φ(s))` as
//!   exponential sums.
//! * [`omega`]: piecewise bankruptcy rate functions `ω`.
//! * [`volterra`]: the Omega scale function `ℋ` solved on a grid from its
//!   Volterra equation, by forward marching or Picard iteration.
//! * [`control`]: the optimal barrier `b* = argmin ℋ'`, barrier value
//!   functions and generator residuals.
//! * [`mc`]: a Monte Carlo estimator of barrier values, independent of the
//!   analytic path.
//! * [`cli`]: configuration, presets and CSV emission for the `omegalab`
//!   binary.

pub mod cli;
pub mod control;
pub mod error;
pub mod levy;
pub mod mc;
pub mod omega;
pub mod quad;
pub mod scale;
pub mod volterra;

pub use error::{OmegaError, Result};
pub use levy::{JumpComponent, LevyModel, RootSet};
pub use omega::{BankruptcyRate, Piece};
pub use scale::ScaleBasis;
pub use control::{find_barrier, optimal_barrier, BarrierSolution};
pub use volterra::{solve_h, Method, OmegaScale, OmegaScaleTable, SolverConfig};
pub use mc::{simulate_value, simulate_value_pair, Estimator, McConfig, McEstimate};
