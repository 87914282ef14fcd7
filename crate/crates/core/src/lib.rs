//! Stochastic characteristics of multi-hop information propagation distance
//! along a one-dimensional vehicle chain with i.i.d. headways.
//!
//! A message starts at an origin vehicle and is relayed hop by hop to the
//! direct neighbour. Each hop either succeeds, adding the headway to the
//! propagation distance `D`, or fails and ends the process. The crate
//! provides:
//!
//! - [`headway`]: headway distributions and the functionals the formulas need
//! - [`quad`]: adaptive quadrature and the marching solver for the CDF of `D`
//! - [`analytic`]: mean, variance, bounds and cluster size under a constant
//!   transmission range with per-hop success probability
//! - [`fading`]: the same quantities under Rayleigh threshold reception
//! - [`mc`]: a Monte Carlo simulator of the hop-by-hop process used as oracle
//! - [`cli`]: the `hopdist` command-line driver

pub mod analytic;
pub mod cli;
pub mod error;
pub mod fading;
pub mod headway;
pub mod mc;
pub mod quad;

pub use error::{Error, Result};
