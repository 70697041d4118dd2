//! Stationary moment analytics for the two-species system
//!
//! ```text
//!   A --F--> A+1        B --R(A)--> B+Q
//!   A --γ_A·A--> A-1    B --γ_B·B--> B-1
//! ```
//!
//! where `A` is spontaneously produced (and therefore Poisson at stationarity),
//! `R` is an arbitrary nonnegative rate and `Q` is a positive integer burst size.
//!
//! The crate computes the mean of `B`, a hard lower bound on `var(B)`, the full
//! truncated Charlier-series variance, the exact covariance and a correlation
//! bound, plus a linear-noise baseline and an exact Gillespie simulator used as
//! an oracle. It is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod burst;
pub mod charlier;
mod error;
pub mod lna;
pub mod numerics;
pub mod rate;
pub mod ssa;

pub use analytics::{MomentOptions, MomentReport, SeriesVariance, SystemParams};
pub use burst::{BurstDistribution, BurstKind};
pub use charlier::{CharlierExpansion, Route};
pub use error::{Error, Result};
pub use lna::LnaSystem;
pub use numerics::{Growth, PoissonMean};
pub use rate::RateFunction;
pub use ssa::{EnsembleStats, SsaConfig, TrajectoryState};
