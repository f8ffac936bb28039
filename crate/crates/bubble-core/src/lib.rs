//! Simulation, rare-event and inference toolkit for a second-order
//! "speculative bubble" diffusion: the price X reverts to 0 at rate a,
//! chases its own exponentially weighted past increments at rate b, and is
//! driven by Brownian noise of volatility c. The Markov pair Z = (X, Y) is a
//! degenerate planar Ornstein-Uhlenbeck process whose rotation frequency
//! omega = sqrt(ab - a^2/4) governs return times, persistence rates and the
//! pseudo-period of the price.
//!
//! Modules:
//! - [`model`]: parameters, eigenstructure, turning transform, memory kernels;
//! - [`gaussian`]: closed-form transition/stationary laws, divergence J,
//!   relaxation rate;
//! - [`simulate`]: exact / Euler / order-k memory / matched-OU paths;
//! - [`hitting`]: return-time and sector-exit Monte Carlo, survival curves,
//!   tail-rate fits;
//! - [`persistence`]: Fleming-Viot estimation of the persistence rate and
//!   quasi-stationary law;
//! - [`bridge`]: exact bridge laws, bridge sampling, small-duration
//!   asymptotics;
//! - [`certify`]: spectral certificates with finite-difference verification;
//! - [`estimate`]: volatility, likelihood and pseudo-period estimators.

pub mod bridge;
pub mod certify;
pub mod error;
pub mod estimate;
pub mod gaussian;
pub mod hitting;
pub mod model;
pub mod persistence;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{BubbleError, Result};
pub use model::{ModelParams, Regime, Slope};
pub use rng::RngPolicy;
