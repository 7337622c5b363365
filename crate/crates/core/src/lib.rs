//! Numerical engine for inventory-based price-impact markets with
//! exponential-utility market makers.
//!
//! * [`payoff`]: random variables over a Brownian path, quadrature and
//!   Monte-Carlo expectations, path sampling.
//! * [`maker`]: static quotes, the maker's risk-neutral measure and the
//!   investor's gains process.
//! * [`models`]: closed-form `H(q)` families and their constraint sets.
//! * [`pricing`]: replication bounds, arbitrage classification, demand
//!   schedules, indifference prices and the investor value function.
//! * [`equilibrium`]: bilateral price/quantity equilibria in segmented
//!   markets and large-position asymptotics.
//! * [`cli`]: scenario configs, CSV tables and run manifests.

pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod maker;
pub mod models;
pub mod normal;
pub mod payoff;
pub mod pricing;
pub mod roots;

pub use error::{PricerError, Result};
