//! Risk analytics for crypto portfolios: price ingestion and moment
//! estimation, volatility stress, stablecoin hedging, one-round contagion and
//! Monte Carlo simulation, plus a TOML-driven batch runner.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contagion;
pub mod error;
pub mod hedging;
pub mod montecarlo;
pub mod portfolio;
pub mod report;
pub mod scenario;
pub mod stress;
pub mod timeseries;

pub use error::{Error, ErrorCategory, Result};
pub use portfolio::{portfolio_metrics, PortfolioMetrics, PortfolioSpec};
pub use scenario::{execute, run_scenario, ScenarioConfig};
pub use timeseries::{estimate_moments, EstimationMethod, MomentEstimates, ReturnMatrix};
