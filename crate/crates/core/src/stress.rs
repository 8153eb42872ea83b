//! Volatility stress: shrink expected returns by `(1 - delta)`, inflate the
//! covariance by `(1 + delta)`, and compound the shocked daily mean over a
//! horizon.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{portfolio_metrics, PortfolioMetrics, PortfolioSpec};
use crate::timeseries::{MomentEstimates, ReturnMatrix};

/// Rolling window used for realized volatility in [`calibrate_delta`].
pub const REALIZED_VOL_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockScenario {
    delta: f64,
    horizon: u32,
}

impl ShockScenario {
    pub fn new(delta: f64, horizon: u32) -> Result<Self> {
        check_delta(delta)?;
        if horizon < 1 {
            return Err(Error::Scenario("stress horizon must be at least 1 day".into()));
        }
        Ok(Self { delta, horizon })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Scenario(format!(
            "shock factor must lie in [0, 1], got {delta}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressResult {
    pub delta: f64,
    pub horizon: u32,
    pub mu_shock: f64,
    pub sigma_shock: f64,
    pub terminal_value: f64,
    pub terminal_multiple: f64,
}

pub fn stress_test(
    spec: &PortfolioSpec,
    moments: &MomentEstimates,
    scenario: ShockScenario,
) -> Result<StressResult> {
    let base = portfolio_metrics(spec, moments)?;
    Ok(stress_from_metrics(base, spec.initial_value(), scenario))
}

/// Applies the shock to already-computed portfolio metrics.
pub fn stress_from_metrics(
    base: PortfolioMetrics,
    initial_value: f64,
    scenario: ShockScenario,
) -> StressResult {
    let delta = scenario.delta;
    let mu_shock = (1.0 - delta) * base.expected_return;
    let sigma_shock = (1.0 + delta).sqrt() * base.volatility;
    let terminal_multiple = (1.0 + mu_shock).powi(scenario.horizon as i32);
    StressResult {
        delta,
        horizon: scenario.horizon,
        mu_shock,
        sigma_shock,
        terminal_value: initial_value * terminal_multiple,
        terminal_multiple,
    }
}

/// Shocked return vector and covariance, for callers that want the
/// unfactored inputs.
pub fn shocked_inputs(moments: &MomentEstimates, delta: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_delta(delta)?;
    Ok((
        moments.mean() * (1.0 - delta),
        moments.covariance() * (1.0 + delta),
    ))
}

/// One stress result per grid point, in input order.
pub fn stress_sweep(
    spec: &PortfolioSpec,
    moments: &MomentEstimates,
    deltas: &[f64],
    horizon: u32,
) -> Result<Vec<StressResult>> {
    if deltas.is_empty() {
        return Err(Error::Scenario("stress sweep grid is empty".into()));
    }
    let scenarios = deltas
        .iter()
        .map(|&d| ShockScenario::new(d, horizon))
        .collect::<Result<Vec<_>>>()?;
    let base = portfolio_metrics(spec, moments)?;
    Ok(scenarios
        .into_iter()
        .map(|s| stress_from_metrics(base, spec.initial_value(), s))
        .collect())
}

/// `n + 1` evenly spaced shock factors from 0 to 1.
pub fn delta_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaCalibration {
    /// Largest per-asset suggestion, clamped into [0, 1].
    pub delta: f64,
    pub per_asset: Vec<(String, Option<f64>)>,
}

/// Suggests a shock factor from the tail of rolling realized volatility.
///
/// For each asset, realized volatility is the root mean square of returns
/// over a 20-day window. The suggestion is `q / median - 1`, where `q` is the
/// `(1 - percentile)` quantile of that series, clamped into [0, 1]. Assets
/// with no volatility give `None`. The result is advisory.
pub fn calibrate_delta(returns: &ReturnMatrix, percentile: f64) -> Result<DeltaCalibration> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::InvalidInput(format!(
            "tail percentile must lie in (0, 1), got {percentile}"
        )));
    }
    if returns.rows() < REALIZED_VOL_WINDOW {
        return Err(Error::InsufficientData(format!(
            "calibration needs at least {REALIZED_VOL_WINDOW} observations, got {}",
            returns.rows()
        )));
    }
    let per_asset: Vec<(String, Option<f64>)> = (0..returns.assets())
        .map(|i| {
            let s = calibrate_series(&returns.column(i), percentile);
            (returns.labels()[i].clone(), s)
        })
        .collect();
    let delta = per_asset
        .iter()
        .filter_map(|(_, d)| *d)
        .fold(0.0, f64::max);
    Ok(DeltaCalibration { delta, per_asset })
}

fn calibrate_series(returns: &[f64], percentile: f64) -> Option<f64> {
    let mut vols: Vec<f64> = returns
        .windows(REALIZED_VOL_WINDOW)
        .map(|w| (w.iter().map(|r| r * r).sum::<f64>() / w.len() as f64).sqrt())
        .collect();
    vols.sort_by(f64::total_cmp);
    let median = nearest_rank(&vols, 0.5);
    if !(median > 0.0) {
        return None;
    }
    let tail = nearest_rank(&vols, 1.0 - percentile);
    Some((tail / median - 1.0).clamp(0.0, 1.0))
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}
