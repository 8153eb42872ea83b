//! Geometric Brownian motion paths and terminal-distribution risk metrics.
//!
//! Each step multiplies the price by
//! `exp((mu - sigma^2 / 2) dt + sigma sqrt(dt) Z)`. In correlated mode the
//! stochastic part of the log-increment vector is `L X` with `L L' = Sigma dt`
//! and `X` standard normal, so the independent case is the diagonal special
//! case.
//!
//! Every path draws from its own ChaCha stream keyed by `(seed, path index)`,
//! which makes the ensemble independent of thread count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::portfolio::{cholesky, ensure_same_labels, PortfolioSpec};
use crate::timeseries::MomentEstimates;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum Dependence {
    Independent,
    /// Daily covariance of log-returns; its diagonal must equal `volatility^2`.
    Correlated(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub labels: Vec<String>,
    pub num_paths: usize,
    pub horizon: usize,
    pub dt: f64,
    pub drift: Vec<f64>,
    pub volatility: Vec<f64>,
    pub initial_prices: Vec<f64>,
    pub dependence: Dependence,
    pub seed: u64,
    pub alpha: f64,
}

impl SimulationConfig {
    /// Independent single-asset configuration with `dt = 1` and `alpha = 0.05`.
    pub fn single_asset(
        label: impl Into<String>,
        drift: f64,
        volatility: f64,
        initial_price: f64,
        num_paths: usize,
        horizon: usize,
        seed: u64,
    ) -> Self {
        Self {
            labels: vec![label.into()],
            num_paths,
            horizon,
            dt: 1.0,
            drift: vec![drift],
            volatility: vec![volatility],
            initial_prices: vec![initial_price],
            dependence: Dependence::Independent,
            seed,
            alpha: DEFAULT_ALPHA,
        }
    }

    /// Drift and volatility taken from estimated moments.
    pub fn from_moments(
        moments: &MomentEstimates,
        initial_prices: Vec<f64>,
        correlated: bool,
        num_paths: usize,
        horizon: usize,
        seed: u64,
    ) -> Self {
        Self {
            labels: moments.labels().to_vec(),
            num_paths,
            horizon,
            dt: 1.0,
            drift: moments.mean().iter().copied().collect(),
            volatility: moments.volatility().iter().copied().collect(),
            initial_prices,
            dependence: if correlated {
                Dependence::Correlated(moments.covariance().clone())
            } else {
                Dependence::Independent
            },
            seed,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if n == 0 {
            return bad("simulation needs at least one asset".into());
        }
        if self.drift.len() != n || self.volatility.len() != n || self.initial_prices.len() != n {
            return bad(format!(
                "drift, volatility and initial prices must each have {n} entries"
            ));
        }
        if self.num_paths < 1 || self.horizon < 1 {
            return bad("num_paths and horizon must be at least 1".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.drift.iter().any(|m| !m.is_finite()) {
            return bad("drift must be finite".into());
        }
        if self.volatility.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("volatility must be finite and >= 0".into());
        }
        if self.initial_prices.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("initial prices must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let Dependence::Correlated(cov) = &self.dependence {
            if cov.shape() != (n, n) {
                return bad(format!("covariance must be {n}x{n}"));
            }
            for i in 0..n {
                let var = self.volatility[i] * self.volatility[i];
                if (cov[(i, i)] - var).abs() > 1e-9 * var.max(1e-300) && (cov[(i, i)] - var).abs() > 1e-18 {
                    return bad(format!(
                        "covariance diagonal {} does not match volatility^2 {var} for {}",
                        cov[(i, i)],
                        self.labels[i]
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One exact GBM step with a given standard normal draw.
pub fn gbm_step(price: f64, drift: f64, volatility: f64, dt: f64, z: f64) -> f64 {
    price * ((drift - 0.5 * volatility * volatility) * dt + volatility * dt.sqrt() * z).exp()
}

/// Simulated prices, laid out path-major then step then asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    labels: Vec<String>,
    num_paths: usize,
    horizon: usize,
    prices: Vec<f64>,
}

impl PathEnsemble {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of price columns per path, `horizon + 1`.
    pub fn steps(&self) -> usize {
        self.horizon + 1
    }

    pub fn assets(&self) -> usize {
        self.labels.len()
    }

    pub fn price(&self, path: usize, step: usize, asset: usize) -> f64 {
        self.prices[(path * self.steps() + step) * self.assets() + asset]
    }

    pub fn asset_path(&self, path: usize, asset: usize) -> Vec<f64> {
        (0..self.steps()).map(|t| self.price(path, t, asset)).collect()
    }

    pub fn terminal_prices(&self, asset: usize) -> Vec<f64> {
        (0..self.num_paths)
            .map(|m| self.price(m, self.horizon, asset))
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.prices
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

pub fn simulate_paths(config: &SimulationConfig) -> Result<PathEnsemble> {
    config.validate()?;
    let n = config.labels.len();
    let steps = config.horizon + 1;
    let dt = config.dt;

    let factor = match &config.dependence {
        Dependence::Independent => None,
        Dependence::Correlated(cov) => Some(cholesky(&(cov * dt))?),
    };
    let log_drift: Vec<f64> = config
        .drift
        .iter()
        .zip(&config.volatility)
        .map(|(m, s)| (m - 0.5 * s * s) * dt)
        .collect();

    let mut prices = vec![0.0; config.num_paths * steps * n];
    prices
        .par_chunks_mut(steps * n)
        .enumerate()
        .try_for_each(|(m, path)| -> Result<()> {
            let mut rng = path_rng(config.seed, m);
            path[..n].copy_from_slice(&config.initial_prices);
            let mut z = DVector::zeros(n);
            for t in 1..steps {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                let (prev, next) = path.split_at_mut(t * n);
                let prev = &prev[(t - 1) * n..];
                match &factor {
                    None => {
                        for i in 0..n {
                            next[i] = gbm_step(prev[i], config.drift[i], config.volatility[i], dt, z[i]);
                        }
                    }
                    Some(l) => {
                        let shock = l * &z;
                        for i in 0..n {
                            next[i] = prev[i] * (log_drift[i] + shock[i]).exp();
                        }
                    }
                }
                if let Some(i) = (0..n).find(|&i| !(next[i].is_finite() && next[i] > 0.0)) {
                    return Err(Error::Numerical(format!(
                        "path {m}, step {t}, asset {}: price {} is not finite and positive",
                        config.labels[i], next[i]
                    )));
                }
            }
            Ok(())
        })?;

    Ok(PathEnsemble {
        labels: config.labels.clone(),
        num_paths: config.num_paths,
        horizon: config.horizon,
        prices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valuation {
    /// `V_0 * sum_i w_i S_{i,t} / S_{i,0}`: weights are capital fractions at t = 0.
    #[default]
    Relative,
    /// `sum_i w_i S_{i,t}` on raw prices.
    RawPrice,
}

/// Portfolio value per path and step.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioPaths {
    num_paths: usize,
    steps: usize,
    values: Vec<f64>,
}

impl PortfolioPaths {
    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn value(&self, path: usize, step: usize) -> f64 {
        self.values[path * self.steps + step]
    }

    pub fn path(&self, path: usize) -> &[f64] {
        &self.values[path * self.steps..(path + 1) * self.steps]
    }

    pub fn terminal_values(&self) -> Vec<f64> {
        (0..self.num_paths)
            .map(|m| self.value(m, self.steps - 1))
            .collect()
    }
}

pub fn portfolio_paths(
    ensemble: &PathEnsemble,
    spec: &PortfolioSpec,
    valuation: Valuation,
) -> Result<PortfolioPaths> {
    ensure_same_labels(spec.labels(), ensemble.labels(), "portfolio vs simulation")?;
    let n = ensemble.assets();
    let steps = ensemble.steps();
    let w = spec.weights();
    let v0 = spec.initial_value();
    let values = ensemble
        .prices
        .par_chunks(steps * n)
        .flat_map_iter(|path| {
            let base = &path[..n];
            path.chunks(n).map(move |row| match valuation {
                Valuation::Relative => {
                    v0 * (0..n).map(|i| w[i] * row[i] / base[i]).sum::<f64>()
                }
                Valuation::RawPrice => (0..n).map(|i| w[i] * row[i]).sum(),
            })
        })
        .collect();
    Ok(PortfolioPaths {
        num_paths: ensemble.num_paths,
        steps,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Equal-width bins spanning the sample range; the maximum lands in the
    /// last bin.
    pub fn build(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 || values.is_empty() {
            return Err(Error::InvalidInput("histogram needs bins and values".into()));
        }
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if lo == hi {
            let half = (lo.abs() * 1e-6).max(1e-12);
            lo -= half;
            hi += half;
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins)
            .map(|k| if k == bins { hi } else { lo + width * k as f64 })
            .collect();
        let mut counts = vec![0u64; bins];
        for v in values {
            let k = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub samples: usize,
    pub initial_value: f64,
    pub alpha: f64,
    pub expected_terminal: f64,
    pub median_terminal: f64,
    /// Lower alpha-quantile of terminal value: the k-th smallest, k = ceil(alpha M).
    pub var_alpha: f64,
    /// Mean of the k smallest terminal values.
    pub es_alpha: f64,
    /// Fraction of paths with V_T < V_0.
    pub loss_probability: f64,
    pub terminal_quantiles: Vec<QuantilePoint>,
    pub histogram: Histogram,
}

/// Order statistic `ceil(level * M)` (1-based) of a sorted sample.
pub fn lower_quantile(sorted: &[f64], level: f64) -> f64 {
    let k = ((level * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Risk metrics with the default quantile levels (2.5%, 50%, 97.5%) and 50
/// histogram bins.
pub fn risk_metrics(values: &[f64], initial_value: f64, alpha: f64) -> Result<RiskReport> {
    risk_metrics_with(values, initial_value, alpha, &[0.025, 0.5, 0.975], DEFAULT_HISTOGRAM_BINS)
}

pub fn risk_metrics_with(
    values: &[f64],
    initial_value: f64,
    alpha: f64,
    quantile_levels: &[f64],
    bins: usize,
) -> Result<RiskReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if let Some(q) = quantile_levels.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        return Err(Error::InvalidInput(format!("quantile level {q} is outside (0, 1]")));
    }
    let m = values.len();
    let needed = (1.0 / alpha).ceil() as usize;
    if m < needed {
        return Err(Error::Estimation(format!(
            "{m} terminal values is fewer than ceil(1/alpha) = {needed}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite terminal value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((alpha * m as f64).ceil() as usize).clamp(1, m);
    let var_alpha = sorted[k - 1];
    let es_alpha = sorted[..k].iter().sum::<f64>() / k as f64;
    let expected_terminal = values.iter().sum::<f64>() / m as f64;
    let losses = values.iter().filter(|v| **v < initial_value).count();
    Ok(RiskReport {
        samples: m,
        initial_value,
        alpha,
        expected_terminal,
        median_terminal: lower_quantile(&sorted, 0.5),
        var_alpha,
        es_alpha,
        loss_probability: losses as f64 / m as f64,
        terminal_quantiles: quantile_levels
            .iter()
            .map(|&level| QuantilePoint {
                level,
                value: lower_quantile(&sorted, level),
            })
            .collect(),
        histogram: Histogram::build(values, bins)?,
    })
}

/// Closed-form lognormal terminal distribution for one GBM asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalOracle {
    pub mean: f64,
    pub quantile: f64,
    pub loss_probability: f64,
}

pub fn analytic_oracle(mu: f64, sigma: f64, s0: f64, horizon: f64, alpha: f64) -> Result<LognormalOracle> {
    if !(sigma >= 0.0) || !(horizon >= 1.0) || !(s0 > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(
            "oracle needs sigma >= 0, horizon >= 1, s0 > 0, 0 < alpha < 1".into(),
        ));
    }
    let log_drift = (mu - 0.5 * sigma * sigma) * horizon;
    let mean = s0 * (mu * horizon).exp();
    if sigma == 0.0 {
        return Ok(LognormalOracle {
            mean,
            quantile: s0 * log_drift.exp(),
            loss_probability: if log_drift < 0.0 { 1.0 } else { 0.0 },
        });
    }
    let normal = Normal::standard();
    let scale = sigma * horizon.sqrt();
    Ok(LognormalOracle {
        mean,
        quantile: s0 * (log_drift + scale * normal.inverse_cdf(alpha)).exp(),
        loss_probability: normal.cdf(-log_drift / scale),
    })
}
