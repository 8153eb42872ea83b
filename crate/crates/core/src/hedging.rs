//! Stablecoin allocation.
//!
//! Moving a fraction `w_s` of capital into a stablecoin scales every crypto
//! weight by `(1 - w_s)`. With a zero-return, zero-variance, uncorrelated
//! stablecoin both the mean and volatility scale by `(1 - w_s)`.
//!
//! A stablecoin with its own variance or correlations goes through
//! [`augment_with_stablecoin`] and [`hedged_portfolio`] followed by
//! [`portfolio_metrics`](crate::portfolio::portfolio_metrics).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{portfolio_metrics, PortfolioSpec};
use crate::timeseries::MomentEstimates;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeSpec {
    pub stablecoin_weight: f64,
    pub stablecoin_return: f64,
    pub treat_uncorrelated: bool,
}

impl HedgeSpec {
    pub fn new(stablecoin_weight: f64) -> Result<Self> {
        Self::with_return(stablecoin_weight, 0.0)
    }

    pub fn with_return(stablecoin_weight: f64, stablecoin_return: f64) -> Result<Self> {
        check_weight(stablecoin_weight)?;
        if !stablecoin_return.is_finite() {
            return Err(Error::Scenario("stablecoin return must be finite".into()));
        }
        Ok(Self {
            stablecoin_weight,
            stablecoin_return,
            treat_uncorrelated: true,
        })
    }
}

fn check_weight(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Scenario(format!(
            "stablecoin weight must lie in [0, 1], got {w}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeResult {
    pub w_s: f64,
    pub mu_h: f64,
    pub sigma_h: f64,
    /// Crypto weights scaled by `(1 - w_s)`, followed by `w_s`.
    pub effective_weights: Vec<f64>,
}

pub fn apply_hedge(
    spec: &PortfolioSpec,
    moments: &MomentEstimates,
    hedge: HedgeSpec,
) -> Result<HedgeResult> {
    check_weight(hedge.stablecoin_weight)?;
    if !hedge.treat_uncorrelated {
        return Err(Error::InvalidInput(
            "a correlated stablecoin needs augmented moments; use augment_with_stablecoin".into(),
        ));
    }
    let base = portfolio_metrics(spec, moments)?;
    let w_s = hedge.stablecoin_weight;
    let keep = 1.0 - w_s;
    let mut effective_weights: Vec<f64> = spec.weights().iter().map(|w| keep * w).collect();
    effective_weights.push(w_s);
    Ok(HedgeResult {
        w_s,
        mu_h: keep * base.expected_return + w_s * hedge.stablecoin_return,
        sigma_h: keep * base.volatility,
        effective_weights,
    })
}

/// [`apply_hedge`] at every stablecoin weight in `grid`, in order.
pub fn hedge_sweep(
    spec: &PortfolioSpec,
    moments: &MomentEstimates,
    grid: &[f64],
    stablecoin_return: f64,
) -> Result<Vec<HedgeResult>> {
    grid.iter()
        .map(|&w| {
            let hedge = HedgeSpec::with_return(w, stablecoin_return)?;
            apply_hedge(spec, moments, hedge)
        })
        .collect()
}

/// Appends a stablecoin row and column to `moments`.
///
/// `correlations` holds the stablecoin's correlation with each existing asset.
pub fn augment_with_stablecoin(
    moments: &MomentEstimates,
    label: &str,
    stablecoin_return: f64,
    stablecoin_volatility: f64,
    correlations: &[f64],
) -> Result<MomentEstimates> {
    let n = moments.labels().len();
    if correlations.len() != n {
        return Err(Error::Alignment(format!(
            "{} stablecoin correlations for {n} assets",
            correlations.len()
        )));
    }
    if moments.index_of(label).is_some() {
        return Err(Error::Alignment(format!("`{label}` is already in the moments")));
    }
    let vol = moments.volatility();
    let cov = moments.covariance();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(cov);
    for i in 0..n {
        let c = correlations[i] * vol[i] * stablecoin_volatility;
        aug[(i, n)] = c;
        aug[(n, i)] = c;
    }
    aug[(n, n)] = stablecoin_volatility * stablecoin_volatility;
    let mean = DVector::from_iterator(
        n + 1,
        moments.mean().iter().copied().chain([stablecoin_return]),
    );
    let mut labels = moments.labels().to_vec();
    labels.push(label.to_string());
    MomentEstimates::from_covariance(labels, mean, aug)
}

/// The `n + 1` asset portfolio holding `(1 - w_s) w` in crypto and `w_s` in
/// the stablecoin.
pub fn hedged_portfolio(spec: &PortfolioSpec, label: &str, w_s: f64) -> Result<PortfolioSpec> {
    check_weight(w_s)?;
    let mut labels = spec.labels().to_vec();
    labels.push(label.to_string());
    let mut weights: Vec<f64> = spec.weights().iter().map(|w| (1.0 - w_s) * w).collect();
    weights.push(w_s);
    PortfolioSpec::new(labels, weights, spec.initial_value())
}
