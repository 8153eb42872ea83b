//! Portfolio weights and mean-variance metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::MomentEstimates;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Portfolio variance in `(-VARIANCE_NOISE, 0)` is rounding and clamps to zero.
const VARIANCE_NOISE: f64 = 1e-12;

/// Diagonal jitter relative to the trace for semidefinite factorization.
const CHOLESKY_JITTER: f64 = 1e-12;

/// Capital fractions per asset plus the initial portfolio value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    labels: Vec<String>,
    weights: Vec<f64>,
    initial_value: f64,
}

impl PortfolioSpec {
    /// Weights must be nonnegative and sum to one.
    pub fn new(labels: Vec<String>, weights: Vec<f64>, initial_value: f64) -> Result<Self> {
        if labels.len() != weights.len() || labels.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} labels but {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if let Some((l, w)) = labels
            .iter()
            .zip(&weights)
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "weight for {l} must be a nonnegative fraction, got {w}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        if !(initial_value.is_finite() && initial_value > 0.0) {
            return Err(Error::InvalidInput(format!(
                "initial value must be positive, got {initial_value}"
            )));
        }
        Ok(Self {
            labels,
            weights,
            initial_value,
        })
    }

    pub fn equal_weight(labels: Vec<String>, initial_value: f64) -> Result<Self> {
        let w = 1.0 / labels.len().max(1) as f64;
        let weights = vec![w; labels.len()];
        Self::new(labels, weights, initial_value)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn weight_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }
}

pub(crate) fn ensure_same_labels(left: &[String], right: &[String], what: &str) -> Result<()> {
    if left != right {
        return Err(Error::Alignment(format!(
            "{what}: labels {left:?} do not match {right:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioMetrics {
    /// Daily expected return, w'r.
    pub expected_return: f64,
    /// Daily volatility, sqrt(w' Sigma w).
    pub volatility: f64,
}

pub fn portfolio_metrics(spec: &PortfolioSpec, moments: &MomentEstimates) -> Result<PortfolioMetrics> {
    ensure_same_labels(spec.labels(), moments.labels(), "portfolio vs moments")?;
    metrics_from_parts(&spec.weight_vector(), moments.mean(), moments.covariance())
}

/// Mean-variance metrics for raw weight, mean and covariance arrays.
pub fn metrics_from_parts(
    weights: &DVector<f64>,
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
) -> Result<PortfolioMetrics> {
    let n = weights.len();
    if mean.len() != n || covariance.shape() != (n, n) {
        return Err(Error::Alignment(format!(
            "{n} weights against a length-{} mean and {}x{} covariance",
            mean.len(),
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let expected_return = weights.dot(mean);
    let variance = (covariance * weights).dot(weights);
    let variance = if (-VARIANCE_NOISE..0.0).contains(&variance) {
        0.0
    } else {
        variance
    };
    if !(variance >= 0.0) {
        return Err(Error::Numerical(format!(
            "portfolio variance {variance} is negative; covariance is not PSD"
        )));
    }
    Ok(PortfolioMetrics {
        expected_return,
        volatility: variance.sqrt(),
    })
}

/// Lower-triangular `L` with `L L' = cov`.
///
/// Semidefinite inputs are retried once with `1e-12 * trace` added to the
/// diagonal.
pub fn cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::Factorization(format!(
            "matrix is {}x{}, not square",
            n,
            cov.ncols()
        )));
    }
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::Factorization("matrix has non-finite entries".into()));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (cov[(i, j)], cov[(j, i)]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1e-300) {
                return Err(Error::Factorization(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if let Some(l) = factor(cov) {
        return Ok(l);
    }
    let trace = cov.trace();
    let jitter = CHOLESKY_JITTER * trace.max(0.0);
    if jitter > 0.0 {
        let mut bumped = cov.clone();
        for i in 0..n {
            bumped[(i, i)] += jitter;
        }
        if let Some(l) = factor(&bumped) {
            return Ok(l);
        }
    }
    Err(Error::Factorization(
        "matrix is indefinite even after diagonal jitter".into(),
    ))
}

fn factor(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}
