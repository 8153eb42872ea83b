//! Single-round shock propagation through a correlation or adjacency matrix.
//!
//! The induced shock is `matrix * epsilon`, passed through a dead-zone gate
//! that zeroes components smaller than the threshold in magnitude.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{ensure_same_labels, PortfolioSpec};
use crate::timeseries::MomentEstimates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Correlation,
    Adjacency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationNetwork {
    kind: NetworkKind,
    labels: Vec<String>,
    matrix: DMatrix<f64>,
    threshold: f64,
}

impl PropagationNetwork {
    /// Correlation network; the matrix must be symmetric with unit diagonal.
    pub fn correlation(labels: Vec<String>, matrix: DMatrix<f64>, threshold: f64) -> Result<Self> {
        check_shape(&labels, &matrix)?;
        let n = labels.len();
        for i in 0..n {
            if matrix[(i, i)] != 1.0 {
                return Err(Error::InvalidInput(format!(
                    "correlation diagonal at {} is {}, not 1",
                    labels[i],
                    matrix[(i, i)]
                )));
            }
            for j in 0..n {
                let r = matrix[(i, j)];
                if !(-1.0..=1.0).contains(&r) || r != matrix[(j, i)] {
                    return Err(Error::InvalidInput(
                        "correlation must be symmetric with entries in [-1, 1]".into(),
                    ));
                }
            }
        }
        Self::build(NetworkKind::Correlation, labels, matrix, threshold)
    }

    pub fn from_moments(moments: &MomentEstimates, threshold: f64) -> Result<Self> {
        Self::correlation(moments.labels().to_vec(), moments.correlation().clone(), threshold)
    }

    /// Adjacency network; entries must be finite and nonnegative. The diagonal
    /// is used as given.
    pub fn adjacency(labels: Vec<String>, matrix: DMatrix<f64>, threshold: f64) -> Result<Self> {
        check_shape(&labels, &matrix)?;
        if matrix.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidInput(
                "adjacency entries must be finite and nonnegative".into(),
            ));
        }
        Self::build(NetworkKind::Adjacency, labels, matrix, threshold)
    }

    fn build(kind: NetworkKind, labels: Vec<String>, matrix: DMatrix<f64>, threshold: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "threshold must be a nonnegative fraction, got {threshold}"
            )));
        }
        Ok(Self {
            kind,
            labels,
            matrix,
            threshold,
        })
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(self, threshold: f64) -> Result<Self> {
        Self::build(self.kind, self.labels, self.matrix, threshold)
    }
}

fn check_shape(labels: &[String], matrix: &DMatrix<f64>) -> Result<()> {
    let n = labels.len();
    if n == 0 || matrix.shape() != (n, n) {
        return Err(Error::Alignment(format!(
            "{}x{} matrix for {n} labels",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    Ok(())
}

/// Reads a dense labeled adjacency matrix: a header row of labels (after a
/// leading corner cell) and one row per asset starting with its label.
pub fn load_adjacency(path: impl AsRef<Path>, threshold: f64) -> Result<PropagationNetwork> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let schema = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    let labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let n = labels.len();
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = idx + 2;
        if rec.len() != n + 1 {
            return Err(schema(format!("line {line} has {} cells, expected {}", rec.len(), n + 1)));
        }
        if rows >= n || rec.get(0) != Some(labels[rows].as_str()) {
            return Err(schema(format!(
                "line {line}: row label `{}` does not match header order",
                rec.get(0).unwrap_or("")
            )));
        }
        for cell in rec.iter().skip(1) {
            let v: f64 = cell.parse().map_err(|_| Error::DataRow {
                path: path.to_path_buf(),
                line,
                message: format!("cannot parse `{cell}`"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(schema(format!("{rows} rows for {n} header labels")));
    }
    PropagationNetwork::adjacency(labels, DMatrix::from_row_slice(n, n, &values), threshold)
}

/// Exogenous fractional price shocks per asset, e.g. -0.3 for a 30% crash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockVector {
    labels: Vec<String>,
    epsilon: Vec<f64>,
}

impl ShockVector {
    pub fn new(labels: Vec<String>, epsilon: Vec<f64>) -> Result<Self> {
        if labels.len() != epsilon.len() {
            return Err(Error::Alignment(format!(
                "{} labels but {} shocks",
                labels.len(),
                epsilon.len()
            )));
        }
        if let Some(e) = epsilon.iter().find(|e| !(e.is_finite() && **e >= -1.0)) {
            return Err(Error::InvalidInput(format!(
                "shock {e} is not a finite fraction >= -1"
            )));
        }
        Ok(Self { labels, epsilon })
    }

    /// `magnitude` on `asset`, zero elsewhere.
    pub fn single(labels: &[String], asset: &str, magnitude: f64) -> Result<Self> {
        let i = labels
            .iter()
            .position(|l| l == asset)
            .ok_or_else(|| Error::UnknownLabel(asset.to_string()))?;
        let mut epsilon = vec![0.0; labels.len()];
        epsilon[i] = magnitude;
        Self::new(labels.to_vec(), epsilon)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn epsilon(&self) -> &[f64] {
        &self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContagionResult {
    pub labels: Vec<String>,
    /// Induced fractional shock per asset after the threshold gate.
    pub delta: Vec<f64>,
    /// Shock before the gate.
    pub raw: Vec<f64>,
    /// True where the gate zeroed a nonzero raw shock.
    pub thresholded: Vec<bool>,
}

/// Dead-zone gate: zero when `|x| < threshold`, identity otherwise.
pub fn threshold_gate(x: f64, threshold: f64) -> f64 {
    if x.abs() < threshold {
        0.0
    } else {
        x
    }
}

pub fn propagate(network: &PropagationNetwork, shock: &ShockVector) -> Result<ContagionResult> {
    ensure_same_labels(&network.labels, &shock.labels, "network vs shock")?;
    let raw = &network.matrix * DVector::from_column_slice(&shock.epsilon);
    let raw: Vec<f64> = raw.iter().copied().collect();
    let delta: Vec<f64> = raw.iter().map(|&x| threshold_gate(x, network.threshold)).collect();
    let thresholded = raw.iter().zip(&delta).map(|(r, d)| *d == 0.0 && *r != 0.0).collect();
    Ok(ContagionResult {
        labels: network.labels.clone(),
        delta,
        raw,
        thresholded,
    })
}

/// Propagates a crash of `magnitude` (in `[-1, 0)`) on one asset.
pub fn single_asset_crash(
    network: &PropagationNetwork,
    asset: &str,
    magnitude: f64,
) -> Result<ContagionResult> {
    if !(-1.0..0.0).contains(&magnitude) {
        return Err(Error::InvalidInput(format!(
            "crash magnitude must lie in [-1, 0), got {magnitude}"
        )));
    }
    let shock = ShockVector::single(&network.labels, asset, magnitude)?;
    propagate(network, &shock)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockedValue {
    /// w' Delta
    pub change: f64,
    pub value_before: f64,
    pub value_after: f64,
}

pub fn shocked_portfolio_value(spec: &PortfolioSpec, result: &ContagionResult) -> Result<ShockedValue> {
    ensure_same_labels(spec.labels(), &result.labels, "portfolio vs contagion")?;
    let change: f64 = spec.weights().iter().zip(&result.delta).map(|(w, d)| w * d).sum();
    let v0 = spec.initial_value();
    Ok(ShockedValue {
        change,
        value_before: v0,
        value_after: v0 * (1.0 + change),
    })
}
