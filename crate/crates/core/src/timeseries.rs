//! Price ingestion and moment estimation.
//!
//! The pipeline runs `load_prices` per asset file, then `align_and_fill` onto a
//! shared daily calendar, then `log_returns`, and finally one of the
//! estimators (`estimate_moments`, `rolling_correlations`, `descriptive_stats`).
//!
//! CSV files need a header row. The date column is the one named `Date`, or
//! else the only column whose every value parses as an ISO-8601 date. The
//! close column is the one named `Close`, or else the first fully numeric
//! column.

use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RiskMetrics decay used when the EWMA method is requested without a value.
pub const DEFAULT_EWMA_LAMBDA: f64 = 0.94;

/// Negative eigenvalues below `-PSD_REPAIR_TOLERANCE * trace` trigger repair.
const PSD_REPAIR_TOLERANCE: f64 = 1e-10;

/// An asset is degenerate when its volatility is below this fraction of its
/// largest absolute return in the window.
const ZERO_VARIANCE_RELATIVE: f64 = 1e-9;

/// Inclusive calendar range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidInput(format!(
                "date range start {start} is after end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Dated closes for one asset, sorted ascending with unique dates.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetPrices {
    pub label: String,
    pub rows: Vec<(NaiveDate, f64)>,
}

impl AssetPrices {
    /// Validates ordering and positivity of pre-built rows.
    pub fn new(label: impl Into<String>, mut rows: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let label = label.into();
        rows.sort_by_key(|(d, _)| *d);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidInput(format!(
                    "{label}: duplicate date {}",
                    pair[0].0
                )));
            }
        }
        if let Some((d, p)) = rows.iter().find(|(_, p)| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "{label}: non-positive price {p} on {d}"
            )));
        }
        Ok(Self { label, rows })
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.rows.first().map(|(d, _)| *d)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.rows.last().map(|(d, _)| *d)
    }
}

/// Reads one asset's closes from a CSV file.
pub fn load_prices(
    path: impl AsRef<Path>,
    label: impl Into<String>,
    range: Option<DateRange>,
) -> Result<AssetPrices> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_prices(file, path, label, range)
}

/// Same as [`load_prices`] but from any reader; `source` is only used in errors.
pub fn read_prices<R: Read>(
    reader: R,
    source: impl AsRef<Path>,
    label: impl Into<String>,
    range: Option<DateRange>,
) -> Result<AssetPrices> {
    let path = source.as_ref().to_path_buf();
    let csv_err = |source| Error::Csv {
        path: path.clone(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;

    let schema = |message: String| Error::Schema {
        path: path.clone(),
        message,
    };
    if records.is_empty() {
        return Err(schema("file has a header but no data rows".into()));
    }

    let date_col = detect_date_column(&headers, &records).map_err(schema)?;
    let close_col = detect_close_column(&headers, &records, date_col).map_err(schema)?;

    let mut rows = Vec::with_capacity(records.len());
    for (idx, rec) in records.iter().enumerate() {
        // header is line 1
        let line = idx + 2;
        let row_err = |message: String| Error::DataRow {
            path: path.clone(),
            line,
            message,
        };
        let date_raw = rec.get(date_col).unwrap_or("");
        let date = parse_date(date_raw)
            .ok_or_else(|| row_err(format!("cannot parse date `{date_raw}`")))?;
        let close_raw = rec.get(close_col).unwrap_or("");
        let close: f64 = close_raw
            .parse()
            .map_err(|_| row_err(format!("cannot parse close `{close_raw}`")))?;
        if !close.is_finite() || close <= 0.0 {
            return Err(row_err(format!("close must be positive, got {close_raw}")));
        }
        if range.is_none_or(|r| r.contains(date)) {
            rows.push((date, close, line));
        }
    }

    if rows.is_empty() {
        let (start, end) = range
            .map(|r| (r.start.to_string(), r.end.to_string()))
            .unwrap_or_default();
        return Err(Error::Range { path, start, end });
    }

    rows.sort_by_key(|(d, _, _)| *d);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DataRow {
                path: path.clone(),
                line: pair[1].2.max(pair[0].2),
                message: format!("duplicate date {}", pair[0].0),
            });
        }
    }

    Ok(AssetPrices {
        label: label.into(),
        rows: rows.into_iter().map(|(d, p, _)| (d, p)).collect(),
    })
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn detect_date_column(
    headers: &[String],
    records: &[csv::StringRecord],
) -> std::result::Result<usize, String> {
    let named: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.eq_ignore_ascii_case("date"))
        .map(|(i, _)| i)
        .collect();
    match named.len() {
        1 => return Ok(named[0]),
        n if n > 1 => return Err("more than one `Date` column".into()),
        _ => {}
    }
    let candidates: Vec<usize> = (0..headers.len())
        .filter(|&c| {
            records
                .iter()
                .all(|r| r.get(c).and_then(parse_date).is_some())
        })
        .collect();
    match candidates.as_slice() {
        [only] => Ok(*only),
        [] => Err("no `Date` column and no column of ISO-8601 dates".into()),
        _ => Err(format!(
            "ambiguous date column: {} columns parse as dates",
            candidates.len()
        )),
    }
}

fn detect_close_column(
    headers: &[String],
    records: &[csv::StringRecord],
    date_col: usize,
) -> std::result::Result<usize, String> {
    let named: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.eq_ignore_ascii_case("close"))
        .map(|(i, _)| i)
        .collect();
    match named.len() {
        1 => return Ok(named[0]),
        n if n > 1 => return Err("more than one `Close` column".into()),
        _ => {}
    }
    (0..headers.len())
        .filter(|&c| c != date_col)
        .find(|&c| {
            records
                .iter()
                .all(|r| r.get(c).is_some_and(|v| v.parse::<f64>().is_ok()))
        })
        .ok_or_else(|| "no `Close` column and no numeric column".to_string())
}

/// Close prices on a shared daily calendar with no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    labels: Vec<String>,
    dates: Vec<NaiveDate>,
    /// T x n
    prices: DMatrix<f64>,
}

impl PriceSeries {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let i = self.labels.iter().position(|l| l == label)?;
        Some(self.prices.column(i).iter().copied().collect())
    }

    /// Last row of prices, in label order.
    pub fn last_prices(&self) -> Vec<f64> {
        let t = self.prices.nrows() - 1;
        self.prices.row(t).iter().copied().collect()
    }

    pub fn to_asset_prices(&self) -> Vec<AssetPrices> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, label)| AssetPrices {
                label: label.clone(),
                rows: self
                    .dates
                    .iter()
                    .zip(self.prices.column(i).iter())
                    .map(|(d, p)| (*d, *p))
                    .collect(),
            })
            .collect()
    }
}

/// Puts every asset on one daily calendar, filling gaps with the previous close.
///
/// The axis runs from the latest first observation to the latest last
/// observation; nothing is back-filled.
pub fn align_and_fill(series: &[AssetPrices]) -> Result<PriceSeries> {
    if series.is_empty() {
        return Err(Error::Alignment("no series given".into()));
    }
    let mut start = NaiveDate::MIN;
    let mut end = NaiveDate::MIN;
    let mut earliest_end = NaiveDate::MAX;
    for s in series {
        let (Some(first), Some(last)) = (s.first_date(), s.last_date()) else {
            return Err(Error::Alignment(format!("series `{}` is empty", s.label)));
        };
        start = start.max(first);
        end = end.max(last);
        earliest_end = earliest_end.min(last);
    }
    if earliest_end < start {
        return Err(Error::Alignment(format!(
            "spans do not overlap: latest start {start} is after earliest end {earliest_end}"
        )));
    }
    let mut labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Alignment("duplicate asset labels".into()));
    }

    let days = (end - start).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = (0..days)
        .map(|k| start + Duration::days(k as i64))
        .collect();
    let mut prices = DMatrix::zeros(days, series.len());
    for (col, s) in series.iter().enumerate() {
        let mut cursor = 0;
        let mut last = None;
        for (row, date) in dates.iter().enumerate() {
            while cursor < s.rows.len() && s.rows[cursor].0 <= *date {
                last = Some(s.rows[cursor].1);
                cursor += 1;
            }
            // start >= first date of every series, so `last` is always set
            prices[(row, col)] = last.expect("axis starts after every first observation");
        }
    }
    Ok(PriceSeries {
        labels: series.iter().map(|s| s.label.clone()).collect(),
        dates,
        prices,
    })
}

/// Daily log-returns; row t holds ln(P_{t+1} / P_t) and is dated t+1.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    labels: Vec<String>,
    dates: Vec<NaiveDate>,
    returns: DMatrix<f64>,
}

impl ReturnMatrix {
    /// Builds a matrix from raw returns (rows are days, columns assets).
    pub fn new(labels: Vec<String>, dates: Vec<NaiveDate>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.ncols() != labels.len() || returns.nrows() != dates.len() {
            return Err(Error::InvalidInput(format!(
                "return matrix is {}x{} but got {} dates and {} labels",
                returns.nrows(),
                returns.ncols(),
                dates.len(),
                labels.len()
            )));
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("non-finite return".into()));
        }
        Ok(Self {
            labels,
            dates,
            returns,
        })
    }

    /// Convenience constructor for undated data; dates count up from 2000-01-01.
    pub fn from_columns(labels: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidInput("columns differ in length".into()));
        }
        let base = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..rows).map(|k| base + Duration::days(k as i64)).collect();
        let returns = DMatrix::from_fn(rows, columns.len(), |r, c| columns[c][r]);
        Self::new(labels, dates, returns)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn rows(&self) -> usize {
        self.returns.nrows()
    }

    pub fn assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.returns.column(i).iter().copied().collect()
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> ReturnMatrix {
        ReturnMatrix {
            labels: self.labels.clone(),
            dates: self.dates[start..end].to_vec(),
            returns: self.returns.rows(start, end - start).into_owned(),
        }
    }
}

pub fn log_returns(prices: &PriceSeries) -> Result<ReturnMatrix> {
    let t = prices.len();
    if t < 2 {
        return Err(Error::InsufficientData(format!(
            "log-returns need at least 2 price rows, got {t}"
        )));
    }
    let p = &prices.prices;
    let returns = DMatrix::from_fn(t - 1, p.ncols(), |r, c| (p[(r + 1, c)] / p[(r, c)]).ln());
    Ok(ReturnMatrix {
        labels: prices.labels.clone(),
        dates: prices.dates[1..].to_vec(),
        returns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EstimationMethod {
    /// Equal weights, unbiased (w - 1) divisor.
    #[default]
    Flat,
    /// Exponential weighting with decay `lambda`.
    Ewma { lambda: f64 },
}

impl EstimationMethod {
    pub fn ewma() -> Self {
        EstimationMethod::Ewma {
            lambda: DEFAULT_EWMA_LAMBDA,
        }
    }
}

/// Expected returns, covariance and correlation for a set of assets.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    labels: Vec<String>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    correlation: DMatrix<f64>,
    volatility: DVector<f64>,
    window: usize,
    method: EstimationMethod,
    zero_variance: Vec<String>,
    repaired: bool,
}

impl MomentEstimates {
    /// Builds estimates from a mean vector and covariance matrix.
    ///
    /// The covariance is symmetrised and, if materially indefinite, repaired.
    pub fn from_covariance(
        labels: Vec<String>,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        if mean.len() != n || covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "moments for {n} labels need a length-{n} mean and {n}x{n} covariance"
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite moment".into()));
        }
        let scale = vec![0.0; n];
        Ok(finish(
            labels,
            mean,
            covariance,
            &scale,
            0,
            EstimationMethod::Flat,
        ))
    }

    /// Builds estimates from per-asset volatilities and a correlation matrix.
    pub fn from_correlation(
        labels: Vec<String>,
        mean: DVector<f64>,
        volatility: DVector<f64>,
        correlation: DMatrix<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        if volatility.len() != n || correlation.nrows() != n || correlation.ncols() != n {
            return Err(Error::InvalidInput(
                "volatility/correlation dimensions do not match labels".into(),
            ));
        }
        if volatility.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput("volatility must be >= 0".into()));
        }
        for i in 0..n {
            if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput("correlation diagonal must be 1".into()));
            }
            for j in 0..n {
                let r = correlation[(i, j)];
                if !(-1.0..=1.0).contains(&r) || (r - correlation[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(
                        "correlation must be symmetric with entries in [-1, 1]".into(),
                    ));
                }
            }
        }
        let cov = DMatrix::from_fn(n, n, |i, j| {
            correlation[(i, j)] * volatility[i] * volatility[j]
        });
        Self::from_covariance(labels, mean, cov)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    pub fn volatility(&self) -> &DVector<f64> {
        &self.volatility
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn method(&self) -> EstimationMethod {
        self.method
    }

    /// Assets whose variance was treated as zero; their correlations are 0.
    pub fn zero_variance_assets(&self) -> &[String] {
        &self.zero_variance
    }

    /// True when the raw covariance had to be projected onto the PSD cone.
    pub fn was_repaired(&self) -> bool {
        self.repaired
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Estimates moments over the trailing `window` rows of `returns`.
pub fn estimate_moments(
    returns: &ReturnMatrix,
    window: usize,
    method: EstimationMethod,
) -> Result<MomentEstimates> {
    if window < 2 {
        return Err(Error::Estimation(format!(
            "window must be at least 2, got {window}"
        )));
    }
    if window > returns.rows() {
        return Err(Error::Estimation(format!(
            "window {window} exceeds the {} available return rows",
            returns.rows()
        )));
    }
    let n = returns.assets();
    let data = returns.returns.rows(returns.rows() - window, window);

    let (mean, cov) = match method {
        EstimationMethod::Flat => {
            let mean = DVector::from_fn(n, |i, _| data.column(i).sum() / window as f64);
            let mut cov = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let mut acc = 0.0;
                    for t in 0..window {
                        acc += (data[(t, i)] - mean[i]) * (data[(t, j)] - mean[j]);
                    }
                    cov[(i, j)] = acc / (window - 1) as f64;
                    cov[(j, i)] = cov[(i, j)];
                }
            }
            (mean, cov)
        }
        EstimationMethod::Ewma { lambda } => {
            if !(lambda > 0.0 && lambda < 1.0) {
                return Err(Error::Estimation(format!(
                    "EWMA decay must lie in (0, 1), got {lambda}"
                )));
            }
            // Mean and second moment share the same weights, so their
            // difference is the weighted covariance.
            let first = data.row(0).transpose();
            let mut mean = first.clone();
            let mut second = &first * first.transpose();
            for t in 1..window {
                let r = data.row(t).transpose();
                mean = &mean * lambda + &r * (1.0 - lambda);
                second = &second * lambda + (&r * r.transpose()) * (1.0 - lambda);
            }
            let cov = second - &mean * mean.transpose();
            (mean, cov)
        }
    };

    let scale: Vec<f64> = (0..n).map(|i| data.column(i).amax()).collect();
    Ok(finish(
        returns.labels.clone(),
        mean,
        cov,
        &scale,
        window,
        method,
    ))
}

fn finish(
    labels: Vec<String>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    scale: &[f64],
    window: usize,
    method: EstimationMethod,
) -> MomentEstimates {
    let n = labels.len();
    let mut cov = symmetrize(&covariance);

    let mut zero_variance = Vec::new();
    for i in 0..n {
        let var = cov[(i, i)].max(0.0);
        if var == 0.0 || var.sqrt() <= ZERO_VARIANCE_RELATIVE * scale[i] {
            zero_variance.push(labels[i].clone());
            for j in 0..n {
                cov[(i, j)] = 0.0;
                cov[(j, i)] = 0.0;
            }
        }
    }

    let (cov, repaired) = repair_psd(cov);

    let volatility = DVector::from_fn(n, |i, _| cov[(i, i)].max(0.0).sqrt());
    let mut correlation = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let denom = volatility[i] * volatility[j];
            correlation[(i, j)] = if denom > 0.0 {
                (cov[(i, j)] / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    }
    let correlation = symmetrize(&correlation);

    MomentEstimates {
        labels,
        mean,
        covariance: cov,
        correlation,
        volatility,
        window,
        method,
        zero_variance,
        repaired,
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Clips negative eigenvalues at zero when the matrix is materially indefinite.
pub fn repair_psd(cov: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = cov.nrows();
    if n == 0 {
        return (cov, false);
    }
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig.eigenvalues.min();
    if trace <= 0.0 || min >= -PSD_REPAIR_TOLERANCE * trace {
        return (cov, false);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (symmetrize(&rebuilt), true)
}

/// Runs the EWMA mean recursion `m_t = lambda * m_{t-1} + (1 - lambda) * x_t`
/// from `initial`, returning `m_1..m_n`.
pub fn ewma_path(values: &[f64], lambda: f64, initial: f64) -> Vec<f64> {
    values
        .iter()
        .scan(initial, |m, x| {
            *m = lambda * *m + (1.0 - lambda) * x;
            Some(*m)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSnapshot {
    pub date: NaiveDate,
    #[serde(serialize_with = "crate::report::serialize_matrix")]
    pub correlation: DMatrix<f64>,
}

/// Flat-weighted correlation over every trailing window, one per end date.
pub fn rolling_correlations(
    returns: &ReturnMatrix,
    window: usize,
) -> Result<Vec<CorrelationSnapshot>> {
    if window < 2 {
        return Err(Error::Estimation(format!(
            "window must be at least 2, got {window}"
        )));
    }
    if window > returns.rows() {
        return Err(Error::Estimation(format!(
            "window {window} exceeds the {} available return rows",
            returns.rows()
        )));
    }
    (window..=returns.rows())
        .map(|end| {
            let slice = returns.slice_rows(end - window, end);
            let m = estimate_moments(&slice, window, EstimationMethod::Flat)?;
            Ok(CorrelationSnapshot {
                date: returns.dates[end - 1],
                correlation: m.correlation,
            })
        })
        .collect()
}

/// Per-asset moments of daily log-returns. Skewness and kurtosis are `None`
/// when the sample has no variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssetStats {
    pub label: String,
    pub observations: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: Option<f64>,
    /// Raw (non-excess) kurtosis; a normal sample gives about 3.
    pub kurtosis: Option<f64>,
}

pub fn descriptive_stats(returns: &ReturnMatrix) -> Result<Vec<AssetStats>> {
    let n = returns.rows();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "descriptive statistics need at least 4 observations, got {n}"
        )));
    }
    Ok((0..returns.assets())
        .map(|i| {
            let col = returns.returns.column(i);
            let nf = n as f64;
            let mean = col.sum() / nf;
            let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
            for x in col.iter() {
                let d = x - mean;
                let d2 = d * d;
                m2 += d2;
                m3 += d2 * d;
                m4 += d2 * d2;
            }
            let std = (m2 / (nf - 1.0)).sqrt();
            let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
            let degenerate = m2 == 0.0 || m2.sqrt() <= ZERO_VARIANCE_RELATIVE * col.amax();
            AssetStats {
                label: returns.labels[i].clone(),
                observations: n,
                mean,
                std: if degenerate { 0.0 } else { std },
                skewness: (!degenerate).then(|| m3 / m2.powf(1.5)),
                kurtosis: (!degenerate).then(|| m4 / (m2 * m2)),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, day).unwrap()
    }

    fn asset(label: &str, rows: &[(u32, f64)]) -> AssetPrices {
        AssetPrices::new(label, rows.iter().map(|&(k, p)| (d(k), p)).collect()).unwrap()
    }

    #[test]
    fn parses_two_rows() {
        let csv = "Date,Close\n2020-01-01,100\n2020-01-02,110\n";
        let a = read_prices(csv.as_bytes(), "mem", "BTC", None).unwrap();
        assert_eq!(a.rows, vec![(d(1), 100.0), (d(2), 110.0)]);
    }

    #[test]
    fn negative_close_names_the_row() {
        let csv = "Date,Close\n2020-01-01,100\n2020-01-02,-5\n";
        let err = read_prices(csv.as_bytes(), "mem", "BTC", None).unwrap_err();
        match err {
            Error::DataRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn detects_unnamed_columns() {
        let csv = "day,name,px,vol\n2020-01-02,x,101.5,7\n2020-01-01,x,100,8\n";
        let a = read_prices(csv.as_bytes(), "mem", "A", None).unwrap();
        assert_eq!(a.rows, vec![(d(1), 100.0), (d(2), 101.5)]);
    }

    #[test]
    fn two_date_columns_are_ambiguous() {
        let csv = "a,b,Close\n2020-01-01,2020-01-01,1\n";
        let err = read_prices(csv.as_bytes(), "mem", "A", None).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err}");
    }

    #[test]
    fn missing_close_column_is_schema_error() {
        let csv = "Date,Name\n2020-01-01,x\n";
        let err = read_prices(csv.as_bytes(), "mem", "A", None).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err}");
    }

    #[test]
    fn duplicate_dates_rejected() {
        let csv = "Date,Close\n2020-01-01,1\n2020-01-01,2\n";
        let err = read_prices(csv.as_bytes(), "mem", "A", None).unwrap_err();
        assert!(matches!(err, Error::DataRow { .. }), "{err}");
    }

    #[test]
    fn range_filter_and_empty_range() {
        let csv = "Date,Close\n2020-01-01,1\n2020-01-05,2\n2020-01-09,3\n";
        let r = DateRange::new(d(2), d(8)).unwrap();
        let a = read_prices(csv.as_bytes(), "mem", "A", Some(r)).unwrap();
        assert_eq!(a.rows, vec![(d(5), 2.0)]);
        let r = DateRange::new(d(20), d(25)).unwrap();
        let err = read_prices(csv.as_bytes(), "mem", "A", Some(r)).unwrap_err();
        assert!(matches!(err, Error::Range { .. }));
    }

    #[test]
    fn forward_fills_gap() {
        let a = asset("A", &[(1, 10.0), (3, 30.0)]);
        let b = asset("B", &[(1, 1.0), (2, 2.0), (3, 3.0)]);
        let p = align_and_fill(&[a, b]).unwrap();
        assert_eq!(p.dates(), &[d(1), d(2), d(3)]);
        assert_eq!(p.column("A").unwrap(), vec![10.0, 10.0, 30.0]);
        assert_eq!(p.column("B").unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn identical_calendars_pass_through() {
        let a = asset("A", &[(1, 10.0), (2, 11.0), (3, 12.0)]);
        let b = asset("B", &[(1, 1.0), (2, 2.0), (3, 3.0)]);
        let p = align_and_fill(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(p.to_asset_prices(), vec![a, b]);
    }

    #[test]
    fn axis_starts_at_latest_first_observation() {
        // oracle: union of days minus prefix where some asset has no history
        let a = asset("A", &[(5, 50.0), (6, 60.0), (8, 80.0)]);
        let b = asset("B", &[(1, 1.0), (2, 2.0), (7, 7.0)]);
        let mut union: Vec<u32> = vec![5, 6, 8, 1, 2, 7];
        union.sort_unstable();
        let first_a = 5;
        let expected: Vec<NaiveDate> = (union[0]..=*union.last().unwrap())
            .filter(|&k| k >= first_a)
            .map(d)
            .collect();
        let p = align_and_fill(&[a, b]).unwrap();
        assert_eq!(p.dates(), expected.as_slice());
        assert_eq!(p.column("B").unwrap(), vec![2.0, 2.0, 7.0, 7.0]);
        assert_eq!(p.column("A").unwrap(), vec![50.0, 60.0, 60.0, 80.0]);
    }

    #[test]
    fn disjoint_spans_fail() {
        let a = asset("A", &[(1, 1.0), (2, 1.0)]);
        let b = asset("B", &[(5, 1.0), (6, 1.0)]);
        assert!(matches!(align_and_fill(&[a, b]), Err(Error::Alignment(_))));
    }

    #[test]
    fn log_return_examples() {
        let a = asset("A", &[(1, 100.0), (2, 110.0)]);
        let r = log_returns(&align_and_fill(&[a]).unwrap()).unwrap();
        assert_relative_eq!(r.returns()[(0, 0)], 0.095_310_179_804_324_87, epsilon = 1e-15);

        let a = asset("A", &[(1, 100.0), (2, 50.0), (3, 100.0)]);
        let b = asset("B", &[(1, 7.0), (2, 7.0), (3, 7.0)]);
        let r = log_returns(&align_and_fill(&[a, b]).unwrap()).unwrap();
        assert_relative_eq!(r.returns()[(0, 0)], -std::f64::consts::LN_2, epsilon = 1e-15);
        assert_relative_eq!(r.returns()[(1, 0)], std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(r.column(0).iter().sum::<f64>(), 0.0);
        assert_eq!(r.column(1), vec![0.0, 0.0]);
    }

    #[test]
    fn single_row_has_no_returns() {
        let a = asset("A", &[(1, 100.0)]);
        let p = align_and_fill(&[a]).unwrap();
        assert!(matches!(log_returns(&p), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn constant_column_has_zero_variance() {
        let r = ReturnMatrix::from_columns(
            vec!["A".into(), "B".into()],
            &[vec![0.01; 10], vec![0.01, -0.02, 0.03, 0.0, 0.01, -0.01, 0.02, 0.0, 0.01, -0.03]],
        )
        .unwrap();
        for method in [EstimationMethod::Flat, EstimationMethod::ewma()] {
            let m = estimate_moments(&r, 10, method).unwrap();
            assert_relative_eq!(m.mean()[0], 0.01, epsilon = 1e-15);
            assert_eq!(m.covariance()[(0, 0)], 0.0);
            assert_eq!(m.correlation()[(0, 1)], 0.0);
            assert_eq!(m.correlation()[(0, 0)], 1.0);
            assert_eq!(m.zero_variance_assets(), &["A".to_string()]);
        }
    }

    #[test]
    fn identical_columns_correlate_exactly() {
        let col = vec![0.01, -0.02, 0.03, 0.0, 0.015];
        let r = ReturnMatrix::from_columns(vec!["A".into(), "B".into()], &[col.clone(), col])
            .unwrap();
        let m = estimate_moments(&r, 5, EstimationMethod::Flat).unwrap();
        assert_eq!(m.correlation()[(0, 1)], 1.0);
    }

    #[test]
    fn window_errors() {
        let r = ReturnMatrix::from_columns(vec!["A".into()], &[vec![0.0; 5]]).unwrap();
        assert!(matches!(
            estimate_moments(&r, 1, EstimationMethod::Flat),
            Err(Error::Estimation(_))
        ));
        assert!(matches!(
            estimate_moments(&r, 6, EstimationMethod::Flat),
            Err(Error::Estimation(_))
        ));
        assert!(matches!(
            estimate_moments(&r, 3, EstimationMethod::Ewma { lambda: 1.0 }),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn ewma_weights_match_direct_sum() {
        // weights: lambda^(w-1) on the first row, (1-lambda) lambda^(w-1-t) after
        let x = vec![0.02, -0.01, 0.03, 0.005, -0.02, 0.01];
        let y = vec![0.01, 0.0, 0.02, -0.01, -0.015, 0.02];
        let lambda: f64 = 0.9;
        let w = x.len();
        let weights: Vec<f64> = (0..w)
            .map(|t| {
                if t == 0 {
                    lambda.powi((w - 1) as i32)
                } else {
                    (1.0 - lambda) * lambda.powi((w - 1 - t) as i32)
                }
            })
            .collect();
        let mx: f64 = weights.iter().zip(&x).map(|(a, b)| a * b).sum();
        let my: f64 = weights.iter().zip(&y).map(|(a, b)| a * b).sum();
        let cxy: f64 = (0..w).map(|t| weights[t] * (x[t] - mx) * (y[t] - my)).sum();
        let r = ReturnMatrix::from_columns(vec!["X".into(), "Y".into()], &[x, y]).unwrap();
        let m = estimate_moments(&r, w, EstimationMethod::Ewma { lambda }).unwrap();
        assert_relative_eq!(m.mean()[0], mx, epsilon = 1e-15);
        assert_relative_eq!(m.mean()[1], my, epsilon = 1e-15);
        assert_relative_eq!(m.covariance()[(0, 1)], cxy, epsilon = 1e-15);
    }

    #[test]
    fn indefinite_covariance_is_repaired() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let m = MomentEstimates::from_covariance(
            vec!["A".into(), "B".into(), "C".into()],
            DVector::zeros(3),
            cov,
        )
        .unwrap();
        assert!(m.was_repaired());
        let eig = SymmetricEigen::new(m.covariance().clone());
        assert!(eig.eigenvalues.min() >= -1e-12);
        assert_eq!(m.covariance(), &m.covariance().transpose());
    }

    #[test]
    fn rolling_snapshot_count() {
        let col: Vec<f64> = (0..100).map(|k| ((k * 7919) % 101) as f64 / 1000.0 - 0.05).collect();
        let col2: Vec<f64> = col.iter().rev().copied().collect();
        let r = ReturnMatrix::from_columns(vec!["A".into(), "B".into()], &[col, col2]).unwrap();
        let snaps = rolling_correlations(&r, 90).unwrap();
        assert_eq!(snaps.len(), 100 - 90 + 1);
        let last = estimate_moments(&r, 90, EstimationMethod::Flat).unwrap();
        assert_eq!(&snaps.last().unwrap().correlation, last.correlation());
        assert_eq!(snaps.last().unwrap().date, *r.dates().last().unwrap());
        assert_eq!(rolling_correlations(&r, 100).unwrap().len(), 1);
    }

    #[test]
    fn two_point_sample_is_symmetric() {
        let r = ReturnMatrix::from_columns(vec!["A".into()], &[vec![-0.02, 0.02, -0.02, 0.02]])
            .unwrap();
        let s = &descriptive_stats(&r).unwrap()[0];
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.skewness, Some(0.0));
        assert_relative_eq!(s.kurtosis.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stats_flag_zero_variance() {
        let r = ReturnMatrix::from_columns(vec!["A".into()], &[vec![0.001; 5]]).unwrap();
        let s = &descriptive_stats(&r).unwrap()[0];
        assert_eq!(s.skewness, None);
        assert_eq!(s.kurtosis, None);
        let short = ReturnMatrix::from_columns(vec!["A".into()], &[vec![0.001; 3]]).unwrap();
        assert!(descriptive_stats(&short).is_err());
    }

    fn brute_cov(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let t = cols[0].len();
        let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / t as f64).collect();
        let mut out = vec![vec![0.0; cols.len()]; cols.len()];
        for i in 0..cols.len() {
            for j in 0..cols.len() {
                let mut s = 0.0;
                for k in 0..t {
                    s += (cols[i][k] - means[i]) * (cols[j][k] - means[j]);
                }
                out[i][j] = s / (t - 1) as f64;
            }
        }
        out
    }

    fn price_rows() -> impl Strategy<Value = Vec<(u32, f64)>> {
        prop::collection::btree_map(1u32..28, 1.0f64..1000.0, 1..10)
            .prop_map(|m| m.into_iter().collect())
    }

    proptest! {
        #[test]
        fn flat_covariance_matches_double_loop(
            cols in (1usize..=4, 2usize..=20).prop_flat_map(|(n, t)| {
                prop::collection::vec(prop::collection::vec(-0.1f64..0.1, t), n)
            })
        ) {
            let labels = (0..cols.len()).map(|i| format!("A{i}")).collect();
            let r = ReturnMatrix::from_columns(labels, &cols).unwrap();
            let m = estimate_moments(&r, cols[0].len(), EstimationMethod::Flat).unwrap();
            prop_assume!(!m.was_repaired() && m.zero_variance_assets().is_empty());
            let b = brute_cov(&cols);
            for i in 0..cols.len() {
                for j in 0..cols.len() {
                    prop_assert!((m.covariance()[(i, j)] - b[i][j]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn correlation_invariants(
            cols in (2usize..=4, 3usize..=30).prop_flat_map(|(n, t)| {
                prop::collection::vec(prop::collection::vec(-0.1f64..0.1, t), n)
            }),
            ewma in any::<bool>(),
        ) {
            let labels = (0..cols.len()).map(|i| format!("A{i}")).collect();
            let r = ReturnMatrix::from_columns(labels, &cols).unwrap();
            let method = if ewma { EstimationMethod::ewma() } else { EstimationMethod::Flat };
            let m = estimate_moments(&r, cols[0].len(), method).unwrap();
            let c = m.correlation();
            let n = cols.len();
            for i in 0..n {
                prop_assert_eq!(c[(i, i)], 1.0);
                prop_assert!((m.covariance()[(i, i)] - m.volatility()[i].powi(2)).abs() <= 1e-15);
                for j in 0..n {
                    prop_assert_eq!(c[(i, j)], c[(j, i)]);
                    prop_assert!((-1.0..=1.0).contains(&c[(i, j)]));
                }
            }
            let trace = m.covariance().trace();
            let min = SymmetricEigen::new(m.covariance().clone()).eigenvalues.min();
            prop_assert!(min >= -PSD_REPAIR_TOLERANCE * trace - 1e-18);
        }

        #[test]
        fn telescoping_sum(prices in prop::collection::vec(0.01f64..1e5, 2..60)) {
            let rows = prices.iter().enumerate()
                .map(|(k, p)| (d(1) + Duration::days(k as i64), *p)).collect();
            let series = align_and_fill(&[AssetPrices::new("A", rows).unwrap()]).unwrap();
            let r = log_returns(&series).unwrap();
            let total: f64 = r.column(0).iter().sum();
            let expected = (prices[prices.len() - 1] / prices[0]).ln();
            prop_assert!((total - expected).abs() <= 1e-10 * expected.abs().max(1.0));
        }

        #[test]
        fn forward_fill_is_idempotent(a in price_rows(), b in price_rows()) {
            let a = asset("A", &a);
            let b = asset("B", &b);
            if let Ok(once) = align_and_fill(&[a, b]) {
                let twice = align_and_fill(&once.to_asset_prices()).unwrap();
                prop_assert_eq!(once, twice);
            }
        }

        #[test]
        fn ewma_converges_to_constant(
            c in -1.0f64..1.0, m0 in -1.0f64..1.0, lambda in 0.01f64..0.99, len in 1usize..200
        ) {
            let path = ewma_path(&vec![c; len], lambda, m0);
            for (t, m) in path.iter().enumerate() {
                // rounding settles at roughly one ulp per step amplified by 1/(1 - lambda)
                let bound = lambda.powi(t as i32 + 1) * (m0 - c).abs() + 4.0 * f64::EPSILON / (1.0 - lambda);
                prop_assert!((m - c).abs() <= bound);
            }
        }
    }
}
