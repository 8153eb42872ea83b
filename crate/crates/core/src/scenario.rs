//! Batch scenarios: a TOML config drives ingestion, estimation and any of the
//! four risk modules, producing one JSON report plus plot-ready CSV files.
//!
//! ```toml
//! initial_value = 100000.0
//! date_range = { start = "2020-01-01", end = "2024-01-01" }
//!
//! [[data]]
//! label = "BTC"
//! path = "btc.csv"
//!
//! [weights]
//! BTC = 1.0
//!
//! [stress]
//! delta = 0.3
//! horizon = 30
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::contagion::{
    load_adjacency, shocked_portfolio_value, single_asset_crash, ContagionResult, NetworkKind,
    PropagationNetwork, ShockedValue,
};
use crate::error::{Error, Result};
use crate::hedging::{hedge_sweep, HedgeResult, HedgeSpec};
use crate::montecarlo::{
    portfolio_paths, risk_metrics_with, simulate_paths, PortfolioPaths, RiskReport,
    SimulationConfig, Valuation, DEFAULT_HISTOGRAM_BINS,
};
use crate::portfolio::{metrics_from_parts, portfolio_metrics, PortfolioSpec};
use crate::report::{pct, render};
use crate::stress::{calibrate_delta, stress_sweep, DeltaCalibration, StressResult};
use crate::timeseries::{
    align_and_fill, descriptive_stats, estimate_moments, load_prices, log_returns,
    rolling_correlations, AssetStats, DateRange, EstimationMethod, MomentEstimates,
    DEFAULT_EWMA_LAMBDA,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Flat,
    Ewma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub method: MethodName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn default_window() -> usize {
    90
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            method: MethodName::Flat,
            lambda: None,
        }
    }
}

impl EstimationConfig {
    pub fn method(&self) -> EstimationMethod {
        match self.method {
            MethodName::Flat => EstimationMethod::Flat,
            MethodName::Ewma => EstimationMethod::Ewma {
                lambda: self.lambda.unwrap_or(DEFAULT_EWMA_LAMBDA),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    /// Upper-tail fraction for the advisory shock-factor calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate_percentile: Option<f64>,
}

fn default_horizon() -> u32 {
    30
}

impl StressConfig {
    fn grid(&self) -> Vec<f64> {
        let mut grid: Vec<f64> = self.delta.into_iter().collect();
        grid.extend(self.deltas.iter().flatten().copied());
        grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub r_s: f64,
    /// An ingested asset to use as the stablecoin with its estimated moments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stablecoin: Option<String>,
}

impl HedgeConfig {
    fn grid(&self) -> Vec<f64> {
        let mut grid: Vec<f64> = self.w_s.into_iter().collect();
        grid.extend(self.grid.iter().flatten().copied());
        grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContagionConfig {
    #[serde(default = "default_kind")]
    pub kind: NetworkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<PathBuf>,
    pub asset: String,
    pub magnitude: f64,
    #[serde(default)]
    pub theta: f64,
}

fn default_kind() -> NetworkKind {
    NetworkKind::Correlation
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_mc_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_true")]
    pub correlated: bool,
    /// Simulate this asset alone, valuing it at its own price.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<String>,
    #[serde(default)]
    pub valuation: Valuation,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_paths() -> usize {
    2000
}
fn default_mc_horizon() -> usize {
    30
}
fn default_alpha() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}
fn default_quantiles() -> Vec<f64> {
    vec![0.025, 0.5, 0.975]
}
fn default_bins() -> usize {
    DEFAULT_HISTOGRAM_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_true")]
    pub plot_data: bool,
    #[serde(default = "default_sample_paths")]
    pub sample_paths: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_report() -> String {
    "report.json".into()
}
fn default_sample_paths() -> usize {
    100
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            report: default_report(),
            plot_data: true,
            sample_paths: default_sample_paths(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub data: Vec<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_range: Option<DateRange>,
    /// Missing assets get weight 0.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub equal_weight: bool,
    pub initial_value: f64,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stress: Option<StressConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hedge: Option<HedgeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contagion: Option<ContagionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub montecarlo: Option<MonteCarloConfig>,
    #[serde(default, skip_serializing)]
    pub outputs: OutputConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl ScenarioConfig {
    /// Parses TOML; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.data.iter().map(|d| d.label.clone()).collect()
    }

    pub fn set_seed(&mut self, seed: u64) {
        if let Some(mc) = self.montecarlo.as_mut() {
            mc.seed = seed;
        }
    }

    /// Output directory, relative to the config file unless absolute.
    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.outputs.dir)
    }

    pub fn portfolio(&self) -> Result<PortfolioSpec> {
        let labels = self.labels();
        if self.equal_weight {
            if !self.weights.is_empty() {
                return Err(Error::Config("give either weights or equal_weight, not both".into()));
            }
            return PortfolioSpec::equal_weight(labels, self.initial_value)
                .map_err(|e| Error::Config(e.to_string()));
        }
        if let Some(unknown) = self.weights.keys().find(|k| !labels.contains(k)) {
            return Err(Error::Config(format!("weight given for unknown asset `{unknown}`")));
        }
        let weights = labels
            .iter()
            .map(|l| self.weights.get(l).copied().unwrap_or(0.0))
            .collect();
        PortfolioSpec::new(labels, weights, self.initial_value).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without reading price data.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.data.is_empty() {
            return cfg_err("no data sources".into());
        }
        let labels = self.labels();
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return cfg_err("duplicate asset labels in data".into());
        }
        for d in &self.data {
            let p = self.resolve(&d.path);
            if !p.is_file() {
                return cfg_err(format!("data file for {} not found: {}", d.label, p.display()));
            }
        }
        if let Some(r) = self.date_range {
            if r.start > r.end {
                return cfg_err("date_range start is after end".into());
            }
        }
        self.portfolio()?;
        if self.stress.is_none()
            && self.hedge.is_none()
            && self.contagion.is_none()
            && self.montecarlo.is_none()
        {
            return cfg_err("no modules enabled; add a [stress], [hedge], [contagion] or [montecarlo] section".into());
        }
        let est = &self.estimation;
        if est.window < 2 {
            return cfg_err(format!("estimation window must be at least 2, got {}", est.window));
        }
        if let EstimationMethod::Ewma { lambda } = est.method() {
            if !(lambda > 0.0 && lambda < 1.0) {
                return cfg_err(format!("EWMA lambda must lie in (0, 1), got {lambda}"));
            }
        }
        if let Some(s) = &self.stress {
            let grid = s.grid();
            if grid.is_empty() {
                return cfg_err("[stress] needs delta or deltas".into());
            }
            if s.horizon < 1 {
                return cfg_err("[stress] horizon must be at least 1".into());
            }
            if let Some(d) = grid.iter().find(|d| !(0.0..=1.0).contains(*d)) {
                return cfg_err(format!("[stress] delta {d} outside [0, 1]"));
            }
            if let Some(p) = s.calibrate_percentile {
                if !(p > 0.0 && p < 1.0) {
                    return cfg_err(format!("[stress] calibrate_percentile {p} outside (0, 1)"));
                }
            }
        }
        if let Some(h) = &self.hedge {
            let grid = h.grid();
            if grid.is_empty() {
                return cfg_err("[hedge] needs w_s or grid".into());
            }
            for w in grid {
                HedgeSpec::with_return(w, h.r_s).map_err(|e| Error::Config(format!("[hedge] {e}")))?;
            }
            if let Some(s) = &h.stablecoin {
                if !labels.contains(s) {
                    return cfg_err(format!("[hedge] stablecoin `{s}` is not an ingested asset"));
                }
            }
        }
        if let Some(c) = &self.contagion {
            if !labels.contains(&c.asset) {
                return cfg_err(format!("[contagion] asset `{}` is not an ingested asset", c.asset));
            }
            if !(-1.0..0.0).contains(&c.magnitude) {
                return cfg_err(format!("[contagion] magnitude {} outside [-1, 0)", c.magnitude));
            }
            if !(c.theta.is_finite() && c.theta >= 0.0) {
                return cfg_err(format!("[contagion] theta {} must be >= 0", c.theta));
            }
            match (c.kind, &c.adjacency) {
                (NetworkKind::Adjacency, None) => {
                    return cfg_err("[contagion] kind = \"adjacency\" needs an adjacency file".into())
                }
                (NetworkKind::Adjacency, Some(p)) if !self.resolve(p).is_file() => {
                    return cfg_err(format!("[contagion] adjacency file not found: {}", p.display()))
                }
                (NetworkKind::Correlation, Some(_)) => {
                    return cfg_err("[contagion] adjacency file given for a correlation network".into())
                }
                _ => {}
            }
        }
        if let Some(m) = &self.montecarlo {
            if m.paths < 1 || m.horizon < 1 {
                return cfg_err("[montecarlo] paths and horizon must be at least 1".into());
            }
            if !(m.alpha > 0.0 && m.alpha < 1.0) {
                return cfg_err(format!("[montecarlo] alpha {} outside (0, 1)", m.alpha));
            }
            if m.paths < (1.0 / m.alpha).ceil() as usize {
                return cfg_err("[montecarlo] paths must be at least ceil(1/alpha)".into());
            }
            if m.bins == 0 {
                return cfg_err("[montecarlo] bins must be at least 1".into());
            }
            if let Some(q) = m.quantiles.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
                return cfg_err(format!("[montecarlo] quantile {q} outside (0, 1]"));
            }
            if let Some(a) = &m.asset {
                if !labels.contains(a) {
                    return cfg_err(format!("[montecarlo] asset `{a}` is not an ingested asset"));
                }
            }
        }
        if self.outputs.report.is_empty() {
            return cfg_err("[outputs] report name is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EngineInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSection {
    pub assets: Vec<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub price_rows: usize,
    pub return_rows: usize,
    pub last_prices: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentsSection {
    pub window: usize,
    pub method: EstimationMethod,
    pub mean: Vec<f64>,
    pub volatility: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
    pub zero_variance_assets: Vec<String>,
    pub covariance_repaired: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PortfolioSection {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    pub initial_value: f64,
    pub mu_p: f64,
    pub sigma_p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StressSection {
    pub results: Vec<StressResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<DeltaCalibration>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HedgeSection {
    pub r_s: f64,
    pub results: Vec<HedgeResult>,
    /// Same weights, with the stablecoin's estimated moments and correlations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical: Option<EmpiricalHedge>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalHedge {
    pub stablecoin: String,
    pub results: Vec<EmpiricalHedgePoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalHedgePoint {
    pub w_s: f64,
    pub mu_h: f64,
    pub sigma_h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContagionSection {
    pub kind: NetworkKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_date: Option<NaiveDate>,
    pub asset: String,
    pub magnitude: f64,
    pub theta: f64,
    pub result: ContagionResult,
    pub portfolio: ShockedValue,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSection {
    pub assets: Vec<String>,
    pub paths: usize,
    pub horizon: usize,
    pub seed: u64,
    pub correlated: bool,
    pub valuation: Valuation,
    pub drift: Vec<f64>,
    pub volatility: Vec<f64>,
    pub initial_prices: Vec<f64>,
    pub initial_value: f64,
    pub risk: RiskReport,
}

/// Everything in the report that is hashed.
#[derive(Debug, Clone, Serialize)]
pub struct ReportBody {
    pub engine: EngineInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config: ScenarioConfig,
    pub data: DataSection,
    pub descriptive_stats: Vec<AssetStats>,
    pub moments: MomentsSection,
    pub portfolio: PortfolioSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stress: Option<StressSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hedge: Option<HedgeSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contagion: Option<ContagionSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub montecarlo: Option<MonteCarloSection>,
    pub warnings: Vec<String>,
}

/// A completed run held in memory; nothing has been written yet.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub body: ReportBody,
    pub timings_ms: BTreeMap<String, f64>,
    pub portfolio_paths: Option<PortfolioPaths>,
}

impl ScenarioRun {
    pub fn render_report(&self) -> Result<String> {
        render(&self.body, self.timings_ms.clone())
    }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, key: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    timings.insert(key.to_string(), start.elapsed().as_secs_f64() * 1e3);
    out
}

/// Runs every enabled module. Errors carry the name of the failing stage.
pub fn execute(config: &ScenarioConfig) -> Result<ScenarioRun> {
    config.validate()?;
    let mut timings = BTreeMap::new();
    let mut warnings = Vec::new();
    let spec = config.portfolio()?;

    let (prices, returns) = timed(&mut timings, "ingestion", || {
        let series = config
            .data
            .iter()
            .map(|d| load_prices(config.resolve(&d.path), &d.label, config.date_range))
            .collect::<Result<Vec<_>>>()?;
        let prices = align_and_fill(&series)?;
        let returns = log_returns(&prices)?;
        Ok((prices, returns))
    })
    .map_err(|e| e.in_module("timeseries"))?;

    let (stats, moments) = timed(&mut timings, "estimation", || {
        let stats = descriptive_stats(&returns)?;
        let moments = estimate_moments(&returns, config.estimation.window, config.estimation.method())?;
        Ok((stats, moments))
    })
    .map_err(|e| e.in_module("timeseries"))?;
    for label in moments.zero_variance_assets() {
        warnings.push(format!("{label}: zero variance over the estimation window; correlations set to 0"));
    }
    if moments.was_repaired() {
        warnings.push("covariance was not positive semidefinite and has been repaired".into());
    }

    let base = portfolio_metrics(&spec, &moments).map_err(|e| e.in_module("portfolio"))?;

    let stress = config
        .stress
        .as_ref()
        .map(|s| {
            timed(&mut timings, "stress", || {
                let results = stress_sweep(&spec, &moments, &s.grid(), s.horizon)?;
                let calibration = s
                    .calibrate_percentile
                    .map(|p| calibrate_delta(&returns, p))
                    .transpose()?;
                Ok(StressSection { results, calibration })
            })
        })
        .transpose()
        .map_err(|e| e.in_module("stress"))?;

    let hedge = config
        .hedge
        .as_ref()
        .map(|h| timed(&mut timings, "hedge", || run_hedge(h, &spec, &moments)))
        .transpose()
        .map_err(|e| e.in_module("hedge"))?;

    let contagion = config
        .contagion
        .as_ref()
        .map(|c| {
            timed(&mut timings, "contagion", || {
                run_contagion(config, c, &spec, &returns)
            })
        })
        .transpose()
        .map_err(|e| e.in_module("contagion"))?;

    let mut sample_paths = None;
    let montecarlo = config
        .montecarlo
        .as_ref()
        .map(|m| {
            timed(&mut timings, "montecarlo", || {
                let (section, paths) = run_montecarlo(m, &spec, &moments, &prices.last_prices())?;
                sample_paths = Some(paths);
                Ok(section)
            })
        })
        .transpose()
        .map_err(|e| e.in_module("montecarlo"))?;

    let body = ReportBody {
        engine: EngineInfo {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        },
        seed: config.montecarlo.as_ref().map(|m| m.seed),
        config: config.clone(),
        data: DataSection {
            assets: prices.labels().to_vec(),
            start: prices.dates()[0],
            end: *prices.dates().last().expect("non-empty"),
            price_rows: prices.len(),
            return_rows: returns.rows(),
            last_prices: prices.last_prices(),
        },
        descriptive_stats: stats,
        moments: MomentsSection {
            window: moments.window(),
            method: moments.method(),
            mean: moments.mean().iter().copied().collect(),
            volatility: moments.volatility().iter().copied().collect(),
            correlation: moments
                .correlation()
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            zero_variance_assets: moments.zero_variance_assets().to_vec(),
            covariance_repaired: moments.was_repaired(),
        },
        portfolio: PortfolioSection {
            labels: spec.labels().to_vec(),
            weights: spec.weights().to_vec(),
            initial_value: spec.initial_value(),
            mu_p: base.expected_return,
            sigma_p: base.volatility,
        },
        stress,
        hedge,
        contagion,
        montecarlo,
        warnings,
    };
    Ok(ScenarioRun {
        body,
        timings_ms: timings,
        portfolio_paths: sample_paths,
    })
}

fn run_hedge(
    h: &HedgeConfig,
    spec: &PortfolioSpec,
    moments: &MomentEstimates,
) -> Result<HedgeSection> {
    let grid = h.grid();
    let results = hedge_sweep(spec, moments, &grid, h.r_s)?;
    let empirical = match &h.stablecoin {
        None => None,
        Some(stable) => {
            let k = moments
                .index_of(stable)
                .ok_or_else(|| Error::UnknownLabel(stable.clone()))?;
            if spec.weights()[k] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "stablecoin `{stable}` already has nonzero portfolio weight"
                )));
            }
            let points = grid
                .iter()
                .map(|&w_s| {
                    let mut w = spec.weight_vector() * (1.0 - w_s);
                    w[k] = w_s;
                    let m = metrics_from_parts(&w, moments.mean(), moments.covariance())?;
                    Ok(EmpiricalHedgePoint {
                        w_s,
                        mu_h: m.expected_return,
                        sigma_h: m.volatility,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(EmpiricalHedge {
                stablecoin: stable.clone(),
                results: points,
            })
        }
    };
    Ok(HedgeSection {
        r_s: h.r_s,
        results,
        empirical,
    })
}

fn run_contagion(
    config: &ScenarioConfig,
    c: &ContagionConfig,
    spec: &PortfolioSpec,
    returns: &crate::timeseries::ReturnMatrix,
) -> Result<ContagionSection> {
    let (network, snapshot_date) = match c.kind {
        NetworkKind::Correlation => {
            let window = config.estimation.window;
            let tail = returns.slice_rows(returns.rows().saturating_sub(window), returns.rows());
            let snaps = rolling_correlations(&tail, window)?;
            let last = snaps.last().expect("at least one snapshot");
            let net = PropagationNetwork::correlation(
                returns.labels().to_vec(),
                last.correlation.clone(),
                c.theta,
            )?;
            (net, Some(last.date))
        }
        NetworkKind::Adjacency => {
            let path = c.adjacency.as_ref().expect("validated");
            let net = load_adjacency(config.resolve(path), c.theta)?;
            if net.labels() != returns.labels() {
                return Err(Error::Alignment(format!(
                    "adjacency labels {:?} do not match assets {:?}",
                    net.labels(),
                    returns.labels()
                )));
            }
            (net, None)
        }
    };
    let result = single_asset_crash(&network, &c.asset, c.magnitude)?;
    let portfolio = shocked_portfolio_value(spec, &result)?;
    Ok(ContagionSection {
        kind: c.kind,
        snapshot_date,
        asset: c.asset.clone(),
        magnitude: c.magnitude,
        theta: c.theta,
        result,
        portfolio,
    })
}

fn run_montecarlo(
    m: &MonteCarloConfig,
    spec: &PortfolioSpec,
    moments: &MomentEstimates,
    last_prices: &[f64],
) -> Result<(MonteCarloSection, PortfolioPaths)> {
    let mut sim = SimulationConfig::from_moments(
        moments,
        last_prices.to_vec(),
        m.correlated,
        m.paths,
        m.horizon,
        m.seed,
    );
    sim.alpha = m.alpha;
    let mut valuation = m.valuation;
    let sim_spec = match &m.asset {
        Some(a) => {
            let k = moments.index_of(a).ok_or_else(|| Error::UnknownLabel(a.clone()))?;
            sim = SimulationConfig::single_asset(
                a.clone(),
                sim.drift[k],
                sim.volatility[k],
                last_prices[k],
                m.paths,
                m.horizon,
                m.seed,
            );
            sim.alpha = m.alpha;
            valuation = Valuation::RawPrice;
            PortfolioSpec::new(vec![a.clone()], vec![1.0], last_prices[k])?
        }
        None => spec.clone(),
    };
    let ensemble = simulate_paths(&sim)?;
    let paths = portfolio_paths(&ensemble, &sim_spec, valuation)?;
    let initial_value = paths.value(0, 0);
    let risk = risk_metrics_with(&paths.terminal_values(), initial_value, m.alpha, &m.quantiles, m.bins)?;
    let section = MonteCarloSection {
        assets: sim.labels.clone(),
        paths: sim.num_paths,
        horizon: sim.horizon,
        seed: sim.seed,
        correlated: m.asset.is_none() && m.correlated,
        valuation,
        drift: sim.drift.clone(),
        volatility: sim.volatility.clone(),
        initial_prices: sim.initial_prices.clone(),
        initial_value,
        risk,
    };
    Ok((section, paths))
}

/// A plot-ready CSV file in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotFile {
    pub name: &'static str,
    pub contents: String,
}

/// Builds the plot CSVs for every section present in `run`. Missing sections
/// are skipped and reported in the returned warnings.
pub fn emit_plot_data(run: &ScenarioRun, sample_paths: usize) -> (Vec<PlotFile>, Vec<String>) {
    let body = &run.body;
    let mut files = Vec::new();
    let mut warnings = Vec::new();

    match &body.stress {
        Some(s) if !s.results.is_empty() => {
            let first = &s.results[0];
            let mut out = String::from("label,value\n");
            let rows = [
                ("mu_p_pct", pct(body.portfolio.mu_p)),
                ("mu_shock_pct", pct(first.mu_shock)),
                ("sigma_p_pct", pct(body.portfolio.sigma_p)),
                ("sigma_shock_pct", pct(first.sigma_shock)),
                ("terminal_value", first.terminal_value),
                ("terminal_multiple", first.terminal_multiple),
            ];
            for (label, value) in rows {
                let _ = writeln!(out, "{label},{value}");
            }
            files.push(PlotFile { name: "stress_bars.csv", contents: out });
            if s.results.len() > 1 {
                let mut out = String::from("delta,mu_shock_pct,sigma_shock_pct,terminal_value\n");
                for r in &s.results {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        r.delta,
                        pct(r.mu_shock),
                        pct(r.sigma_shock),
                        r.terminal_value
                    );
                }
                files.push(PlotFile { name: "stress_sweep.csv", contents: out });
            }
        }
        _ => warnings.push("no stress section; stress_bars.csv skipped".into()),
    }

    match &body.hedge {
        Some(h) => {
            let mut out = String::from("case,return\n");
            let _ = writeln!(out, "unhedged,{}", pct(body.portfolio.mu_p));
            for r in &h.results {
                let _ = writeln!(out, "w_s={},{}", r.w_s, pct(r.mu_h));
            }
            files.push(PlotFile { name: "hedge.csv", contents: out });
        }
        None => warnings.push("no hedge section; hedge.csv skipped".into()),
    }

    match &body.contagion {
        Some(c) => {
            let mut out = String::from("asset,impact\n");
            for (label, d) in c.result.labels.iter().zip(&c.result.delta) {
                let _ = writeln!(out, "{label},{}", pct(*d));
            }
            files.push(PlotFile { name: "contagion.csv", contents: out });
        }
        None => warnings.push("no contagion section; contagion.csv skipped".into()),
    }

    match (&body.montecarlo, &run.portfolio_paths) {
        (Some(mc), Some(paths)) => {
            let k = sample_paths.min(paths.num_paths());
            let mut out = String::from("day");
            for m in 1..=k {
                let _ = write!(out, ",path_{m}");
            }
            out.push('\n');
            for t in 0..paths.steps() {
                let _ = write!(out, "{t}");
                for m in 0..k {
                    let _ = write!(out, ",{}", paths.value(m, t));
                }
                out.push('\n');
            }
            files.push(PlotFile { name: "paths.csv", contents: out });

            let h = &mc.risk.histogram;
            let mut out = String::from("bin_left,bin_right,count\n");
            for (i, c) in h.counts.iter().enumerate() {
                let _ = writeln!(out, "{},{},{c}", h.edges[i], h.edges[i + 1]);
            }
            files.push(PlotFile { name: "histogram.csv", contents: out });
        }
        _ => warnings.push("no montecarlo section; paths.csv and histogram.csv skipped".into()),
    }

    (files, warnings)
}

/// Files written by [`run_scenario`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report_path: PathBuf,
    pub plot_paths: Vec<PathBuf>,
    pub body_sha256: String,
    pub warnings: Vec<String>,
}

/// Executes the scenario and writes the report and plot files into the output
/// directory. Nothing is written unless every module succeeds, and files are
/// moved into place only after all of them are fully written.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutcome> {
    let run = execute(config)?;
    let report = run.render_report()?;
    let mut files: Vec<(String, String)> = vec![(config.outputs.report.clone(), report)];
    let mut warnings = run.body.warnings.clone();
    if config.outputs.plot_data {
        let (plots, skipped) = emit_plot_data(&run, config.outputs.sample_paths);
        files.extend(plots.into_iter().map(|p| (p.name.to_string(), p.contents)));
        warnings.extend(skipped);
    }

    let dir = config.output_dir();
    let written = write_atomically(&dir, &files)?;
    Ok(RunOutcome {
        report_path: written[0].clone(),
        plot_paths: written[1..].to_vec(),
        body_sha256: crate::report::body_hash(&run.body)?,
        warnings,
    })
}

fn write_atomically(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut staged = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = std::fs::remove_file(tmp);
        }
    };
    for (name, contents) in files {
        let dest = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = std::fs::write(&tmp, contents) {
            cleanup(&staged);
            let _ = std::fs::remove_file(&tmp);
            return Err(io(&tmp)(e));
        }
        staged.push((tmp, dest));
    }
    for (tmp, dest) in &staged {
        if let Err(e) = std::fs::rename(tmp, dest) {
            cleanup(&staged);
            return Err(io(dest)(e));
        }
    }
    Ok(staged.into_iter().map(|(_, d)| d).collect())
}
