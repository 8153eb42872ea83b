// Acceptance gate. Each criterion prints one line; any failure exits nonzero.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use cryptorisk::contagion::{propagate, single_asset_crash, PropagationNetwork, ShockVector};
use cryptorisk::hedging::{augment_with_stablecoin, hedge_sweep, hedged_portfolio};
use cryptorisk::montecarlo::{
    analytic_oracle, risk_metrics, simulate_paths, SimulationConfig,
};
use cryptorisk::portfolio::{portfolio_metrics, PortfolioMetrics};
use cryptorisk::scenario::{execute, ScenarioConfig};
use cryptorisk::stress::{delta_grid, stress_from_metrics, stress_sweep, ShockScenario};
use cryptorisk::timeseries::{align_and_fill, descriptive_stats, log_returns, AssetPrices, ReturnMatrix};
use cryptorisk::{MomentEstimates, PortfolioSpec};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn btc_eth() -> (PortfolioSpec, MomentEstimates) {
    let labels = vec!["BTC".to_string(), "ETH".to_string()];
    let m = MomentEstimates::from_correlation(
        labels.clone(),
        DVector::from_vec(vec![0.0012, 0.0015]),
        DVector::from_vec(vec![0.045, 0.052]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.85, 0.85, 1.0]),
    )
    .unwrap();
    (PortfolioSpec::new(labels, vec![0.5, 0.5], 1.0).unwrap(), m)
}

fn stress_worked_example() -> Outcome {
    let base = PortfolioMetrics {
        expected_return: 0.00135,
        volatility: 0.055077,
    };
    let r = stress_from_metrics(base, 1.0, ShockScenario::new(0.3, 30).unwrap());
    check(
        (r.mu_shock - 0.000945).abs() <= 1e-6
            && (r.sigma_shock - 0.0628).abs() <= 1e-4
            && (r.terminal_multiple - 1.0288).abs() <= 0.001,
        format!(
            "mu_shock {:.7}, sigma_shock {:.6}, V_30/V_0 {:.5}",
            r.mu_shock, r.sigma_shock, r.terminal_multiple
        ),
    )
}

fn stress_identities() -> Outcome {
    let (spec, m) = btc_eth();
    let base = portfolio_metrics(&spec, &m).unwrap();
    let sweep = stress_sweep(&spec, &m, &delta_grid(100), 30).unwrap();
    let mut worst: f64 = 0.0;
    for r in sweep.iter().filter(|r| r.delta < 1.0) {
        worst = worst.max((r.mu_shock / ((1.0 - r.delta) * base.expected_return) - 1.0).abs());
    }
    for r in &sweep {
        let ratio = r.sigma_shock.powi(2) / ((1.0 + r.delta) * base.volatility.powi(2));
        worst = worst.max((ratio - 1.0).abs());
    }
    let zero = &sweep[0];
    let exact = zero.delta == 0.0
        && zero.mu_shock == base.expected_return
        && zero.sigma_shock == base.volatility;
    check(
        sweep.len() == 101 && worst <= 1e-12 && exact,
        format!("{} points, worst ratio error {worst:.1e}, delta=0 exact: {exact}", sweep.len()),
    )
}

fn hedging_exactness() -> Outcome {
    let (spec, m) = btc_eth();
    let base = portfolio_metrics(&spec, &m).unwrap();
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let aug = augment_with_stablecoin(&m, "USDT", 0.0, 0.0, &[0.0, 0.0]).unwrap();
    let mut worst: f64 = 0.0;
    for h in hedge_sweep(&spec, &m, &grid, 0.0).unwrap() {
        let keep = 1.0 - h.w_s;
        worst = worst
            .max((h.mu_h - keep * base.expected_return).abs())
            .max((h.sigma_h - keep * base.volatility).abs());
        let full = portfolio_metrics(&hedged_portfolio(&spec, "USDT", h.w_s).unwrap(), &aug).unwrap();
        worst = worst
            .max((full.expected_return - h.mu_h).abs())
            .max((full.volatility - h.sigma_h).abs());
    }
    check(worst <= 1e-12, format!("11 weights, worst error {worst:.1e} (closed form and augmented covariance)"))
}

fn contagion_properties() -> Outcome {
    let labels: Vec<String> = ["A", "B", "C", "D"].map(String::from).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let eye = PropagationNetwork::adjacency(labels.clone(), DMatrix::identity(4, 4), 0.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut fixpoint = true;
    for _ in 0..100 {
        let e1: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let e2: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let net = PropagationNetwork::adjacency(
            labels.clone(),
            DMatrix::from_fn(4, 4, |_, _| rng.random_range(0.0..1.0)),
            0.0,
        )
        .unwrap();
        let run = |e: &[f64]| propagate(&net, &ShockVector::new(labels.clone(), e.to_vec()).unwrap()).unwrap().delta;
        let combo: Vec<f64> = e1.iter().zip(&e2).map(|(x, y)| a * x + b * y).collect();
        let (d1, d2, d12) = (run(&e1), run(&e2), run(&combo));
        for i in 0..4 {
            worst = worst.max((d12[i] - (a * d1[i] + b * d2[i])).abs());
        }
        let id = propagate(&eye, &ShockVector::new(labels.clone(), e1.clone()).unwrap()).unwrap();
        fixpoint &= id.delta == e1;
    }

    let pair: Vec<String> = ["BTC", "ETH"].map(String::from).to_vec();
    let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.85, 0.85, 1.0]);
    let net = PropagationNetwork::correlation(pair.clone(), rho, 0.0).unwrap();
    let eth = single_asset_crash(&net, "BTC", -0.20).unwrap().delta[1];

    let weak = DMatrix::from_row_slice(2, 2, &[1.0, 0.02, 0.02, 1.0]);
    let net = PropagationNetwork::correlation(pair, weak, 0.01).unwrap();
    let gated = single_asset_crash(&net, "BTC", -0.20).unwrap();

    check(
        fixpoint && worst <= 1e-12 && eth == -0.17 && gated.raw[1] == -0.004 && gated.delta[1] == 0.0,
        format!(
            "identity fixpoint {fixpoint}, linearity worst {worst:.1e}, Delta_ETH {eth}, raw {} gated to {}",
            gated.raw[1], gated.delta[1]
        ),
    )
}

fn monte_carlo_vs_closed_form() -> Outcome {
    let (mu, sigma, horizon, m) = (0.0012, 0.045, 30usize, 20_000usize);
    let oracle = analytic_oracle(mu, sigma, 1.0, horizon as f64, 0.05).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let cfg = SimulationConfig::single_asset("BTC", mu, sigma, 1.0, m, horizon, 20240501);
    let mut terminal = pool.install(|| simulate_paths(&cfg)).unwrap().terminal_prices(0);
    let risk = risk_metrics(&terminal, 1.0, 0.05).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let n = m as f64;
    let mean = terminal.iter().sum::<f64>() / n;
    let sd = (terminal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mean_ok = (mean - oracle.mean).abs() <= 3.0 * sd / n.sqrt();

    // order statistics bracketing the 5% quantile at +-3 binomial sd
    terminal.sort_by(f64::total_cmp);
    let spread = 3.0 * (n * 0.05 * 0.95).sqrt();
    let lo = ((n * 0.05 - spread).floor() as usize).max(1);
    let hi = ((n * 0.05 + spread).ceil() as usize).min(m);
    let (q_lo, q_hi) = (terminal[lo - 1], terminal[hi - 1]);
    let quantile_ok = q_lo <= oracle.quantile && oracle.quantile <= q_hi;

    let loss_ok = (risk.loss_probability - oracle.loss_probability).abs() <= 0.011;

    // independent generator, direct lognormal draws
    let mut rng = StdRng::seed_from_u64(99);
    let drift = (mu - 0.5 * sigma * sigma) * horizon as f64;
    let scale = sigma * (horizon as f64).sqrt();
    let big = 1_000_000;
    let losses = (0..big)
        .filter(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            drift + scale * z < 0.0
        })
        .count() as f64
        / big as f64;
    let p = oracle.loss_probability;
    let cross_ok = (losses - p).abs() <= 3.0 * (p * (1.0 - p) / big as f64).sqrt();

    check(
        mean_ok && quantile_ok && loss_ok && cross_ok && elapsed < 10.0,
        format!(
            "mean {mean:.5} vs {:.5}, q5 {:.5} in [{q_lo:.5}, {q_hi:.5}], P(loss) {:.4} vs {p:.4}, 1e6 check {losses:.4}, {elapsed:.2}s on 1 thread",
            oracle.mean, oracle.quantile, risk.loss_probability
        ),
    )
}

fn correlation_fidelity() -> Outcome {
    let (_, moments) = btc_eth();
    let cfg = SimulationConfig::from_moments(&moments, vec![1.0, 1.0], true, 10_000, 30, 77);
    let ens = simulate_paths(&cfg).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for p in 0..cfg.num_paths {
        for t in 0..cfg.horizon {
            x.push((ens.price(p, t + 1, 0) / ens.price(p, t, 0)).ln());
            y.push((ens.price(p, t + 1, 1) / ens.price(p, t, 1)).ln());
        }
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let rho = cov / (vx * vy).sqrt();
    check(
        x.len() >= 300_000 && (rho - 0.85).abs() <= 0.02,
        format!("{} increments, sample rho {rho:.4}", x.len()),
    )
}

fn degenerate_gbm() -> Outcome {
    let cfg = SimulationConfig::single_asset("X", 0.001, 0.0, 100.0, 500, 30, 3);
    let terminal = simulate_paths(&cfg).unwrap().terminal_prices(0);
    let exact = 100.0 * 0.03f64.exp();
    let worst = terminal.iter().map(|v| (v - exact).abs()).fold(0.0, f64::max);
    check(
        worst <= 1e-9 && (exact - 103.0455).abs() < 5e-5,
        format!("{} paths, worst |V_T - 100 e^0.03| {worst:.1e}, value {exact:.4}", terminal.len()),
    )
}

fn descriptive_stats_recovery() -> Outcome {
    let n = 100_000usize;
    let (mu, sigma) = (0.0012, 0.045);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let start = chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    let mut price = 100.0;
    let mut rows = vec![(start, price)];
    for i in 1..=n {
        let z: f64 = StandardNormal.sample(&mut rng);
        price *= (mu + sigma * z).exp();
        rows.push((start + chrono::Duration::days(i as i64), price));
    }
    let prices = align_and_fill(&[AssetPrices::new("X", rows).unwrap()]).unwrap();
    let s = &descriptive_stats(&log_returns(&prices).unwrap()).unwrap()[0];
    let nf = n as f64;
    let mean_ok = (s.mean - mu).abs() <= 3.0 * sigma / nf.sqrt();
    let std_ok = (s.std - sigma).abs() <= 3.0 * sigma / (2.0 * nf).sqrt();

    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let normal = ReturnMatrix::from_columns(vec!["Z".into()], &[z]).unwrap();
    let kurt = descriptive_stats(&normal).unwrap()[0].kurtosis.unwrap();
    check(
        s.observations == n && mean_ok && std_ok && (kurt - 3.0).abs() <= 0.1,
        format!("mean {:.5}, std {:.5}, normal kurtosis {kurt:.3}", s.mean, s.std),
    )
}

fn end_to_end_determinism() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let cfg = ScenarioConfig::from_path(fixtures.join("scenario.toml")).unwrap();
    let enabled = cfg.stress.is_some() && cfg.hedge.is_some() && cfg.contagion.is_some() && cfg.montecarlo.is_some();
    let a = serde_json::to_vec(&execute(&cfg).unwrap().body).unwrap();
    let b = serde_json::to_vec(&execute(&cfg).unwrap().body).unwrap();

    // the same through the binary, into two directories
    let tmp = tempfile::tempdir().unwrap();
    let body_of = |dir: &str| {
        let out = tmp.path().join(dir);
        let status = Command::new(env!("CARGO_BIN_EXE_cryptorisk"))
            .args(["run", fixtures.join("scenario.toml").to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .unwrap()
            .status;
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        (status.success(), serde_json::to_vec(&v["body"]).unwrap(), v["body_sha256"].clone())
    };
    let (ok1, body1, hash1) = body_of("first");
    let (ok2, body2, hash2) = body_of("second");

    let bad = tempfile::tempdir().unwrap();
    std::fs::write(bad.path().join("bad.toml"), "initial_value = [\n[[data]\n").unwrap();
    let before = std::fs::read_dir(bad.path()).unwrap().count();
    let code = Command::new(env!("CARGO_BIN_EXE_cryptorisk"))
        .args(["validate", bad.path().join("bad.toml").to_str().unwrap()])
        .output()
        .unwrap()
        .status
        .code();
    let after = std::fs::read_dir(bad.path()).unwrap().count();

    check(
        enabled && a == b && ok1 && ok2 && body1 == body2 && hash1 == hash2 && code == Some(1) && before == after,
        format!(
            "four modules: {enabled}, in-memory bodies equal: {}, CLI bodies equal: {}, validate exit {code:?}, files written {}",
            a == b,
            body1 == body2 && hash1 == hash2,
            after - before
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("stress worked example", stress_worked_example),
        ("stress identities", stress_identities),
        ("hedging exactness", hedging_exactness),
        ("contagion", contagion_properties),
        ("monte carlo vs closed form", monte_carlo_vs_closed_form),
        ("correlation fidelity", correlation_fidelity),
        ("degenerate gbm", degenerate_gbm),
        ("descriptive stats", descriptive_stats_recovery),
    ];
    let mut passed = Vec::new();
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        match f() {
            Ok(d) => {
                println!("criterion {n} PASS  {name}: {d}");
                passed.push(n);
            }
            Err(d) => {
                println!("criterion {n} FAIL  {name}: {d}");
                failures += 1;
            }
        }
    }

    // The 0.17 headline loss probability cannot come from the daily moments,
    // which imply about one half; criteria 5 to 7 stand in for it.
    let implied = analytic_oracle(0.0012, 0.045, 1.0, 30.0, 0.05).unwrap().loss_probability;
    let substitutes = [5, 6, 7].iter().all(|n| passed.contains(n));
    println!(
        "criterion 9 {}  headline monte carlo numbers: not reproducible (implied P(loss) {implied:.3} vs stated 0.17); substituted by 5, 6, 7 which {}",
        if substitutes { "SUBSTITUTED" } else { "FAIL" },
        if substitutes { "pass" } else { "do not all pass" }
    );
    if !substitutes {
        failures += 1;
    }

    match end_to_end_determinism() {
        Ok(d) => println!("criterion 10 PASS  end-to-end determinism: {d}"),
        Err(d) => {
            println!("criterion 10 FAIL  end-to-end determinism: {d}");
            failures += 1;
        }
    }

    if failures == 0 {
        println!("acceptance: all criteria met");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
