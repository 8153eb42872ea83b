// Load the bundled price files, align them on a daily calendar and estimate
// moments with both estimators.

use std::path::Path;

use cryptorisk::timeseries::{
    align_and_fill, descriptive_stats, estimate_moments, load_prices, log_returns,
    rolling_correlations, EstimationMethod,
};

pub fn run_example() -> cryptorisk::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let series = ["BTC", "ETH", "USDT"]
        .iter()
        .map(|label| load_prices(dir.join(format!("{}.csv", label.to_lowercase())), *label, None))
        .collect::<cryptorisk::Result<Vec<_>>>()?;
    let prices = align_and_fill(&series)?;
    let returns = log_returns(&prices)?;
    println!(
        "{} aligned days {} .. {}, {} return rows",
        prices.len(),
        prices.dates()[0],
        prices.dates()[prices.len() - 1],
        returns.rows()
    );

    for s in descriptive_stats(&returns)? {
        println!(
            "{:>5}  mean {:+.5}  std {:.5}  skew {:+.3}  kurt {:.3}",
            s.label,
            s.mean,
            s.std,
            s.skewness.unwrap_or(f64::NAN),
            s.kurtosis.unwrap_or(f64::NAN)
        );
    }

    for method in [EstimationMethod::Flat, EstimationMethod::ewma()] {
        let m = estimate_moments(&returns, 90, method)?;
        println!("{method:?}: vol {:.5?}", m.volatility().as_slice());
        println!("  corr BTC/ETH {:.4}", m.correlation()[(0, 1)]);
    }

    let snaps = rolling_correlations(&returns, 60)?;
    let last = snaps.last().expect("window fits");
    println!("{} rolling snapshots, last on {}", snaps.len(), last.date);
    Ok(())
}

#[allow(dead_code)]
fn main() -> cryptorisk::Result<()> {
    run_example()
}
