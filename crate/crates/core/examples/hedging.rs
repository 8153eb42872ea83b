// Moving capital into a stablecoin: the simple uncorrelated case and the
// augmented covariance case.

use cryptorisk::hedging::{augment_with_stablecoin, hedge_sweep, hedged_portfolio};
use cryptorisk::{portfolio_metrics, MomentEstimates, PortfolioSpec};
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> cryptorisk::Result<()> {
    let labels = vec!["BTC".to_string(), "ETH".to_string()];
    let moments = MomentEstimates::from_correlation(
        labels.clone(),
        DVector::from_vec(vec![0.0012, 0.0015]),
        DVector::from_vec(vec![0.045, 0.052]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.85, 0.85, 1.0]),
    )?;
    let spec = PortfolioSpec::new(labels, vec![0.5, 0.5], 1.0)?;

    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    println!("w_s   mu_h       sigma_h");
    for h in hedge_sweep(&spec, &moments, &grid, 0.0)? {
        println!("{:.1}   {:.6}   {:.6}", h.w_s, h.mu_h, h.sigma_h);
    }

    // a stablecoin that wobbles a little and co-moves with the market
    let aug = augment_with_stablecoin(&moments, "USDT", 0.00002, 0.0005, &[0.2, 0.2])?;
    let hedged = hedged_portfolio(&spec, "USDT", 0.3)?;
    let m = portfolio_metrics(&hedged, &aug)?;
    println!("correlated USDT at 30%: mu {:.6}  sigma {:.6}", m.expected_return, m.volatility);
    Ok(())
}

#[allow(dead_code)]
fn main() -> cryptorisk::Result<()> {
    run_example()
}
