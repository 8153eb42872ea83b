// GBM paths for one asset against the closed-form lognormal, then a
// correlated two-asset portfolio.

use cryptorisk::montecarlo::{
    analytic_oracle, portfolio_paths, risk_metrics, simulate_paths, SimulationConfig, Valuation,
};
use cryptorisk::{MomentEstimates, PortfolioSpec};
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> cryptorisk::Result<()> {
    let (mu, sigma) = (0.0012, 0.045);
    let cfg = SimulationConfig::single_asset("BTC", mu, sigma, 1.0, 20_000, 30, 42);
    let ens = simulate_paths(&cfg)?;
    let terminal = ens.terminal_prices(0);
    let risk = risk_metrics(&terminal, 1.0, 0.05)?;
    let oracle = analytic_oracle(mu, sigma, 1.0, 30.0, 0.05)?;
    println!("            simulated   closed form");
    println!("mean        {:.5}     {:.5}", risk.expected_terminal, oracle.mean);
    println!("5% quantile {:.5}     {:.5}", risk.var_alpha, oracle.quantile);
    println!("P(loss)     {:.4}      {:.4}", risk.loss_probability, oracle.loss_probability);
    println!("ES 5%       {:.5}", risk.es_alpha);

    let labels = vec!["BTC".to_string(), "ETH".to_string()];
    let moments = MomentEstimates::from_correlation(
        labels.clone(),
        DVector::from_vec(vec![0.0012, 0.0015]),
        DVector::from_vec(vec![0.045, 0.052]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.85, 0.85, 1.0]),
    )?;
    let cfg = SimulationConfig::from_moments(&moments, vec![42_000.0, 2_300.0], true, 2000, 30, 7);
    let ens = simulate_paths(&cfg)?;
    let spec = PortfolioSpec::new(labels, vec![0.6, 0.4], 100_000.0)?;
    let paths = portfolio_paths(&ens, &spec, Valuation::Relative)?;
    let risk = risk_metrics(&paths.terminal_values(), 100_000.0, 0.05)?;
    println!(
        "portfolio: mean {:.0}  VaR {:.0}  ES {:.0}  P(loss) {:.3}",
        risk.expected_terminal, risk.var_alpha, risk.es_alpha, risk.loss_probability
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> cryptorisk::Result<()> {
    run_example()
}
