// Volatility shock on a two-asset portfolio, then a sweep over delta.

use cryptorisk::stress::{delta_grid, stress_sweep, stress_test, ShockScenario};
use cryptorisk::{MomentEstimates, PortfolioSpec};
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> cryptorisk::Result<()> {
    let labels = vec!["BTC".to_string(), "ETH".to_string()];
    let moments = MomentEstimates::from_correlation(
        labels.clone(),
        DVector::from_vec(vec![0.0012, 0.0015]),
        DVector::from_vec(vec![0.045, 0.052]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.85, 0.85, 1.0]),
    )?;
    let spec = PortfolioSpec::new(labels, vec![0.5, 0.5], 100_000.0)?;

    let r = stress_test(&spec, &moments, ShockScenario::new(0.3, 30)?)?;
    println!(
        "delta 0.3: mu {:.4}%  sigma {:.3}%  V_30 {:.2} ({:+.2}%)",
        r.mu_shock * 100.0,
        r.sigma_shock * 100.0,
        r.terminal_value,
        (r.terminal_multiple - 1.0) * 100.0
    );

    println!("delta   mu_shock   sigma_shock   V_30");
    for r in stress_sweep(&spec, &moments, &delta_grid(5), 30)? {
        println!("{:.1}   {:.6}   {:.6}   {:.2}", r.delta, r.mu_shock, r.sigma_shock, r.terminal_value);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> cryptorisk::Result<()> {
    run_example()
}
