// A BTC crash pushed through a correlation network and a directed adjacency
// network read from disk.

use std::path::Path;

use cryptorisk::contagion::{
    load_adjacency, propagate, shocked_portfolio_value, single_asset_crash, PropagationNetwork,
    ShockVector,
};
use cryptorisk::PortfolioSpec;
use nalgebra::DMatrix;

pub fn run_example() -> cryptorisk::Result<()> {
    let labels: Vec<String> = ["BTC", "ETH", "USDT"].map(String::from).to_vec();
    let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.85, 0.02, 0.85, 1.0, 0.03, 0.02, 0.03, 1.0]);
    let net = PropagationNetwork::correlation(labels.clone(), corr, 0.01)?;

    let r = single_asset_crash(&net, "BTC", -0.2)?;
    for ((l, d), gated) in r.labels.iter().zip(&r.delta).zip(&r.thresholded) {
        println!("{l:>5} {:+.4}{}", d, if *gated { "  (below threshold)" } else { "" });
    }
    let spec = PortfolioSpec::new(labels.clone(), vec![0.4, 0.4, 0.2], 100_000.0)?;
    let v = shocked_portfolio_value(&spec, &r)?;
    println!("portfolio {:.0} -> {:.0} ({:+.2}%)", v.value_before, v.value_after, v.change * 100.0);

    let adj = load_adjacency(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/adjacency.csv"), 0.0)?;
    let shock = ShockVector::new(labels, vec![-0.2, 0.0, -0.01])?;
    let r = propagate(&adj, &shock)?;
    println!("adjacency: {:?}", r.delta);
    Ok(())
}

#[allow(dead_code)]
fn main() -> cryptorisk::Result<()> {
    run_example()
}
