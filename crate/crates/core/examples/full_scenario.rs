// Run the bundled four-module scenario in memory and print the headline
// numbers. The CLI's `run` does the same and writes the files.

use std::path::Path;

use cryptorisk::scenario::{emit_plot_data, execute, ScenarioConfig};

pub fn run_example() -> cryptorisk::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenario.toml");
    let config = ScenarioConfig::from_path(&path)?;
    let run = execute(&config)?;
    let body = &run.body;

    println!("mu_p {:.5}  sigma_p {:.5}", body.portfolio.mu_p, body.portfolio.sigma_p);
    if let Some(stress) = &body.stress {
        let r = &stress.results[0];
        println!("stress delta {}: V_{} = {:.2}", r.delta, r.horizon, r.terminal_value);
    }
    if let Some(c) = &body.contagion {
        println!("contagion: portfolio change {:+.2}%", c.portfolio.change * 100.0);
    }
    if let Some(mc) = &body.montecarlo {
        println!(
            "monte carlo: VaR {:.0}  ES {:.0}  P(loss) {:.3}",
            mc.risk.var_alpha, mc.risk.es_alpha, mc.risk.loss_probability
        );
    }
    let (files, _) = emit_plot_data(&run, 10);
    for f in files {
        println!("{} ({} lines)", f.name, f.contents.lines().count());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> cryptorisk::Result<()> {
    run_example()
}
