use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cryptorisk::scenario::{run_scenario, ScenarioConfig};
use cryptorisk::Error;

#[derive(Parser)]
#[command(name = "cryptorisk", version, about = "Crypto portfolio risk scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the report and plot data.
    Run {
        config: PathBuf,
        /// Overrides the Monte Carlo seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario config without running it.
    Validate { config: PathBuf },
}

fn fail(err: &Error) -> ExitCode {
    let payload = serde_json::json!({
        "error": {
            "category": format!("{:?}", err.category()).to_lowercase(),
            "module": err.module(),
            "message": err.cause().to_string(),
        }
    });
    eprintln!("{payload}");
    ExitCode::from(err.category().exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => ScenarioConfig::from_path(&config)
            .and_then(|cfg| cfg.validate())
            .map(|()| println!("{}: ok", config.display())),
        Command::Run { config, seed, out } => ScenarioConfig::from_path(&config)
            .and_then(|mut cfg| {
                if let Some(seed) = seed {
                    cfg.set_seed(seed);
                }
                if let Some(out) = out {
                    cfg.outputs.dir = std::env::current_dir()
                        .map(|cwd| cwd.join(&out))
                        .unwrap_or(out);
                }
                run_scenario(&cfg)
            })
            .map(|outcome| {
                for w in &outcome.warnings {
                    eprintln!("warning: {w}");
                }
                println!("{}", outcome.report_path.display());
                for p in &outcome.plot_paths {
                    println!("{}", p.display());
                }
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
