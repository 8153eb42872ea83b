// Writes the bundled synthetic price files.
//
// `cargo run --example generate_fixtures [DIR]`, default `fixtures/`.
//
// | file      | seed | start      | S0    | daily mu | daily sigma | gaps            |
// |-----------|------|------------|-------|----------|-------------|-----------------|
// | btc.csv   | 7001 | 2023-01-01 | 30000 | 0.0012   | 0.045       | none            |
// | eth.csv   | 7001 | 2023-01-01 | 2000  | 0.0015   | 0.052       | every 29th day  |
// | usdt.csv  | 7003 | 2023-01-04 | 1.0   | 0        | 0.0004      | every 41st day  |
//
// BTC and ETH share one generator and have correlation 0.85. USDT is an
// independent mean-reverting wobble around the peg.

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const DAYS: usize = 400;

fn write_series(path: &Path, start: NaiveDate, prices: &[f64], skip_every: Option<usize>) -> std::io::Result<()> {
    let mut out = String::from("Date,Close\n");
    for (i, p) in prices.iter().enumerate() {
        // keep first and last rows so the span is fixed
        if let Some(k) = skip_every {
            if i > 0 && i + 1 < prices.len() && i % k == 0 {
                continue;
            }
        }
        let date = start + Duration::days(i as i64);
        out.push_str(&format!("{},{:.6}\n", date.format("%Y-%m-%d"), p));
    }
    std::fs::write(path, out)
}

pub fn write_fixtures(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let start = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(7001);
    let rho: f64 = 0.85;
    let (mut btc, mut eth) = (vec![30000.0], vec![2000.0]);
    for _ in 1..DAYS {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let z_eth = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
        let b = btc.last().unwrap() * ((0.0012 - 0.5 * 0.045f64.powi(2)) + 0.045 * z1).exp();
        let e = eth.last().unwrap() * ((0.0015 - 0.5 * 0.052f64.powi(2)) + 0.052 * z_eth).exp();
        btc.push(b);
        eth.push(e);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7003);
    let mut usdt = vec![1.0];
    for _ in 1..DAYS - 3 {
        let z: f64 = StandardNormal.sample(&mut rng);
        let prev = usdt.last().unwrap();
        usdt.push(prev + 0.3 * (1.0 - prev) + 0.0004 * z);
    }

    let paths = vec![dir.join("btc.csv"), dir.join("eth.csv"), dir.join("usdt.csv")];
    write_series(&paths[0], start, &btc, None)?;
    write_series(&paths[1], start, &eth, Some(29))?;
    write_series(&paths[2], start + Duration::days(3), &usdt, Some(41))?;
    Ok(paths)
}

pub fn run_example() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    for p in write_fixtures(&dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> std::io::Result<()> {
    run_example()
}
