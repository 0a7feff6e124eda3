//! Regenerates the synthetic market history in `fixtures/`.
//!
//! Prices follow a geometric random walk with 60% annual volatility; the
//! network hash-rate grows exponentially with multiplicative noise. The seed
//! is fixed so the files are reproducible.
//!
//! Usage: cargo run -p asicval-core --example make_fixtures -- <out-dir>

use asicval_core::data_io::{write_series_csv, DatedSeries, SeriesKind};
use chrono::{Days, NaiveDate};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 20_190_101;
const DAYS: u64 = 2 * 365 + 240;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let start = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
    let mut rng = StdRng::seed_from_u64(SEED);

    let dt: f64 = 1.0 / 365.0;
    let (sigma, drift) = (0.6f64, 0.4f64);
    let shock = Normal::new(0.0, sigma * dt.sqrt())?;
    let noise = Normal::new(0.0, 0.03)?;

    let mut price = 1000.0f64;
    let mut prices = Vec::new();
    let mut hashes = Vec::new();
    for day in 0..DAYS {
        let date = start + Days::new(day);
        prices.push((date, (price * 100.0).round() / 100.0));
        let trend = 5e18 * (0.002 * day as f64).exp();
        let z: f64 = noise.sample(&mut rng);
        let h = trend * z.exp();
        hashes.push((date, (h / 1e12).round() * 1e12));
        price *= ((drift - 0.5 * sigma * sigma) * dt + shock.sample(&mut rng)).exp();
    }

    write_series_csv(
        &DatedSeries::new(prices)?,
        SeriesKind::Price,
        format!("{out}/prices.csv"),
    )?;
    write_series_csv(
        &DatedSeries::new(hashes)?,
        SeriesKind::HashRate,
        format!("{out}/hashrate.csv"),
    )?;
    Ok(())
}
