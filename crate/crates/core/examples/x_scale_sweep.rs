//! Grows every prefix by scaling the popularity estimate and prints the
//! resulting CSV, one row per scale.

use vodsim::metrics::emit_csv;
use vodsim::sim::{run, RunConfig};

fn main() -> vodsim::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scales = [0.1, 0.2, 0.3, 0.4, 0.5];
    let mut reports = Vec::new();
    for &x_scale in &scales {
        let cfg = RunConfig { seed, x_scale, ..RunConfig::default() };
        reports.push(run(&cfg)?.report);
    }
    print!("{}", emit_csv(scales.iter().zip(&reports).map(|(&k, r)| (k, seed, r))));
    Ok(())
}
