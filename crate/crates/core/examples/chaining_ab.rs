//! Chaining on vs. off on the default scenario, ten seeds, with a paired
//! no-proxy baseline for the server-load figure.

use vodsim::metrics::summary_table;
use vodsim::sim::{run, RunConfig};

fn main() -> vodsim::Result<()> {
    let mut on = Vec::new();
    let mut off = Vec::new();
    for seed in 1..=10 {
        let base = RunConfig { seed, ..RunConfig::default() };
        let baseline = run(&RunConfig { no_proxy_baseline: true, ..base.clone() })?.report;
        let mut a = run(&base)?.report;
        let mut b = run(&RunConfig { chaining: false, ..base })?.report;
        a.pair_with_baseline(&baseline);
        b.pair_with_baseline(&baseline);
        println!(
            "seed {seed:2}: served in LPSG {:.3} vs {:.3}  (VHR {:.3}, wan {:.3}, load cut {:.3})",
            a.lpsg_served_fraction(),
            b.lpsg_served_fraction(),
            a.vhr,
            a.wan_fraction,
            a.server_load_reduction.unwrap_or(0.0),
        );
        on.push(a);
        off.push(b);
    }
    println!();
    print!(
        "{}",
        summary_table(&[("PC+Chaining", on.iter().collect()), ("PC-Chaining", off.iter().collect())])
    );
    Ok(())
}
