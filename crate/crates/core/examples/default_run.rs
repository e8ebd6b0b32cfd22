//! One run of the default configuration and its headline numbers.

use vodsim::routing::DecisionKind;
use vodsim::sim::{run, RunConfig};

fn main() -> vodsim::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let out = run(&RunConfig { seed, ..RunConfig::default() })?;
    let m = &out.report;
    println!("requests {}  served {}  rejected {}", m.r, m.q, m.n_rej);
    println!("VHR {:.3}  WAN fraction {:.3}  mean wait {:.1} ms", m.vhr, m.wan_fraction, m.y_wait_ms);
    for kind in DecisionKind::ALL {
        println!("  {:<22} {}", kind.name(), m.source_breakdown.get(kind));
    }
    println!("longest chain {}, {} failures repaired", out.max_chain_len, out.recoveries.len());
    Ok(())
}
