//! Default topology: node counts, ring neighbours and the startup delay of
//! each delivery path.

use vodsim::routing::{startup_path, DecisionKind};
use vodsim::topology::{build_topology, path_delay, LinkTable, NodeId};

fn main() -> vodsim::Result<()> {
    let topo = build_topology(6, 6, 25, LinkTable::default())?;
    println!("{} nodes", topo.node_count());
    for tr in topo.trackers() {
        let ring: Vec<String> = topo.ring_neighbors(tr).iter().map(|n| n.to_string()).collect();
        println!("{tr} neighbours {}", ring.join(" "));
    }

    for kind in DecisionKind::ALL.into_iter().filter(|k| *k != DecisionKind::Reject) {
        let hops = startup_path(kind);
        let names: Vec<&str> = hops.iter().map(|h| h.name()).collect();
        println!("{:<22} {:>6} ms  {}", kind.name(), path_delay(&topo, &hops), names.join(" + "));
    }

    let c = NodeId::Client { lpsg: 2, ps: 4, client: 7 };
    println!("{c}: proxy {}, tracker {}", c.proxy().unwrap(), c.tracker().unwrap());
    Ok(())
}
