//! Interval reservations on a two-stream link: a third overlapping stream is
//! refused, and releasing one early frees the rest of its window.

use vodsim::sim::{BandwidthLedger, Hop, LinkId};
use vodsim::topology::{LinkClass, LinkTable, NodeId};

fn main() {
    let tr = NodeId::Tracker { lpsg: 0 };
    let link = LinkId::MmsTr(tr);
    let mut ledger = BandwidthLedger::new(LinkTable::default().with_capacity(LinkClass::MmsTr, 2));

    let a = ledger.reserve(&[Hop::new(link, 0.0, 120.0)]).unwrap();
    let _b = ledger.reserve(&[Hop::new(link, 30.0, 150.0)]).unwrap();
    match ledger.reserve(&[Hop::new(link, 60.0, 90.0)]) {
        Ok(_) => println!("third stream admitted"),
        Err(e) => println!("third stream refused: {e}"),
    }
    ledger.release(a, 45.0);
    println!("after early release at 45: load at 60 = {}", ledger.load_at(link, 60.0));
    let c = ledger.reserve(&[Hop::new(link, 60.0, 90.0)]).unwrap();
    ledger.release(c, 90.0);
    println!("MMS minutes so far {:.1}, audit {:?}", ledger.used_minutes(LinkClass::MmsTr), ledger.audit());
}
