//! Hand-built workload on two LPSGs that exercises every delivery decision,
//! including a rejection once the main server uplink is full.

use vodsim::catalog::{Catalog, Video, VideoId};
use vodsim::placement::PlanEntry;
use vodsim::sim::{run_scripted, Arrival, RunConfig, Script};
use vodsim::topology::{LinkClass, LinkTable, NodeId};

fn c(lpsg: u32, ps: u32, client: u32) -> NodeId {
    NodeId::Client { lpsg, ps, client }
}

fn main() -> vodsim::Result<()> {
    let cfg = RunConfig {
        lpsgs: 2,
        ps_per_lpsg: 2,
        clients_per_ps: 3,
        max_arrivals: None,
        early_depart_prob: 0.0,
        failure_rate_per_hour: 0.0,
        links: LinkTable::default().with_capacity(LinkClass::MmsTr, 3),
        ..RunConfig::default()
    };
    let entry = |lpsg, ps, w1, w2| PlanEntry {
        host_ps: Some(NodeId::Proxy { lpsg, ps }),
        w1_min: w1,
        w2_min: w2,
        host_tr: Some(NodeId::Tracker { lpsg }),
    };
    let requests = [
        (0.0, c(0, 0, 0), 1),
        (1.0, c(0, 0, 1), 1),
        (2.0, c(0, 1, 0), 1),
        (3.0, c(0, 0, 2), 2),
        (4.0, c(0, 1, 1), 3),
        (5.0, c(1, 0, 0), 4),
        (6.0, c(1, 1, 0), 4),
        (7.0, c(1, 1, 1), 4),
        (10.0, c(1, 1, 2), 4),
        (30.0, c(0, 1, 2), 1),
        (31.0, c(1, 0, 1), 3),
        (32.0, c(1, 0, 2), 1),
    ];
    let script = Script {
        catalog: Some(Catalog::new((1..=4).map(|i| Video::new(VideoId(i), 100.0, 200.0)).collect::<vodsim::Result<_>>()?)?),
        arrivals: Some(requests.iter().map(|&(t, client, v)| Arrival { time_min: t, client, video: VideoId(v) }).collect()),
        placement: Some(vec![
            (0, VideoId(1), entry(0, 0, 20.0, 16.0)),
            (0, VideoId(2), entry(0, 1, 10.0, 9.0)),
            (1, VideoId(3), entry(1, 0, 20.0, 16.0)),
        ]),
        faults: Vec::new(),
    };
    let out = run_scripted(&cfg, &script)?;
    for s in &out.sessions {
        println!("{:5.1}  {}  {}  {:<22} {:>6} ms", s.arrival_min, s.client, s.video, s.kind.name(), s.wait_ms);
    }
    println!();
    for (kind, n) in vodsim::routing::DecisionKind::ALL.iter().zip(out.report.source_breakdown.0) {
        println!("{:<22} {n}", kind.name());
    }
    Ok(())
}
