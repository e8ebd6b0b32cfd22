//! Five clients share one chain; the fourth crashes mid-stream and the fifth
//! is re-attached to the third after the detection timeout.

use vodsim::catalog::{Catalog, Video, VideoId};
use vodsim::placement::PlanEntry;
use vodsim::sim::{run_scripted, Arrival, FaultKind, RunConfig, Script, ScriptedFault};
use vodsim::topology::NodeId;

fn main() -> vodsim::Result<()> {
    let cfg = RunConfig {
        lpsgs: 1,
        ps_per_lpsg: 1,
        clients_per_ps: 5,
        max_arrivals: None,
        early_depart_prob: 0.0,
        failure_rate_per_hour: 0.0,
        ..RunConfig::default()
    };
    let ps = NodeId::Proxy { lpsg: 0, ps: 0 };
    let script = Script {
        catalog: Some(Catalog::new(vec![Video::new(VideoId(1), 100.0, 200.0)?])?),
        arrivals: Some(
            (0..5)
                .map(|i| Arrival { time_min: i as f64, client: NodeId::Client { lpsg: 0, ps: 0, client: i }, video: VideoId(1) })
                .collect(),
        ),
        placement: Some(vec![(0, VideoId(1), PlanEntry { host_ps: Some(ps), w1_min: 20.0, w2_min: 16.0, host_tr: Some(NodeId::Tracker { lpsg: 0 }) })]),
        faults: vec![ScriptedFault { session: 3, time_min: 50.0, kind: FaultKind::Fail }],
    };
    let out = run_scripted(&cfg, &script)?;
    print!("{}", out.trace_text());
    for r in &out.recoveries {
        let after: Vec<String> = r.chain_after.iter().map(|m| m.to_string()).collect();
        println!("\n{} failed; {:?} now fed by {:?}; chain {}", r.failed, r.child, r.new_parent, after.join(" -> "));
    }
    for s in &out.sessions {
        println!("{}: {:?}, {:.1} of {} min, stalled {} s", s.member, s.status, s.delivered_min(), s.duration_min, s.stall_sec);
    }
    Ok(())
}
