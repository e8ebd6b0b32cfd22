#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vodsim::catalog::{Catalog, Video, VideoId};
use vodsim::placement::PlanEntry;
use vodsim::routing::DecisionKind;
use vodsim::sim::{Arrival, FaultKind, RunConfig, RunOutput, Script, ScriptedFault, SessionStatus};
use vodsim::topology::{LinkClass, LinkTable, NodeId};

pub fn client(lpsg: u32, ps: u32, client: u32) -> NodeId {
    NodeId::Client { lpsg, ps, client }
}

pub fn proxy(lpsg: u32, ps: u32) -> NodeId {
    NodeId::Proxy { lpsg, ps }
}

pub fn catalog(lengths: &[f64]) -> Catalog {
    let videos = lengths
        .iter()
        .enumerate()
        .map(|(i, &s)| Video::new(VideoId(i as u32 + 1), s, 200.0).unwrap())
        .collect();
    Catalog::new(videos).unwrap()
}

pub fn quiet(lpsgs: u32, ps: u32, clients: u32) -> RunConfig {
    RunConfig {
        duration_min: 1000.0,
        max_arrivals: None,
        early_depart_prob: 0.0,
        failure_rate_per_hour: 0.0,
        lpsgs,
        ps_per_lpsg: ps,
        clients_per_ps: clients,
        ..RunConfig::default()
    }
}

pub fn at(time_min: f64, client: NodeId, video: u32) -> Arrival {
    Arrival { time_min, client, video: VideoId(video) }
}

/// Five clients of one proxy join a single chain one minute apart; the
/// fourth dies at minute 50.
pub fn five_chain() -> (RunConfig, Script) {
    let cfg = quiet(1, 1, 5);
    let entry = PlanEntry { host_ps: Some(proxy(0, 0)), w1_min: 20.0, w2_min: 16.0, host_tr: Some(NodeId::Tracker { lpsg: 0 }) };
    let script = Script {
        catalog: Some(catalog(&[100.0])),
        arrivals: Some((0..5).map(|i| at(i as f64, client(0, 0, i), 1)).collect()),
        placement: Some(vec![(0, VideoId(1), entry)]),
        faults: vec![ScriptedFault { session: 3, time_min: 50.0, kind: FaultKind::Fail }],
    };
    (cfg, script)
}

/// Twelve requests on two LPSGs of two proxies with three MMS uplink slots
/// per tracker.
pub fn twelve_requests() -> (RunConfig, Script) {
    let mut cfg = quiet(2, 2, 3);
    cfg.links = LinkTable::default().with_capacity(LinkClass::MmsTr, 3);
    let tr0 = Some(NodeId::Tracker { lpsg: 0 });
    let tr1 = Some(NodeId::Tracker { lpsg: 1 });
    let placement = vec![
        (0, VideoId(1), PlanEntry { host_ps: Some(proxy(0, 0)), w1_min: 20.0, w2_min: 16.0, host_tr: tr0 }),
        (0, VideoId(2), PlanEntry { host_ps: Some(proxy(0, 1)), w1_min: 10.0, w2_min: 9.0, host_tr: tr0 }),
        (1, VideoId(3), PlanEntry { host_ps: Some(proxy(1, 0)), w1_min: 20.0, w2_min: 16.0, host_tr: tr1 }),
    ];
    let arrivals = vec![
        at(0.0, client(0, 0, 0), 1),
        at(1.0, client(0, 0, 1), 1),
        at(2.0, client(0, 1, 0), 1),
        at(3.0, client(0, 0, 2), 2),
        at(4.0, client(0, 1, 1), 3),
        at(5.0, client(1, 0, 0), 4),
        at(6.0, client(1, 1, 0), 4),
        at(7.0, client(1, 1, 1), 4),
        at(10.0, client(1, 1, 2), 4),
        at(30.0, client(0, 1, 2), 1),
        at(31.0, client(1, 0, 1), 3),
        at(32.0, client(1, 0, 2), 1),
    ];
    let script = Script {
        catalog: Some(catalog(&[100.0; 4])),
        arrivals: Some(arrivals),
        placement: Some(placement),
        faults: Vec::new(),
    };
    (cfg, script)
}

/// Expected decision and chain parent (by arrival index) for each of the
/// twelve requests, worked out by hand.
pub fn twelve_expected() -> Vec<(DecisionKind, Option<u64>)> {
    use DecisionKind::*;
    vec![
        // v1 pref-1 on the requester's own proxy
        (NewStreamLocal, None),
        (JoinChain, Some(0)),
        // another proxy of the same LPSG, still within 20 min of the tail
        (JoinChain, Some(1)),
        // v2 lives on the sibling proxy
        (StreamPeerPs, None),
        // v3 only in LPSG 1
        (StreamNeighborLpsg, None),
        // v4 cached nowhere; the miss seeds a 5 min prefix on proxy 1.0
        (FetchMms, None),
        (StreamPeerPs, None),
        (JoinChain, Some(6)),
        (JoinChain, Some(7)),
        // 28 min after the tail, and tracker 0 already carries three MMS streams
        (Reject, None),
        (NewStreamLocal, None),
        // v1 is in LPSG 0 but the remainder needs tracker 1's MMS link, now full
        (Reject, None),
    ]
}

/// Small run with heavy churn and tight links, fully determined by `case`.
pub fn random_config(case: u64) -> RunConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(case);
    let mut links = LinkTable::default();
    for class in LinkClass::ALL {
        let cap = links.capacity(class);
        links = links.with_capacity(class, rng.gen_range(1..=cap.min(8)));
    }
    RunConfig {
        seed: case,
        duration_min: rng.gen_range(150.0..400.0),
        arrival_rate_per_hour: rng.gen_range(10.0..60.0),
        max_arrivals: Some(rng.gen_range(20..120)),
        n_videos: rng.gen_range(1..6),
        min_video_min: 20,
        max_video_min: rng.gen_range(20..90),
        d: rng.gen_range(1..5),
        g_sec: rng.gen_range(0.0..60.0),
        early_depart_prob: rng.gen_range(0.0..0.6),
        failure_rate_per_hour: rng.gen_range(0.0..3.0),
        chaining: rng.gen_bool(0.8),
        lpsgs: rng.gen_range(1..4),
        ps_per_lpsg: rng.gen_range(1..4),
        clients_per_ps: rng.gen_range(1..6),
        links,
        mms_cache_min: rng.gen_range(0.0..300.0),
        window_min: rng.gen_range(10.0..90.0),
        x_scale: rng.gen_range(0.2..1.5),
        ..RunConfig::default()
    }
}

/// Problems an independent reading of one run's records can find.
pub fn audit_run(out: &RunOutput) -> Vec<String> {
    let mut why = Vec::new();
    for j in &out.joins {
        let gap = j.time_min - j.parent_arrival_min;
        if !(gap > 0.0 && gap <= j.sz_pref1_min) || !j.parent_was_tail {
            why.push(format!("join {:?} -> {:?} gap {gap} sz {}", j.member, j.parent, j.sz_pref1_min));
        }
    }
    for r in &out.recoveries {
        let mut seen = r.chain_after.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != r.chain_after.len() || r.chain_after.contains(&r.failed) {
            why.push(format!("chain after recovery {:?}", r.chain_after));
        }
    }
    for s in &out.sessions {
        let mut at = 0.0;
        for &(a, b) in &s.delivered {
            if (a - at).abs() > 1e-6 || b < a {
                why.push(format!("{:?} delivery gap at {a}", s.member));
            }
            at = b;
        }
        if at > s.duration_min + 1e-6 {
            why.push(format!("{:?} over-delivered {at}", s.member));
        }
        if s.status == SessionStatus::Finished && !s.delivery_complete() {
            why.push(format!("{:?} finished with {:.3} of {}", s.member, s.delivered_min(), s.duration_min));
        }
    }
    if let Err(e) = out.ledger.audit() {
        why.push(format!("ledger audit: {e}"));
    }
    if out.ledger.outstanding() != 0 {
        why.push(format!("{} reservations outstanding", out.ledger.outstanding()));
    }
    why
}

