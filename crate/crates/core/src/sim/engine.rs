use rand::Rng;

use crate::catalog::{estimate_popularity, Catalog, LoggedRequest, PopularityEstimate, VideoId, ZipfModel};
use crate::chaining::{close_early, close_finished, detect_and_recover_failure, CloseOutcome, MemberId, NodeState, SclEntry, SclTable, SpliceOutcome, Upstream};
use crate::error::{Error, Result};
use crate::metrics::{finalize, Accumulator};
use crate::placement::{cache_on_miss, distribute_videos, CacheState, PrefixPlan};
use crate::routing::{lookup_pref1, lpsg_segments, mms_segments, route, segment_hops, DecisionKind, RouteState, Segment};
use crate::sim::arrivals::{poisson_arrivals, Arrival, ARRIVAL_STREAM, WARMUP_STREAM};
use crate::sim::events::{Event, EventKind, EventQueue};
use crate::sim::ledger::{BandwidthLedger, LinkId, ReservationId};
use crate::sim::trace::TraceRecord;
use crate::sim::{stream_rng, FaultKind, JoinRecord, RecoveryEvent, RunConfig, RunOutput, Script, SessionStatus, SessionSummary};
use crate::topology::{build_topology, path_delay, NodeId, NodeKind, Topology};

const CATALOG_STREAM: u64 = 1;
const BEHAVIOR_STREAM: u64 = 3 << 32;
const POS_EPS: f64 = 1e-7;

struct Feed {
    reservation: ReservationId,
    start_time: f64,
    position: f64,
    segments: Vec<Segment>,
}

struct Session {
    id: MemberId,
    arrival: Arrival,
    duration: f64,
    admitted_as: DecisionKind,
    kind: DecisionKind,
    wait_ms: f64,
    status: Option<SessionStatus>,
    feed: Option<Feed>,
    position: f64,
    stall_sec: f64,
    stalled_until: Option<f64>,
    stall_gen: u64,
    end_gen: u64,
    delivered: Vec<(f64, f64)>,
}

impl Session {
    fn playing(&self) -> bool {
        self.status == Some(SessionStatus::Playing)
    }

    fn end_time(&self) -> f64 {
        self.arrival.time_min + self.duration + self.stall_sec / 60.0
    }
}

pub(crate) struct Engine<'a> {
    cfg: &'a RunConfig,
    topo: Topology,
    catalog: Catalog,
    plans: Vec<PrefixPlan>,
    initial_plans: Vec<PrefixPlan>,
    cache: CacheState,
    scl: SclTable,
    ledger: BandwidthLedger,
    queue: EventQueue,
    clock: f64,
    sessions: Vec<Session>,
    logs: Vec<Vec<LoggedRequest>>,
    estimates: Vec<PopularityEstimate>,
    acc: Accumulator,
    trace: Vec<TraceRecord>,
    joins: Vec<JoinRecord>,
    recoveries: Vec<RecoveryEvent>,
    feeds_open: usize,
    max_chain_len: usize,
    notes: Vec<String>,
}

fn invariant(t: f64, msg: impl Into<String>) -> Error {
    Error::invariant(t, msg)
}

impl<'a> Engine<'a> {
    pub(crate) fn new(cfg: &'a RunConfig, script: &Script) -> Result<Self> {
        let topo = build_topology(cfg.lpsgs, cfg.ps_per_lpsg, cfg.clients_per_ps, cfg.links.clone())?;
        let catalog = match &script.catalog {
            Some(c) => c.clone(),
            None => Catalog::generate(
                cfg.n_videos,
                cfg.min_video_min,
                cfg.max_video_min,
                cfg.playback_rate,
                &mut stream_rng(cfg.seed, CATALOG_STREAM),
            )?,
        };
        if catalog.is_empty() {
            return Err(Error::invalid("catalog is empty"));
        }
        let zipf = ZipfModel::new(catalog.len(), cfg.zipf_exponent)?;

        let arrivals = match &script.arrivals {
            Some(a) => {
                for (i, x) in a.iter().enumerate() {
                    if x.client.kind() != NodeKind::Client || !topo.contains(x.client) {
                        return Err(Error::invalid(format!("arrival {i}: {} is not a client", x.client)));
                    }
                    if catalog.get(x.video).is_none() {
                        return Err(Error::invalid(format!("arrival {i}: unknown video {}", x.video)));
                    }
                    if i > 0 && x.time_min < a[i - 1].time_min {
                        return Err(Error::invalid(format!("arrival {i} is out of time order")));
                    }
                }
                a.clone()
            }
            None => {
                let mut a = poisson_arrivals(cfg.seed, ARRIVAL_STREAM, cfg.arrival_rate_per_hour, 0.0, cfg.duration_min, &zipf, &topo);
                if let Some(cap) = cfg.max_arrivals {
                    a.truncate(cap);
                }
                a
            }
        };

        // request history from the window before the run seeds the first estimate
        let mut logs = vec![Vec::new(); topo.lpsgs() as usize];
        if script.arrivals.is_none() {
            let warm = poisson_arrivals(cfg.seed, WARMUP_STREAM, cfg.arrival_rate_per_hour, -cfg.window_min, 0.0, &zipf, &topo);
            for w in warm {
                logs[w.client.lpsg().unwrap() as usize].push(LoggedRequest {
                    time_min: w.time_min,
                    video: w.video,
                });
            }
        }

        let mut engine = Self {
            cfg,
            plans: (0..topo.lpsgs()).map(PrefixPlan::empty).collect(),
            initial_plans: Vec::new(),
            cache: CacheState::new(&topo, cfg.ps_cache_min(), cfg.tr_cache_min())?,
            ledger: BandwidthLedger::new(cfg.links.clone()),
            scl: SclTable::new(),
            queue: EventQueue::new(),
            clock: 0.0,
            sessions: Vec::with_capacity(arrivals.len()),
            logs,
            estimates: Vec::new(),
            acc: Accumulator::default(),
            trace: Vec::new(),
            joins: Vec::new(),
            recoveries: Vec::new(),
            feeds_open: 0,
            max_chain_len: 0,
            notes: Vec::new(),
            catalog,
            topo,
        };
        engine.refresh_estimates(0.0)?;

        if !cfg.no_proxy_baseline {
            match &script.placement {
                Some(entries) => {
                    for &(lpsg, video, entry) in entries {
                        let Some(v) = engine.catalog.get(video) else {
                            return Err(Error::invalid(format!("placement names unknown video {video}")));
                        };
                        if lpsg >= engine.topo.lpsgs() {
                            return Err(Error::invalid(format!("placement names unknown LPSG {lpsg}")));
                        }
                        if entry.w1_min + entry.w2_min > v.duration_min {
                            return Err(Error::invalid(format!("prefixes of {video} exceed its length")));
                        }
                        if let Some(h) = entry.host_ps {
                            if h.lpsg() != Some(lpsg) || h.kind() != NodeKind::Proxy {
                                return Err(Error::invalid(format!("{h} is not a proxy of LPSG {lpsg}")));
                            }
                            engine.cache.insert(h, video, entry.w1_min)?;
                        }
                        if let Some(t) = entry.host_tr {
                            if t != (NodeId::Tracker { lpsg }) {
                                return Err(Error::invalid(format!("{t} is not the tracker of LPSG {lpsg}")));
                            }
                            engine.cache.insert(t, video, entry.w2_min)?;
                        }
                        engine.plans[lpsg as usize].set(video, entry);
                    }
                }
                None => {
                    for lpsg in 0..engine.topo.lpsgs() {
                        let plan = distribute_videos(&engine.catalog, &engine.estimates[lpsg as usize], &engine.topo, lpsg, &mut engine.cache)?;
                        engine.plans[lpsg as usize] = plan;
                    }
                }
            }
        }
        engine.initial_plans = engine.plans.clone();

        for (i, a) in arrivals.iter().enumerate() {
            let id = MemberId(i as u64);
            engine.queue.push(a.time_min, EventKind::Arrival { session: id });
            engine.sessions.push(Session {
                id,
                arrival: *a,
                duration: engine.catalog.get(a.video).expect("validated").duration_min,
                admitted_as: DecisionKind::Reject,
                kind: DecisionKind::Reject,
                wait_ms: 0.0,
                status: None,
                feed: None,
                position: 0.0,
                stall_sec: 0.0,
                stalled_until: None,
                stall_gen: 0,
                end_gen: 0,
                delivered: Vec::new(),
            });
        }
        for f in &script.faults {
            if f.session as usize >= engine.sessions.len() {
                return Err(Error::invalid(format!("scripted fault names unknown session {}", f.session)));
            }
            let session = MemberId(f.session);
            let kind = match f.kind {
                FaultKind::Fail => EventKind::Fail { session },
                FaultKind::Depart => EventKind::EarlyDepart { session },
            };
            engine.queue.push(f.time_min, kind);
        }
        let last = arrivals.last().map_or(0.0, |a| a.time_min).min(cfg.duration_min);
        let mut k = 1.0;
        while k * cfg.window_min <= last {
            engine.queue.push(k * cfg.window_min, EventKind::PopularityTick);
            k += 1.0;
        }
        Ok(engine)
    }

    fn refresh_estimates(&mut self, now: f64) -> Result<()> {
        let ids: Vec<VideoId> = self.catalog.ids().collect();
        self.estimates = self
            .logs
            .iter()
            .map(|log| estimate_popularity(log, ids.iter().copied(), self.cfg.window_min, now, self.cfg.x_clamp).scaled(self.cfg.x_scale))
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub(crate) fn run(mut self) -> Result<RunOutput> {
        while let Some(ev) = self.queue.pop() {
            if ev.time_min > self.cfg.duration_min {
                break;
            }
            if ev.time_min < self.clock {
                return Err(invariant(ev.time_min, format!("event {} before clock {}", ev.kind, self.clock)));
            }
            self.clock = ev.time_min;
            self.handle(ev)?;
            self.check(ev.time_min)?;
        }

        // anyone still playing is cut off at the horizon
        let end = self.cfg.duration_min.max(self.clock);
        for i in 0..self.sessions.len() {
            if self.sessions[i].playing() {
                self.end_feed(i, end)?;
                self.sessions[i].status = Some(SessionStatus::Truncated);
            }
        }
        if self.ledger.outstanding() != 0 {
            return Err(invariant(end, format!("{} reservations never released", self.ledger.outstanding())));
        }
        self.ledger.audit().map_err(|m| invariant(end, m))?;
        let wan_ledger = self.ledger.used_minutes(crate::topology::LinkClass::MmsTr);
        if (wan_ledger - self.acc.wan_minutes).abs() > 1e-6 * wan_ledger.max(1.0) {
            return Err(invariant(end, format!("WAN minutes {} disagree with MMS link usage {wan_ledger}", self.acc.wan_minutes)));
        }
        let report = finalize(&self.acc);
        report.check_identities().map_err(|m| invariant(end, m))?;

        let sessions = self
            .sessions
            .iter()
            .map(|s| SessionSummary {
                member: s.id,
                client: s.arrival.client,
                video: s.arrival.video,
                arrival_min: s.arrival.time_min,
                duration_min: s.duration,
                kind: s.kind,
                admitted_as: s.admitted_as,
                wait_ms: s.wait_ms,
                status: s.status.unwrap_or(SessionStatus::Truncated),
                delivered: s.delivered.clone(),
                stall_sec: s.stall_sec,
            })
            .collect();
        Ok(RunOutput {
            report,
            trace: self.trace,
            sessions,
            joins: self.joins,
            recoveries: self.recoveries,
            ledger: self.ledger,
            initial_plans: self.initial_plans,
            max_chain_len: self.max_chain_len,
        })
    }

    fn handle(&mut self, ev: Event) -> Result<()> {
        self.notes.clear();
        let t = ev.time_min;
        let (node, video, fresh) = match ev.kind {
            EventKind::Arrival { session } => {
                let i = session.0 as usize;
                self.arrive(i, t)?;
                (self.sessions[i].arrival.client.to_string(), self.sessions[i].arrival.video.to_string(), true)
            }
            EventKind::PlaybackEnd { session, generation } => {
                let i = session.0 as usize;
                let s = &self.sessions[i];
                let fresh = s.playing() && s.end_gen == generation;
                if fresh {
                    self.finish(i, t)?;
                }
                (self.sessions[i].arrival.client.to_string(), self.sessions[i].arrival.video.to_string(), fresh)
            }
            EventKind::EarlyDepart { session } => {
                let i = session.0 as usize;
                let fresh = self.sessions[i].playing();
                if fresh {
                    self.leave(i, t, SessionStatus::Departed)?;
                }
                (self.sessions[i].arrival.client.to_string(), self.sessions[i].arrival.video.to_string(), fresh)
            }
            EventKind::Fail { session } => {
                let i = session.0 as usize;
                let fresh = self.sessions[i].playing();
                if fresh {
                    self.fail(i, t)?;
                }
                (self.sessions[i].arrival.client.to_string(), self.sessions[i].arrival.video.to_string(), fresh)
            }
            EventKind::FailDetect { child, failed, generation } => {
                let i = child.0 as usize;
                let s = &self.sessions[i];
                let fresh = s.playing() && s.stall_gen == generation && s.stalled_until.is_some();
                if fresh {
                    self.notes.push(format!("failed={failed}"));
                    self.resume(i, t)?;
                }
                (self.sessions[i].arrival.client.to_string(), self.sessions[i].arrival.video.to_string(), fresh)
            }
            EventKind::PopularityTick => {
                self.refresh_estimates(t)?;
                let top: Vec<String> = self.estimates[0].ranking().iter().take(3).map(|v| v.to_string()).collect();
                self.notes.push(format!("lpsg0_top={}", top.join("/")));
                ("-".into(), "-".into(), true)
            }
        };
        let mut detail = if fresh { self.notes.join(" ") } else { "stale".to_string() };
        if let EventKind::Arrival { session } | EventKind::PlaybackEnd { session, .. } | EventKind::EarlyDepart { session } | EventKind::Fail { session } = ev.kind {
            detail = format!("{session} {detail}");
        }
        self.trace.push(TraceRecord {
            time_min: t,
            seq: ev.seq,
            kind: ev.kind.name(),
            node,
            video,
            detail: detail.trim_end().to_string(),
        });
        Ok(())
    }

    fn arrive(&mut self, i: usize, t: f64) -> Result<()> {
        let Arrival { client, video, .. } = self.sessions[i].arrival;
        let id = self.sessions[i].id;
        let s_len = self.sessions[i].duration;
        let lpsg = client.lpsg().expect("client");
        self.logs[lpsg as usize].push(LoggedRequest { time_min: t, video });

        let decision = {
            let st = RouteState {
                topology: &self.topo,
                catalog: &self.catalog,
                plans: &self.plans,
                scl: &self.scl,
                ledger: &self.ledger,
                chaining: self.cfg.chaining,
                d: self.cfg.d,
                no_proxy: self.cfg.no_proxy_baseline,
            };
            route(&st, client, video, t)?
        };
        self.notes.push(decision.kind.name().to_string());

        if decision.kind == DecisionKind::Reject {
            self.acc.reject();
            self.sessions[i].status = Some(SessionStatus::Rejected);
            self.notes.push(format!("reason={}", decision.reason.as_deref().unwrap_or("-")));
            return Ok(());
        }

        if decision.kind == DecisionKind::JoinChain {
            let Some((cid, parent)) = self.scl.try_join(lpsg, video, id, client, t, self.cfg.d)? else {
                return Err(invariant(t, format!("{id} routed to a chain that refused it")));
            };
            if Some(parent) != decision.parent {
                return Err(invariant(t, format!("{id} joined {parent}, routing chose {:?}", decision.parent)));
            }
            let entry = self.scl.get(cid).expect("joined chain");
            let pn = entry.node(parent).expect("parent in chain");
            self.joins.push(JoinRecord {
                time_min: t,
                member: id,
                parent,
                parent_arrival_min: pn.arrival_min,
                sz_pref1_min: entry.sz_pref1_min,
                parent_was_tail: {
                    let c = entry.chain();
                    c.len() >= 2 && c[c.len() - 1].member == id && c[c.len() - 2].member == parent
                },
            });
            self.max_chain_len = self.max_chain_len.max(entry.active_count());
            self.notes.push(format!("parent={parent}"));
        }

        if !self.start_feed(i, t, decision.segments.clone())? {
            return Err(invariant(t, format!("{id}: routed path could not be reserved")));
        }
        self.notes.push(decision.describe_segments());

        if self.cfg.chaining && matches!(decision.kind, DecisionKind::NewStreamLocal | DecisionKind::StreamPeerPs) {
            let host = decision.segments[0].source;
            let sz = self.plans[lpsg as usize].get(video).expect("hosted").w1_min;
            self.scl.insert(lpsg, SclEntry::with_head(video, sz, host, id, client, t));
            self.max_chain_len = self.max_chain_len.max(1);
        }

        let wait_ms = path_delay(&self.topo, &decision.startup_path);
        let s = &mut self.sessions[i];
        s.status = Some(SessionStatus::Playing);
        s.kind = decision.kind;
        s.admitted_as = decision.kind;
        s.wait_ms = wait_ms;
        self.acc.serve(decision.kind, wait_ms, s_len);
        self.notes.push(format!("wait_ms={wait_ms}"));
        self.queue.push(t + s_len, EventKind::PlaybackEnd { session: id, generation: 0 });

        // per-session stream so behavior does not depend on other sessions
        let mut rng = stream_rng(self.cfg.seed, BEHAVIOR_STREAM + id.0);
        let u_depart: f64 = rng.gen();
        let u_when: f64 = rng.gen();
        let u_fail: f64 = rng.gen();
        if u_depart < self.cfg.early_depart_prob {
            self.queue.push(t + u_when * s_len, EventKind::EarlyDepart { session: id });
        }
        if self.cfg.failure_rate_per_hour > 0.0 {
            let ttf = -(1.0 - u_fail).ln() * 60.0 / self.cfg.failure_rate_per_hour;
            if ttf < s_len {
                self.queue.push(t + ttf, EventKind::Fail { session: id });
            }
        }

        if decision.kind == DecisionKind::FetchMms && !self.cfg.no_proxy_baseline {
            let ps = client.proxy().expect("client");
            let est = &self.estimates[lpsg as usize];
            let v = self.catalog.get(video).expect("catalog");
            let out = cache_on_miss(&mut self.plans[lpsg as usize], &mut self.cache, v, est.x(video), ps, est)?;
            if out.pref1_cached || out.pref2_cached {
                self.notes.push(format!(
                    "cached pref1={} pref2={} w1={:.4} w2={:.4}",
                    out.pref1_cached, out.pref2_cached, out.w1_min, out.w2_min
                ));
            }
            for (n, v) in out.evicted {
                self.notes.push(format!("evict {v}@{n}"));
            }
        }
        Ok(())
    }

    fn position_at(&self, i: usize, t: f64) -> f64 {
        let s = &self.sessions[i];
        match &s.feed {
            Some(f) => {
                let p = f.position + (t - f.start_time);
                if (p - s.duration).abs() < POS_EPS {
                    s.duration
                } else {
                    p.min(s.duration)
                }
            }
            None => s.position,
        }
    }

    /// Reserves `segments` for session `i` from its current position.
    /// Returns false, leaving everything untouched, if a link is full.
    fn start_feed(&mut self, i: usize, t: f64, segments: Vec<Segment>) -> Result<bool> {
        debug_assert!(self.sessions[i].feed.is_none());
        let pos = self.sessions[i].position;
        let hops = segment_hops(&segments, t, pos);
        let Ok(reservation) = self.ledger.reserve(&hops) else {
            return Ok(false);
        };
        let video = self.sessions[i].arrival.video;
        for seg in &segments {
            if seg.end_min > pos && matches!(seg.source.kind(), NodeKind::Proxy | NodeKind::Tracker) {
                self.cache.pin(seg.source, video).map_err(|e| invariant(t, e.to_string()))?;
            }
        }
        self.sessions[i].feed = Some(Feed {
            reservation,
            start_time: t,
            position: pos,
            segments,
        });
        self.feeds_open += 1;
        Ok(true)
    }

    fn end_feed(&mut self, i: usize, t: f64) -> Result<()> {
        let pos = self.position_at(i, t);
        let Some(feed) = self.sessions[i].feed.take() else {
            return Ok(());
        };
        self.feeds_open -= 1;
        self.ledger
            .release(feed.reservation, t)
            .ok_or_else(|| invariant(t, "feed reservation missing from the ledger"))?;
        let video = self.sessions[i].arrival.video;
        let mut wan = 0.0;
        for seg in &feed.segments {
            if seg.end_min > feed.position && matches!(seg.source.kind(), NodeKind::Proxy | NodeKind::Tracker) {
                self.cache.unpin(seg.source, video).map_err(|e| invariant(t, e.to_string()))?;
            }
            if seg.source == NodeId::Mms {
                let a = seg.start_min.max(feed.position);
                let b = seg.end_min.min(pos);
                if b > a {
                    wan += b - a;
                }
            }
        }
        self.acc.add_wan(wan);
        let s = &mut self.sessions[i];
        if pos > feed.position {
            s.delivered.push((feed.position, pos));
        }
        s.position = pos;
        Ok(())
    }

    fn finish(&mut self, i: usize, t: f64) -> Result<()> {
        self.end_feed(i, t)?;
        let s = &mut self.sessions[i];
        s.status = Some(SessionStatus::Finished);
        let id = s.id;
        if (s.position - s.duration).abs() > POS_EPS {
            return Err(invariant(t, format!("{id} ended at position {} of {}", s.position, s.duration)));
        }
        if let Some(cid) = self.scl.chain_of(id) {
            let entry = self.scl.get_mut(cid).expect("chain");
            match close_finished(entry, id)? {
                CloseOutcome::Closed(gone) => {
                    self.notes.push(format!("closed={}", fmt_members(&gone)));
                    self.scl.forget(cid, &gone);
                }
                CloseOutcome::Draining => self.notes.push("draining".into()),
            }
        }
        Ok(())
    }

    /// Session `first` leaves with `status`; anyone who then cannot be fed
    /// is dropped the same way.
    fn leave(&mut self, first: usize, t: f64, status: SessionStatus) -> Result<()> {
        let mut work = vec![(first, status)];
        while let Some((i, status)) = work.pop() {
            self.end_feed(i, t)?;
            let s = &mut self.sessions[i];
            s.stalled_until = None;
            s.status = Some(status);
            let id = s.id;
            if status == SessionStatus::Dropped {
                let (kind, wait, len) = (s.kind, s.wait_ms, s.duration);
                s.kind = DecisionKind::Reject;
                self.acc.drop_served(kind, wait, len);
                self.notes.push(format!("dropped={id}"));
            }
            let Some(cid) = self.scl.chain_of(id) else { continue };
            let lpsg = self.sessions[i].arrival.client.lpsg().expect("client");
            let entry = self.scl.get_mut(cid).expect("chain");
            match close_early(entry, id)? {
                SpliceOutcome::Closed(gone) => self.scl.forget(cid, &gone),
                SpliceOutcome::Spliced { parent, child, closed } => {
                    self.scl.forget(cid, &closed);
                    self.notes.push(format!("splice {parent}->{child}"));
                    if !self.refeed(child.0 as usize, t)? {
                        work.push((child.0 as usize, SessionStatus::Dropped));
                    }
                }
                SpliceOutcome::Restream { child, detached, closed } => {
                    if let Some(d) = detached {
                        self.scl.insert_detached(lpsg, cid, d);
                    }
                    self.scl.forget(cid, &closed);
                    self.notes.push(format!("restream {child}"));
                    if !self.refeed(child.0 as usize, t)? {
                        work.push((child.0 as usize, SessionStatus::Dropped));
                    }
                }
            }
        }
        Ok(())
    }

    /// Points session `i` at its current upstream in the chain. A stalled
    /// session waits for its detection timer instead.
    fn refeed(&mut self, i: usize, t: f64) -> Result<bool> {
        if self.sessions[i].stalled_until.is_some() {
            return Ok(true);
        }
        self.end_feed(i, t)?;
        let id = self.sessions[i].id;
        let cid = self.scl.chain_of(id).ok_or_else(|| invariant(t, format!("{id} is not chained")))?;
        let node = self.scl.get(cid).and_then(|e| e.node(id)).expect("member").clone();
        match node.parent {
            Upstream::Member(p) => {
                let pc = self.sessions[p.0 as usize].arrival.client;
                let segs = vec![Segment {
                    source: pc,
                    start_min: 0.0,
                    end_min: self.sessions[i].duration,
                    links: vec![LinkId::ClientClient(pc)],
                }];
                self.start_feed(i, t, segs)
            }
            Upstream::Proxy => {
                let Arrival { client, video, .. } = self.sessions[i].arrival;
                let ps = client.proxy().expect("client");
                let plan = &self.plans[client.lpsg().expect("client") as usize];
                let len = self.sessions[i].duration;
                if let Some(host) = lookup_pref1(plan, video) {
                    let segs = lpsg_segments(plan.get(video).expect("hosted"), host, ps, len);
                    if self.start_feed(i, t, segs)? {
                        return Ok(true);
                    }
                }
                self.start_feed(i, t, mms_segments(ps, len))
            }
        }
    }

    fn fail(&mut self, i: usize, t: f64) -> Result<()> {
        self.end_feed(i, t)?;
        let s = &mut self.sessions[i];
        s.status = Some(SessionStatus::Failed);
        s.stalled_until = None;
        let id = s.id;
        let Some(cid) = self.scl.chain_of(id) else { return Ok(()) };
        let entry = self.scl.get_mut(cid).expect("chain");
        let rec = detect_and_recover_failure(entry, id, t, self.cfg.g_sec)?;
        let chain_after: Vec<MemberId> = entry.members().collect();
        let mut gone = vec![id];
        gone.extend(rec.closed.iter().copied());
        self.scl.forget(cid, &gone);

        let mut stall_added = 0.0;
        if let Some(c) = rec.child {
            let ci = c.0 as usize;
            if self.sessions[ci].playing() {
                self.end_feed(ci, t)?;
                let g = self.cfg.g_sec;
                let cs = &mut self.sessions[ci];
                let until = t + g / 60.0;
                stall_added = match cs.stalled_until {
                    Some(u) if u >= until => 0.0,
                    Some(u) => (until - u) * 60.0,
                    None => g,
                };
                cs.stall_sec += stall_added;
                let resume = cs.stalled_until.map_or(until, |u| u.max(until));
                cs.stalled_until = Some(resume);
                cs.stall_gen += 1;
                cs.end_gen += 1;
                let (sg, eg, end) = (cs.stall_gen, cs.end_gen, cs.end_time());
                self.queue.push(resume, EventKind::FailDetect { child: c, failed: id, generation: sg });
                self.queue.push(end, EventKind::PlaybackEnd { session: c, generation: eg });
            }
            self.notes.push(format!("child={c} stall_sec={stall_added}"));
        }
        self.recoveries.push(RecoveryEvent {
            failed: id,
            child: rec.child,
            new_parent: rec.new_parent,
            failed_at_min: t,
            detected_at_min: rec.detected_at_min,
            stall_sec: stall_added,
            chain_after,
        });
        Ok(())
    }

    fn resume(&mut self, i: usize, t: f64) -> Result<()> {
        self.sessions[i].stalled_until = None;
        let id = self.sessions[i].id;
        if let Some(node) = self.scl.chain_of(id).and_then(|c| self.scl.get(c)).and_then(|e| e.node(id)) {
            let up = match node.parent {
                Upstream::Proxy => "proxy".to_string(),
                Upstream::Member(p) => p.to_string(),
            };
            self.notes.push(format!("parent={up}"));
        }
        if !self.refeed(i, t)? {
            self.leave(i, t, SessionStatus::Dropped)?;
        }
        Ok(())
    }

    /// Structural checks after every event.
    fn check(&self, t: f64) -> Result<()> {
        if self.ledger.outstanding() != self.feeds_open {
            return Err(invariant(
                t,
                format!("{} reservations for {} open feeds", self.ledger.outstanding(), self.feeds_open),
            ));
        }
        for (cid, entry) in self.scl.chains() {
            entry.check_linear().map_err(|m| invariant(t, format!("chain {}: {m}", cid.0)))?;
            for n in entry.chain() {
                let s = &self.sessions[n.member.0 as usize];
                let ok = match n.state {
                    NodeState::Streaming => s.playing(),
                    NodeState::Draining => s.status == Some(SessionStatus::Finished),
                    _ => false,
                };
                if !ok {
                    return Err(invariant(t, format!("{} is {:?} in chain but {:?}", n.member, n.state, s.status)));
                }
                if self.scl.chain_of(n.member) != Some(cid) {
                    return Err(invariant(t, format!("{} indexed under the wrong chain", n.member)));
                }
            }
        }
        Ok(())
    }
}

fn fmt_members(ms: &[MemberId]) -> String {
    ms.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("/")
}
