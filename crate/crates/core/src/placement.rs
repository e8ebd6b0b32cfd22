//! Video distribution: sizing and placing proxy prefixes (pref-1) and
//! tracker prefixes (pref-2) by popularity under storage limits, plus
//! popularity-ordered eviction when a miss must be cached.

use std::collections::BTreeMap;
use std::fmt;

use crate::catalog::{prefix_sizes, Catalog, PopularityEstimate, Video, VideoId};
use crate::error::{Error, Result};
use crate::topology::{NodeId, NodeKind, Topology};

const FIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheEntry {
    pub size_min: f64,
    /// Streams currently reading this prefix; pinned entries are never evicted.
    pub refcount: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Store {
    pub capacity_min: f64,
    used_min: f64,
    entries: BTreeMap<VideoId, CacheEntry>,
}

impl Store {
    fn new(capacity_min: f64) -> Self {
        Self {
            capacity_min,
            used_min: 0.0,
            entries: BTreeMap::new(),
        }
    }

    pub fn used_min(&self) -> f64 {
        self.used_min
    }

    pub fn free_min(&self) -> f64 {
        (self.capacity_min - self.used_min).max(0.0)
    }

    pub fn fits(&self, size_min: f64) -> bool {
        self.used_min + size_min <= self.capacity_min + FIT_EPS
    }

    pub fn get(&self, video: VideoId) -> Option<&CacheEntry> {
        self.entries.get(&video)
    }

    pub fn entries(&self) -> impl Iterator<Item = (VideoId, &CacheEntry)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Recomputes usage from the entries; equals `used_min()` when consistent.
    pub fn sum_entries(&self) -> f64 {
        self.entries.values().map(|e| e.size_min).sum()
    }
}

/// Storage bookkeeping for every proxy and tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheState {
    stores: BTreeMap<NodeId, Store>,
}

impl CacheState {
    /// Every proxy gets `ps_capacity_min`, every tracker `tr_capacity_min`.
    pub fn new(topology: &Topology, ps_capacity_min: f64, tr_capacity_min: f64) -> Result<Self> {
        if !(ps_capacity_min >= 0.0 && tr_capacity_min >= 0.0) {
            return Err(Error::invalid("cache capacities must be >= 0"));
        }
        let mut stores = BTreeMap::new();
        for tr in topology.trackers() {
            stores.insert(tr, Store::new(tr_capacity_min));
        }
        for ps in topology.all_proxies() {
            stores.insert(ps, Store::new(ps_capacity_min));
        }
        Ok(Self { stores })
    }

    pub fn store(&self, node: NodeId) -> Option<&Store> {
        self.stores.get(&node)
    }

    pub fn stores(&self) -> impl Iterator<Item = (NodeId, &Store)> {
        self.stores.iter().map(|(&k, v)| (k, v))
    }

    pub fn holds(&self, node: NodeId, video: VideoId) -> bool {
        self.stores.get(&node).is_some_and(|s| s.entries.contains_key(&video))
    }

    fn store_mut(&mut self, node: NodeId) -> Result<&mut Store> {
        self.stores
            .get_mut(&node)
            .ok_or_else(|| Error::invalid(format!("{node} has no cache")))
    }

    pub fn insert(&mut self, node: NodeId, video: VideoId, size_min: f64) -> Result<()> {
        let store = self.store_mut(node)?;
        if store.entries.contains_key(&video) {
            return Err(Error::invalid(format!("{node} already caches {video}")));
        }
        if !(size_min > 0.0) || !store.fits(size_min) {
            return Err(Error::invalid(format!(
                "{video} ({size_min:.3} min) does not fit on {node} ({:.3} free)",
                store.free_min()
            )));
        }
        store.used_min += size_min;
        store.entries.insert(video, CacheEntry { size_min, refcount: 0 });
        Ok(())
    }

    pub fn remove(&mut self, node: NodeId, video: VideoId) -> Option<CacheEntry> {
        let store = self.stores.get_mut(&node)?;
        let e = store.entries.remove(&video)?;
        store.used_min -= e.size_min;
        if store.entries.is_empty() {
            store.used_min = 0.0;
        }
        Some(e)
    }

    pub fn pin(&mut self, node: NodeId, video: VideoId) -> Result<()> {
        let e = self
            .store_mut(node)?
            .entries
            .get_mut(&video)
            .ok_or_else(|| Error::invalid(format!("{node} does not cache {video}")))?;
        e.refcount += 1;
        Ok(())
    }

    pub fn unpin(&mut self, node: NodeId, video: VideoId) -> Result<()> {
        let e = self
            .store_mut(node)?
            .entries
            .get_mut(&video)
            .ok_or_else(|| Error::invalid(format!("{node} does not cache {video}")))?;
        if e.refcount == 0 {
            return Err(Error::invalid(format!("{video} on {node} is not pinned")));
        }
        e.refcount -= 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub host_ps: Option<NodeId>,
    pub w1_min: f64,
    pub w2_min: f64,
    pub host_tr: Option<NodeId>,
}

/// The tracker's directory for one LPSG: where each video's prefixes live.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixPlan {
    pub lpsg: u32,
    entries: BTreeMap<VideoId, PlanEntry>,
    placement_order: Vec<VideoId>,
}

impl PrefixPlan {
    pub fn empty(lpsg: u32) -> Self {
        Self {
            lpsg,
            entries: BTreeMap::new(),
            placement_order: Vec::new(),
        }
    }

    pub fn get(&self, video: VideoId) -> Option<&PlanEntry> {
        self.entries.get(&video)
    }

    pub fn entries(&self) -> impl Iterator<Item = (VideoId, &PlanEntry)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    /// Order in which `distribute_videos` offered videos for placement.
    pub fn placement_order(&self) -> &[VideoId] {
        &self.placement_order
    }

    pub fn cached_pref1(&self) -> impl Iterator<Item = (VideoId, NodeId)> + '_ {
        self.entries.iter().filter_map(|(&v, e)| e.host_ps.map(|h| (v, h)))
    }

    /// Records a placement directly; used to script scenarios.
    pub fn set(&mut self, video: VideoId, entry: PlanEntry) {
        self.entries.insert(video, entry);
    }

    fn clear_host(&mut self, node: NodeId, video: VideoId) {
        if let Some(e) = self.entries.get_mut(&video) {
            if e.host_ps == Some(node) {
                e.host_ps = None;
            }
            if e.host_tr == Some(node) {
                e.host_tr = None;
            }
        }
    }
}

impl fmt::Display for PrefixPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "LPSG {}:", self.lpsg)?;
        for (v, e) in &self.entries {
            let ps = e.host_ps.map_or("-".to_string(), |n| n.to_string());
            let tr = e.host_tr.map_or("-".to_string(), |n| n.to_string());
            writeln!(
                f,
                "  {v:>4}  w1 {:7.2} @ {ps:<8} w2 {:7.2} @ {tr}",
                e.w1_min, e.w2_min
            )?;
        }
        Ok(())
    }
}

/// Greedy popularity-ordered placement for one LPSG.
///
/// Videos are offered most popular first. Pref-1 goes to the proxy with the
/// most free space (lowest index on ties) if it fits there; pref-2 goes to
/// the tracker if it fits. Either may be skipped independently.
pub fn distribute_videos(
    catalog: &Catalog,
    popularity: &PopularityEstimate,
    topology: &Topology,
    lpsg: u32,
    cache: &mut CacheState,
) -> Result<PrefixPlan> {
    if lpsg >= topology.lpsgs() {
        return Err(Error::invalid(format!("no LPSG {lpsg}")));
    }
    let tracker = NodeId::Tracker { lpsg };
    let mut order: Vec<&Video> = catalog.iter().collect();
    order.sort_by(|a, b| popularity.x(b.id).total_cmp(&popularity.x(a.id)).then(a.id.cmp(&b.id)));

    let mut plan = PrefixPlan::empty(lpsg);
    for video in order {
        plan.placement_order.push(video.id);
        let (w1, w2) = prefix_sizes(popularity.x(video.id), video.duration_min)?;

        let existing_ps = topology.proxies(lpsg).find(|&ps| cache.holds(ps, video.id));
        let host_ps = match existing_ps {
            Some(ps) => Some(ps),
            None => {
                let best = topology
                    .proxies(lpsg)
                    .filter_map(|ps| cache.store(ps).map(|s| (ps, s.free_min())))
                    .fold(None::<(NodeId, f64)>, |best, (ps, free)| match best {
                        Some((_, bf)) if bf >= free => best,
                        _ => Some((ps, free)),
                    });
                match best {
                    Some((ps, _)) if cache.store(ps).is_some_and(|s| s.fits(w1)) => {
                        cache.insert(ps, video.id, w1)?;
                        Some(ps)
                    }
                    _ => None,
                }
            }
        };

        let host_tr = if cache.holds(tracker, video.id) {
            Some(tracker)
        } else if cache.store(tracker).is_some_and(|s| s.fits(w2)) {
            cache.insert(tracker, video.id, w2)?;
            Some(tracker)
        } else {
            None
        };

        plan.entries.insert(
            video.id,
            PlanEntry {
                host_ps,
                w1_min: w1,
                w2_min: w2,
                host_tr,
            },
        );
    }
    Ok(plan)
}

/// Eviction could not free enough space; nothing was changed.
#[derive(Debug, Clone, PartialEq)]
pub struct InsufficientRoom {
    pub node: NodeId,
    pub needed_min: f64,
    pub reclaimable_min: f64,
}

impl fmt::Display for InsufficientRoom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: need {:.3} min, at most {:.3} min reclaimable",
            self.node, self.needed_min, self.reclaimable_min
        )
    }
}

impl std::error::Error for InsufficientRoom {}

/// Frees at least `needed_min` on `node` by evicting unpinned prefixes that
/// are less popular than the incoming one (`incoming_x`), least popular first.
///
/// Returns the evicted videos. On failure the cache is left untouched.
pub fn make_room(
    cache: &mut CacheState,
    node: NodeId,
    needed_min: f64,
    popularity: &PopularityEstimate,
    incoming_x: f64,
) -> std::result::Result<Vec<VideoId>, InsufficientRoom> {
    let fail = |reclaimable_min| InsufficientRoom {
        node,
        needed_min,
        reclaimable_min,
    };
    let Some(store) = cache.store(node) else {
        return Err(fail(0.0));
    };
    if !(needed_min >= 0.0) {
        return Err(fail(0.0));
    }
    let mut free = store.free_min();
    if free + FIT_EPS >= needed_min {
        return Ok(Vec::new());
    }

    let mut candidates: Vec<(VideoId, f64, f64)> = store
        .entries()
        .filter(|(_, e)| e.refcount == 0)
        .map(|(v, e)| (v, popularity.x(v), e.size_min))
        .filter(|&(_, x, _)| x < incoming_x)
        .collect();
    // least popular first; among equals, the lower-ranked (higher id) title goes first
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));

    let mut victims = Vec::new();
    for (v, _, size) in &candidates {
        if free + FIT_EPS >= needed_min {
            break;
        }
        free += size;
        victims.push(*v);
    }
    if free + FIT_EPS < needed_min {
        return Err(fail(free));
    }
    for v in &victims {
        cache.remove(node, *v);
    }
    Ok(victims)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CacheOutcome {
    pub pref1_cached: bool,
    pub pref2_cached: bool,
    pub w1_min: f64,
    pub w2_min: f64,
    pub evicted: Vec<(NodeId, VideoId)>,
}

/// After a full download from the main server, caches pref-1 on the
/// requester's proxy and pref-2 on its tracker, evicting as needed. Either
/// half may fail independently.
pub fn cache_on_miss(
    plan: &mut PrefixPlan,
    cache: &mut CacheState,
    video: &Video,
    x: f64,
    requester_ps: NodeId,
    popularity: &PopularityEstimate,
) -> Result<CacheOutcome> {
    if requester_ps.kind() != NodeKind::Proxy || requester_ps.lpsg() != Some(plan.lpsg) {
        return Err(Error::invalid(format!(
            "{requester_ps} is not a proxy of LPSG {}",
            plan.lpsg
        )));
    }
    let tracker = NodeId::Tracker { lpsg: plan.lpsg };
    let prior = plan.get(video.id).copied();
    if prior.and_then(|e| e.host_ps).is_some() {
        return Ok(CacheOutcome::default());
    }

    // A surviving pref-2 fixes the split point, so keep its sizes.
    let tr_has = cache.holds(tracker, video.id) && prior.is_some_and(|e| e.host_tr.is_some());
    let (w1, w2) = match prior {
        Some(e) if tr_has => (e.w1_min, e.w2_min),
        _ => prefix_sizes(x, video.duration_min)?,
    };

    let mut outcome = CacheOutcome {
        w1_min: w1,
        w2_min: w2,
        ..Default::default()
    };

    if let Ok(victims) = make_room(cache, requester_ps, w1, popularity, x) {
        for v in victims {
            plan.clear_host(requester_ps, v);
            outcome.evicted.push((requester_ps, v));
        }
        cache.insert(requester_ps, video.id, w1)?;
        outcome.pref1_cached = true;
    }

    if tr_has {
        outcome.pref2_cached = true;
    } else if let Ok(victims) = make_room(cache, tracker, w2, popularity, x) {
        for v in victims {
            plan.clear_host(tracker, v);
            outcome.evicted.push((tracker, v));
        }
        cache.insert(tracker, video.id, w2)?;
        outcome.pref2_cached = true;
    }

    if outcome.pref1_cached || (outcome.pref2_cached && !tr_has) {
        plan.entries.insert(
            video.id,
            PlanEntry {
                host_ps: outcome.pref1_cached.then_some(requester_ps),
                w1_min: w1,
                w2_min: w2,
                host_tr: outcome.pref2_cached.then_some(tracker),
            },
        );
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::XClamp;
    use crate::topology::{build_topology, LinkTable};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn catalog(durations: &[f64]) -> Catalog {
        Catalog::new(
            durations
                .iter()
                .enumerate()
                .map(|(i, &d)| Video::new(VideoId(i as u32 + 1), d, 200.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn pop(xs: &[(u32, f64)]) -> PopularityEstimate {
        PopularityEstimate::from_x(xs.iter().map(|&(v, x)| (VideoId(v), x)), XClamp::default()).unwrap()
    }

    const PS0: NodeId = NodeId::Proxy { lpsg: 0, ps: 0 };
    const TR0: NodeId = NodeId::Tracker { lpsg: 0 };

    #[test]
    fn nothing_fits_in_zero_capacity() {
        let topo = build_topology(1, 3, 1, LinkTable::default()).unwrap();
        let mut cache = CacheState::new(&topo, 0.0, 0.0).unwrap();
        let cat = catalog(&[120.0, 150.0, 180.0]);
        let plan = distribute_videos(&cat, &pop(&[(1, 0.5)]), &topo, 0, &mut cache).unwrap();
        assert_eq!(plan.cached_pref1().count(), 0);
        assert!(plan.entries().all(|(_, e)| e.host_tr.is_none()));
    }

    #[test]
    fn greedy_by_hand() {
        // v1: w1 = 60, v2: w1 = 30; 70 minutes on the only proxy
        let topo = build_topology(1, 1, 1, LinkTable::default()).unwrap();
        let mut cache = CacheState::new(&topo, 70.0, 0.0).unwrap();
        let cat = catalog(&[120.0, 120.0]);
        let plan = distribute_videos(&cat, &pop(&[(1, 0.5), (2, 0.25)]), &topo, 0, &mut cache).unwrap();
        let e1 = plan.get(VideoId(1)).unwrap();
        assert_eq!(e1.host_ps, Some(PS0));
        assert_abs_diff_eq!(e1.w1_min, 60.0);
        let e2 = plan.get(VideoId(2)).unwrap();
        assert_eq!(e2.host_ps, None);
        assert_abs_diff_eq!(e2.w1_min, 30.0);
        assert_abs_diff_eq!(cache.store(PS0).unwrap().used_min(), 60.0);
    }

    #[test]
    fn most_free_proxy_wins_then_lowest_index() {
        let topo = build_topology(1, 3, 1, LinkTable::default()).unwrap();
        let mut cache = CacheState::new(&topo, 100.0, 0.0).unwrap();
        let cat = catalog(&[100.0, 100.0, 100.0, 100.0]);
        let plan = distribute_videos(
            &cat,
            &pop(&[(1, 0.4), (2, 0.3), (3, 0.2), (4, 0.1)]),
            &topo,
            0,
            &mut cache,
        )
        .unwrap();
        let host = |v| plan.get(VideoId(v)).unwrap().host_ps.unwrap();
        assert_eq!(host(1), NodeId::Proxy { lpsg: 0, ps: 0 });
        assert_eq!(host(2), NodeId::Proxy { lpsg: 0, ps: 1 });
        assert_eq!(host(3), NodeId::Proxy { lpsg: 0, ps: 2 });
        // free is 60 / 70 / 80 now
        assert_eq!(host(4), NodeId::Proxy { lpsg: 0, ps: 2 });
    }

    #[test]
    fn table_one_ratio_bounds() {
        let c_mms = 1000.0;
        let topo = build_topology(2, 6, 1, LinkTable::default()).unwrap();
        let mut cache = CacheState::new(&topo, 0.2 * c_mms, 0.4 * c_mms).unwrap();
        let cat = catalog(&(0..60).map(|i| 120.0 + i as f64).collect::<Vec<_>>());
        let p = pop(&(1..=60).map(|v| (v, 0.9 / v as f64)).collect::<Vec<_>>());
        for l in 0..2 {
            distribute_videos(&cat, &p, &topo, l, &mut cache).unwrap();
        }
        for (node, store) in cache.stores() {
            let bound = if node.kind() == NodeKind::Proxy { 0.2 } else { 0.4 } * c_mms;
            assert!(store.sum_entries() <= bound + 1e-9, "{node}");
        }
    }

    fn two_entry_node(pin_a: bool) -> (CacheState, PopularityEstimate) {
        let topo = build_topology(1, 1, 1, LinkTable::default()).unwrap();
        let mut cache = CacheState::new(&topo, 75.0, 0.0).unwrap();
        cache.insert(PS0, VideoId(1), 30.0).unwrap();
        cache.insert(PS0, VideoId(2), 40.0).unwrap();
        if pin_a {
            cache.pin(PS0, VideoId(1)).unwrap();
        }
        (cache, pop(&[(1, 0.1), (2, 0.4)]))
    }

    #[test]
    fn make_room_noop_when_nothing_needed() {
        let (mut cache, p) = two_entry_node(false);
        let before = cache.clone();
        assert_eq!(make_room(&mut cache, PS0, 0.0, &p, 0.2), Ok(vec![]));
        assert_eq!(cache, before);
    }

    #[test]
    fn make_room_evicts_least_popular() {
        let (mut cache, p) = two_entry_node(false);
        assert_eq!(make_room(&mut cache, PS0, 30.0, &p, 0.2), Ok(vec![VideoId(1)]));
        assert!(cache.holds(PS0, VideoId(2)));
        assert_abs_diff_eq!(cache.store(PS0).unwrap().free_min(), 35.0);
    }

    #[test]
    fn make_room_respects_pins() {
        let (mut cache, p) = two_entry_node(true);
        let before = cache.clone();
        let err = make_room(&mut cache, PS0, 30.0, &p, 0.2).unwrap_err();
        assert_eq!(err.node, PS0);
        assert_eq!(cache, before);
    }

    #[test]
    fn miss_cached_with_room() {
        let topo = build_topology(1, 2, 1, LinkTable::default()).unwrap();
        let mut cache = CacheState::new(&topo, 100.0, 100.0).unwrap();
        let mut plan = PrefixPlan::empty(0);
        let v = Video::new(VideoId(3), 120.0, 200.0).unwrap();
        let ps1 = NodeId::Proxy { lpsg: 0, ps: 1 };
        let out = cache_on_miss(&mut plan, &mut cache, &v, 0.2, ps1, &pop(&[])).unwrap();
        assert!(out.pref1_cached && out.pref2_cached);
        let e = plan.get(VideoId(3)).unwrap();
        assert_eq!(e.host_ps, Some(ps1));
        assert_eq!(e.host_tr, Some(TR0));
        assert_abs_diff_eq!(e.w1_min, 24.0);
        assert_abs_diff_eq!(e.w2_min, 19.2, epsilon = 1e-9);
    }

    #[test]
    fn miss_partial_when_proxy_pinned() {
        let topo = build_topology(1, 1, 1, LinkTable::default()).unwrap();
        let mut cache = CacheState::new(&topo, 30.0, 100.0).unwrap();
        cache.insert(PS0, VideoId(1), 30.0).unwrap();
        cache.pin(PS0, VideoId(1)).unwrap();
        let mut plan = PrefixPlan::empty(0);
        let v = Video::new(VideoId(2), 120.0, 200.0).unwrap();
        let out = cache_on_miss(&mut plan, &mut cache, &v, 0.2, PS0, &pop(&[(1, 0.01)])).unwrap();
        assert!(!out.pref1_cached && out.pref2_cached);
        let e = plan.get(VideoId(2)).unwrap();
        assert_eq!(e.host_ps, None);
        assert_eq!(e.host_tr, Some(TR0));
    }

    #[test]
    fn miss_noop_when_everything_pinned() {
        let topo = build_topology(1, 1, 1, LinkTable::default()).unwrap();
        let mut cache = CacheState::new(&topo, 30.0, 30.0).unwrap();
        cache.insert(PS0, VideoId(1), 30.0).unwrap();
        cache.insert(TR0, VideoId(1), 30.0).unwrap();
        cache.pin(PS0, VideoId(1)).unwrap();
        cache.pin(TR0, VideoId(1)).unwrap();
        let mut plan = PrefixPlan::empty(0);
        let before = (plan.clone(), cache.clone());
        let v = Video::new(VideoId(2), 120.0, 200.0).unwrap();
        let out = cache_on_miss(&mut plan, &mut cache, &v, 0.2, PS0, &pop(&[(1, 0.01)])).unwrap();
        assert!(!out.pref1_cached && !out.pref2_cached);
        assert_eq!((plan, cache), before);
    }

    #[test]
    fn eviction_updates_directory() {
        let topo = build_topology(1, 1, 1, LinkTable::default()).unwrap();
        // v1 takes 20 of 25 minutes, v2 (6 min at the floor) no longer fits
        let mut cache = CacheState::new(&topo, 25.0, 0.0).unwrap();
        let cat = catalog(&[100.0, 120.0]);
        let mut plan = distribute_videos(&cat, &pop(&[(1, 0.2)]), &topo, 0, &mut cache).unwrap();
        assert_eq!(plan.get(VideoId(2)).unwrap().host_ps, None);
        assert_eq!(plan.get(VideoId(1)).unwrap().host_ps, Some(PS0));
        let p = pop(&[(1, 0.05), (2, 0.2)]);
        let v2 = cat.get(VideoId(2)).unwrap();
        let out = cache_on_miss(&mut plan, &mut cache, v2, 0.2, PS0, &p).unwrap();
        assert!(out.pref1_cached);
        assert_eq!(out.evicted, vec![(PS0, VideoId(1))]);
        assert_eq!(plan.get(VideoId(1)).unwrap().host_ps, None);
        assert_eq!(plan.get(VideoId(2)).unwrap().host_ps, Some(PS0));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Miss { video: u32, ps: u32, x: f64 },
        Pin { video: u32, ps: u32 },
        Unpin { video: u32, ps: u32 },
        MakeRoom { ps: u32, needed: f64 },
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (1u32..12, 0u32..3, 0.01f64..0.9).prop_map(|(video, ps, x)| Op::Miss { video, ps, x }),
            (1u32..12, 0u32..3).prop_map(|(video, ps)| Op::Pin { video, ps }),
            (1u32..12, 0u32..3).prop_map(|(video, ps)| Op::Unpin { video, ps }),
            (0u32..3, 0.0f64..120.0).prop_map(|(ps, needed)| Op::MakeRoom { ps, needed }),
        ]
    }

    proptest! {
        #[test]
        fn capacity_and_uniqueness_hold(
            ops in proptest::collection::vec(op(), 1..80),
            xs in proptest::collection::vec(0.01f64..0.6, 11),
        ) {
            let topo = build_topology(1, 3, 1, LinkTable::default()).unwrap();
            let mut cache = CacheState::new(&topo, 90.0, 120.0).unwrap();
            let cat = catalog(&(0..11).map(|i| 100.0 + 8.0 * i as f64).collect::<Vec<_>>());
            let p = pop(&xs.iter().enumerate().map(|(i, &x)| (i as u32 + 1, x)).collect::<Vec<_>>());
            let mut plan = distribute_videos(&cat, &p, &topo, 0, &mut cache).unwrap();

            // placement order follows popularity
            let order = plan.placement_order().to_vec();
            for w in order.windows(2) {
                prop_assert!(p.x(w[0]) >= p.x(w[1]));
            }

            for op in ops {
                match op {
                    Op::Miss { video, ps, x } => {
                        let ps = NodeId::Proxy { lpsg: 0, ps };
                        let v = cat.get(VideoId(video)).unwrap();
                        if plan.get(v.id).and_then(|e| e.host_ps).is_none() {
                            cache_on_miss(&mut plan, &mut cache, v, x, ps, &p).unwrap();
                        }
                    }
                    Op::Pin { video, ps } => {
                        let _ = cache.pin(NodeId::Proxy { lpsg: 0, ps }, VideoId(video));
                    }
                    Op::Unpin { video, ps } => {
                        let _ = cache.unpin(NodeId::Proxy { lpsg: 0, ps }, VideoId(video));
                    }
                    Op::MakeRoom { ps, needed } => {
                        let node = NodeId::Proxy { lpsg: 0, ps };
                        if let Ok(victims) = make_room(&mut cache, node, needed, &p, 1.0) {
                            for v in victims {
                                plan.clear_host(node, v);
                            }
                        }
                    }
                }
                for (node, store) in cache.stores() {
                    prop_assert!(store.used_min() <= store.capacity_min + 1e-6, "{node} over capacity");
                    prop_assert!((store.used_min() - store.sum_entries()).abs() < 1e-6);
                }
                for v in cat.ids() {
                    let hosts = topo.proxies(0).filter(|&ps| cache.holds(ps, v)).count();
                    prop_assert!(hosts <= 1, "{v} cached on {hosts} proxies");
                    let planned = plan.get(v).and_then(|e| e.host_ps);
                    prop_assert_eq!(planned.is_some(), hosts == 1);
                }
            }
        }
    }
}
