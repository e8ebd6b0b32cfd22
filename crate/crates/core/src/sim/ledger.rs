//! Interval-based bandwidth reservations.
//!
//! Every link carries a whole number of concurrent streams. A reservation is
//! a set of hops, each a link busy over a half-open time interval, and is
//! admitted only if every hop fits for its whole interval.

use std::collections::BTreeMap;
use std::fmt;

use crate::topology::{LinkClass, LinkTable, NodeId};

/// A physical link. Shared media are keyed by the node that owns them: a
/// proxy's client LAN and a client's uplink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkId {
    PsClient(NodeId),
    ClientClient(NodeId),
    TrPs(NodeId),
    PsPs(NodeId, NodeId),
    TrTr(NodeId, NodeId),
    MmsTr(NodeId),
}

impl LinkId {
    pub fn ps_ps(a: NodeId, b: NodeId) -> Self {
        LinkId::PsPs(a.min(b), a.max(b))
    }

    pub fn tr_tr(a: NodeId, b: NodeId) -> Self {
        LinkId::TrTr(a.min(b), a.max(b))
    }

    pub fn class(&self) -> LinkClass {
        match self {
            LinkId::PsClient(_) => LinkClass::PsClient,
            LinkId::ClientClient(_) => LinkClass::ClientClient,
            LinkId::TrPs(_) => LinkClass::TrPs,
            LinkId::PsPs(..) => LinkClass::PsPs,
            LinkId::TrTr(..) => LinkClass::TrTr,
            LinkId::MmsTr(_) => LinkClass::MmsTr,
        }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkId::PsClient(n) | LinkId::ClientClient(n) | LinkId::TrPs(n) | LinkId::MmsTr(n) => {
                write!(f, "{}[{n}]", self.class())
            }
            LinkId::PsPs(a, b) | LinkId::TrTr(a, b) => write!(f, "{}[{a}/{b}]", self.class()),
        }
    }
}

/// One link held over `[start_min, end_min)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub link: LinkId,
    pub start_min: f64,
    pub end_min: f64,
}

impl Hop {
    pub fn new(link: LinkId, start_min: f64, end_min: f64) -> Self {
        Self { link, start_min, end_min }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReservationId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saturated {
    pub link: LinkId,
    pub capacity: u32,
}

impl fmt::Display for Saturated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} saturated (capacity {})", self.link, self.capacity)
    }
}

#[derive(Debug, Clone, Copy)]
struct Active {
    id: ReservationId,
    start: f64,
    end: f64,
}

#[derive(Debug, Clone)]
pub struct BandwidthLedger {
    capacities: LinkTable,
    active: BTreeMap<LinkId, Vec<Active>>,
    reservations: BTreeMap<ReservationId, Vec<Hop>>,
    /// Intervals each released hop actually occupied.
    history: Vec<Hop>,
    next_id: u64,
}

/// Largest number of intervals overlapping at any instant. Intervals are
/// half-open, so one ending where another starts does not overlap it.
fn peak_overlap(intervals: impl IntoIterator<Item = (f64, f64)>) -> usize {
    let mut points: Vec<(f64, i32)> = Vec::new();
    for (s, e) in intervals {
        if e > s {
            points.push((s, 1));
            points.push((e, -1));
        }
    }
    // ends sort before starts at the same instant
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cur = 0i32;
    let mut peak = 0i32;
    for (_, d) in points {
        cur += d;
        peak = peak.max(cur);
    }
    peak as usize
}

impl BandwidthLedger {
    pub fn new(capacities: LinkTable) -> Self {
        Self {
            capacities,
            active: BTreeMap::new(),
            reservations: BTreeMap::new(),
            history: Vec::new(),
            next_id: 0,
        }
    }

    pub fn capacity(&self, link: LinkId) -> u32 {
        self.capacities.capacity(link.class())
    }

    /// First hop that would overflow its link, if any. Hops on the same link
    /// within one request count against each other.
    pub fn check(&self, hops: &[Hop]) -> Result<(), Saturated> {
        let mut by_link: BTreeMap<LinkId, Vec<(f64, f64)>> = BTreeMap::new();
        for h in hops {
            if h.end_min > h.start_min {
                by_link.entry(h.link).or_default().push((h.start_min, h.end_min));
            }
        }
        for (link, wanted) in by_link {
            let capacity = self.capacity(link);
            let lo = wanted.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
            let hi = wanted.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
            let existing = self
                .active
                .get(&link)
                .into_iter()
                .flatten()
                .filter(|a| a.start < hi && a.end > lo)
                .map(|a| (a.start, a.end));
            if peak_overlap(existing.chain(wanted.iter().copied())) > capacity as usize {
                return Err(Saturated { link, capacity });
            }
        }
        Ok(())
    }

    pub fn can_reserve(&self, hops: &[Hop]) -> bool {
        self.check(hops).is_ok()
    }

    /// All or nothing: on failure the ledger is unchanged.
    pub fn reserve(&mut self, hops: &[Hop]) -> Result<ReservationId, Saturated> {
        self.check(hops)?;
        let id = ReservationId(self.next_id);
        self.next_id += 1;
        let kept: Vec<Hop> = hops.iter().copied().filter(|h| h.end_min > h.start_min).collect();
        for h in &kept {
            self.active.entry(h.link).or_default().push(Active {
                id,
                start: h.start_min,
                end: h.end_min,
            });
        }
        self.reservations.insert(id, kept);
        Ok(id)
    }

    /// Frees a reservation at `at_min`. Hops that had not started yet leave
    /// nothing behind; hops in progress are cut short. Returns the hops as
    /// they were actually used.
    pub fn release(&mut self, id: ReservationId, at_min: f64) -> Option<Vec<Hop>> {
        let hops = self.reservations.remove(&id)?;
        let mut used = Vec::with_capacity(hops.len());
        for h in hops {
            if let Some(list) = self.active.get_mut(&h.link) {
                if let Some(pos) = list.iter().position(|a| a.id == id && a.start == h.start_min && a.end == h.end_min) {
                    list.swap_remove(pos);
                }
                if list.is_empty() {
                    self.active.remove(&h.link);
                }
            }
            let end = h.end_min.min(at_min).max(h.start_min);
            let u = Hop::new(h.link, h.start_min, end);
            if end > h.start_min {
                self.history.push(u);
            }
            used.push(u);
        }
        Some(used)
    }

    pub fn hops(&self, id: ReservationId) -> Option<&[Hop]> {
        self.reservations.get(&id).map(|v| v.as_slice())
    }

    pub fn outstanding(&self) -> usize {
        self.reservations.len()
    }

    /// Streams on `link` at instant `t`.
    pub fn load_at(&self, link: LinkId, t: f64) -> usize {
        self.active
            .get(&link)
            .into_iter()
            .flatten()
            .filter(|a| a.start <= t && t < a.end)
            .count()
    }

    /// Released hops in release order.
    pub fn history(&self) -> &[Hop] {
        &self.history
    }

    /// Total busy minutes recorded on links of `class`.
    pub fn used_minutes(&self, class: LinkClass) -> f64 {
        self.history
            .iter()
            .filter(|h| h.link.class() == class)
            .map(|h| h.end_min - h.start_min)
            .sum()
    }

    /// Replays every recorded and outstanding interval and checks that no
    /// link ever exceeded its capacity.
    pub fn audit(&self) -> Result<(), String> {
        let mut by_link: BTreeMap<LinkId, Vec<(f64, f64)>> = BTreeMap::new();
        for h in &self.history {
            by_link.entry(h.link).or_default().push((h.start_min, h.end_min));
        }
        for (link, list) in &self.active {
            by_link.entry(*link).or_default().extend(list.iter().map(|a| (a.start, a.end)));
        }
        for (link, intervals) in by_link {
            let peak = peak_overlap(intervals);
            let cap = self.capacity(link) as usize;
            if peak > cap {
                return Err(format!("{link} peaked at {peak} streams, capacity {cap}"));
            }
        }
        Ok(())
    }
}
