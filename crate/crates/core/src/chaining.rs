//! Client chaining: the streaming-clients list (SCL) kept per video, chain
//! admission against the pref-1 threshold, applicant lists, closing and
//! failure recovery.
//!
//! A chain is a single path. The first node is fed by the proxy; every later
//! node is fed by its predecessor. Nodes are stored in arrival order, which
//! is also path order, and carry explicit parent/child links so the path can
//! be verified independently.

use std::collections::BTreeMap;
use std::fmt;

use crate::catalog::VideoId;
use crate::error::{Error, Result};
use crate::topology::NodeId;

/// One viewing session. A client that requests twice gets two members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemberId(pub u64);

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Streaming,
    /// Playback finished but still feeding its child.
    Draining,
    Closed,
    Failed,
}

impl NodeState {
    pub fn is_active(&self) -> bool {
        matches!(self, NodeState::Streaming | NodeState::Draining)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upstream {
    /// The proxy holding pref-1 feeds this node directly.
    Proxy,
    Member(MemberId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainNode {
    pub member: MemberId,
    pub client: NodeId,
    pub arrival_min: f64,
    pub parent: Upstream,
    pub child: Option<MemberId>,
    pub state: NodeState,
}

/// `<video id - sz(pref-1) - list of clients>` for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SclEntry {
    pub video: VideoId,
    pub sz_pref1_min: f64,
    pub host_ps: NodeId,
    pub is_streaming: bool,
    chain: Vec<ChainNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lac {
    /// Candidate parents, most recent last.
    pub members: Vec<MemberId>,
    pub d: usize,
}

impl Lac {
    pub fn designated_parent(&self) -> Option<MemberId> {
        self.members.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    Join { parent: MemberId, lac: Lac },
    NewStream,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CloseOutcome {
    /// These members reached CLOSED, the requester first, then any draining
    /// ancestors that had nothing left to feed.
    Closed(Vec<MemberId>),
    Draining,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpliceOutcome {
    /// No child to hand over.
    Closed(Vec<MemberId>),
    /// The leaver's parent now feeds the leaver's child directly.
    Spliced {
        parent: MemberId,
        child: MemberId,
        closed: Vec<MemberId>,
    },
    /// The proxy must open a fresh stream to `child` at its current offset.
    /// When the leaver was mid-chain, `child` and its descendants leave as a
    /// separate chain in `detached`.
    Restream {
        child: MemberId,
        detached: Option<SclEntry>,
        closed: Vec<MemberId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRecord {
    pub failed: MemberId,
    pub child: Option<MemberId>,
    /// New feed for `child`: the failed node's parent, or the proxy.
    pub new_parent: Option<Upstream>,
    pub failed_at_min: f64,
    pub detected_at_min: f64,
    /// Time the child goes without data; zero when there is no child.
    pub stall_sec: f64,
    /// Draining ancestors closed because the failed tail was their last child.
    pub closed: Vec<MemberId>,
}

impl SclEntry {
    pub fn new(video: VideoId, sz_pref1_min: f64, host_ps: NodeId) -> Self {
        Self {
            video,
            sz_pref1_min,
            host_ps,
            is_streaming: false,
            chain: Vec::new(),
        }
    }

    /// New chain whose head is fed by the proxy.
    pub fn with_head(video: VideoId, sz_pref1_min: f64, host_ps: NodeId, member: MemberId, client: NodeId, arrival_min: f64) -> Self {
        let mut e = Self::new(video, sz_pref1_min, host_ps);
        e.chain.push(ChainNode {
            member,
            client,
            arrival_min,
            parent: Upstream::Proxy,
            child: None,
            state: NodeState::Streaming,
        });
        e.refresh();
        e
    }

    pub fn chain(&self) -> &[ChainNode] {
        &self.chain
    }

    pub fn members(&self) -> impl Iterator<Item = MemberId> + '_ {
        self.chain.iter().map(|n| n.member)
    }

    pub fn node(&self, member: MemberId) -> Option<&ChainNode> {
        self.chain.iter().find(|n| n.member == member)
    }

    pub fn contains(&self, member: MemberId) -> bool {
        self.position(member).is_some()
    }

    pub fn active_count(&self) -> usize {
        self.chain.iter().filter(|n| n.state.is_active()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    fn position(&self, member: MemberId) -> Option<usize> {
        self.chain.iter().position(|n| n.member == member)
    }

    fn node_mut(&mut self, member: MemberId) -> Option<&mut ChainNode> {
        self.chain.iter_mut().find(|n| n.member == member)
    }

    fn refresh(&mut self) {
        self.is_streaming = self.chain.iter().any(|n| n.state.is_active());
    }

    fn missing(&self, member: MemberId) -> Error {
        Error::invalid(format!("{member} is not in the chain of {}", self.video))
    }

    /// Removes `member` and closes any draining ancestors left childless.
    fn remove_and_cascade(&mut self, member: MemberId) -> Vec<MemberId> {
        let mut closed = Vec::new();
        let mut next = Some(member);
        while let Some(m) = next.take() {
            let Some(pos) = self.position(m) else { break };
            let node = self.chain.remove(pos);
            closed.push(m);
            if let Upstream::Member(p) = node.parent {
                if let Some(pn) = self.node_mut(p) {
                    if pn.child == Some(m) {
                        pn.child = None;
                        if pn.state == NodeState::Draining {
                            next = Some(p);
                        }
                    }
                }
            }
        }
        closed
    }

    /// Checks that active nodes form one path from a proxy-fed head, with
    /// consistent links and strictly increasing arrivals.
    pub fn check_linear(&self) -> std::result::Result<(), String> {
        let is_streaming = self.chain.iter().any(|n| n.state.is_active());
        if self.is_streaming != is_streaming {
            return Err(format!("{}: is_streaming flag out of date", self.video));
        }
        if self.chain.iter().any(|n| !n.state.is_active()) {
            return Err(format!("{}: inactive node left in chain", self.video));
        }
        let Some(head) = self.chain.first() else {
            return Ok(());
        };
        if head.parent != Upstream::Proxy {
            return Err(format!("{}: head {} is not fed by the proxy", self.video, head.member));
        }
        let mut visited = 0usize;
        let mut cur = head;
        let mut prev_arrival = f64::NEG_INFINITY;
        loop {
            visited += 1;
            if visited > self.chain.len() {
                return Err(format!("{}: cycle through {}", self.video, cur.member));
            }
            if !(cur.arrival_min > prev_arrival) {
                return Err(format!("{}: arrivals not increasing at {}", self.video, cur.member));
            }
            prev_arrival = cur.arrival_min;
            let Some(c) = cur.child else { break };
            let Some(cn) = self.node(c) else {
                return Err(format!("{}: {} points at missing child {c}", self.video, cur.member));
            };
            if cn.parent != Upstream::Member(cur.member) {
                return Err(format!("{}: {c} does not point back at {}", self.video, cur.member));
            }
            cur = cn;
        }
        if visited != self.chain.len() {
            return Err(format!(
                "{}: path covers {visited} of {} nodes",
                self.video,
                self.chain.len()
            ));
        }
        Ok(())
    }
}

/// The last `d` streaming members, order preserved. Draining members are
/// leaving and are not offered as parents.
pub fn build_lac(entry: &SclEntry, d: usize) -> Lac {
    let streaming: Vec<MemberId> = entry
        .chain
        .iter()
        .filter(|n| n.state == NodeState::Streaming)
        .map(|n| n.member)
        .collect();
    let skip = streaming.len().saturating_sub(d);
    Lac {
        members: streaming[skip..].to_vec(),
        d,
    }
}

/// Admission decision without mutating the entry.
pub fn peek_admit(entry: &SclEntry, now_min: f64, d: usize) -> Admission {
    if !entry.is_streaming || d == 0 {
        return Admission::NewStream;
    }
    let lac = build_lac(entry, d);
    let Some(parent) = lac.designated_parent() else {
        return Admission::NewStream;
    };
    let pn = entry.node(parent).expect("lac members come from the chain");
    if pn.child.is_some() || now_min <= pn.arrival_min {
        return Admission::NewStream;
    }
    if now_min - pn.arrival_min <= entry.sz_pref1_min {
        Admission::Join { parent, lac }
    } else {
        Admission::NewStream
    }
}

/// Joins `member` to the chain when the arrival gap to the most recent
/// streaming member is within the pref-1 length. On `NewStream` the entry is
/// untouched and the caller starts a fresh chain.
pub fn try_admit(entry: &mut SclEntry, member: MemberId, client: NodeId, now_min: f64, d: usize) -> Result<Admission> {
    if entry.contains(member) {
        return Err(Error::invalid(format!("{member} already in the chain of {}", entry.video)));
    }
    let decision = peek_admit(entry, now_min, d);
    if let Admission::Join { parent, .. } = &decision {
        entry.node_mut(*parent).expect("parent in chain").child = Some(member);
        entry.chain.push(ChainNode {
            member,
            client,
            arrival_min: now_min,
            parent: Upstream::Member(*parent),
            child: None,
            state: NodeState::Streaming,
        });
        entry.refresh();
    }
    Ok(decision)
}

/// Playback of `member` completed. With a child it keeps feeding (DRAINING);
/// otherwise it closes, possibly closing draining ancestors in turn.
pub fn close_finished(entry: &mut SclEntry, member: MemberId) -> Result<CloseOutcome> {
    let missing = entry.missing(member);
    let node = entry.node_mut(member).ok_or(missing)?;
    if node.state != NodeState::Streaming {
        return Err(Error::invalid(format!("{member} is not streaming ({:?})", node.state)));
    }
    let outcome = if node.child.is_some() {
        node.state = NodeState::Draining;
        CloseOutcome::Draining
    } else {
        CloseOutcome::Closed(entry.remove_and_cascade(member))
    };
    entry.refresh();
    Ok(outcome)
}

/// `member` stops watching before the end.
///
/// A childless leaver just closes. Otherwise, if its child arrived within
/// `sz_pref1_min` of its parent, the parent takes the child over; if not, or
/// if the leaver was the head, the proxy restreams to the child.
pub fn close_early(entry: &mut SclEntry, member: MemberId) -> Result<SpliceOutcome> {
    let pos = entry.position(member).ok_or_else(|| entry.missing(member))?;
    let node = entry.chain[pos].clone();
    if node.state != NodeState::Streaming {
        return Err(Error::invalid(format!("{member} is not streaming ({:?})", node.state)));
    }
    let Some(child) = node.child else {
        let closed = entry.remove_and_cascade(member);
        entry.refresh();
        return Ok(SpliceOutcome::Closed(closed));
    };
    let child_arrival = entry.node(child).expect("child in chain").arrival_min;

    let outcome = match node.parent {
        Upstream::Proxy => {
            entry.chain.remove(pos);
            entry.node_mut(child).expect("child in chain").parent = Upstream::Proxy;
            SpliceOutcome::Restream {
                child,
                detached: None,
                closed: vec![member],
            }
        }
        Upstream::Member(parent) => {
            let parent_arrival = entry.node(parent).expect("parent in chain").arrival_min;
            if (child_arrival - parent_arrival).abs() <= entry.sz_pref1_min {
                entry.chain.remove(pos);
                entry.node_mut(parent).expect("parent in chain").child = Some(child);
                entry.node_mut(child).expect("child in chain").parent = Upstream::Member(parent);
                SpliceOutcome::Spliced {
                    parent,
                    child,
                    closed: vec![member],
                }
            } else {
                // child..tail becomes its own chain headed by the proxy
                let mut tail = entry.chain.split_off(pos + 1);
                tail[0].parent = Upstream::Proxy;
                let mut detached = SclEntry::new(entry.video, entry.sz_pref1_min, entry.host_ps);
                detached.chain = tail;
                detached.refresh();
                let closed = entry.remove_and_cascade(member);
                SpliceOutcome::Restream {
                    child,
                    detached: Some(detached),
                    closed,
                }
            }
        }
    };
    entry.refresh();
    Ok(outcome)
}

/// `failed` stopped sending at `failed_at_min`. Its child notices after
/// `g_sec` seconds; the failed node's parent (or the proxy, for a head)
/// takes the child over and the failed node leaves the list. Descendants
/// below the child keep their links.
pub fn detect_and_recover_failure(entry: &mut SclEntry, failed: MemberId, failed_at_min: f64, g_sec: f64) -> Result<RecoveryRecord> {
    let pos = entry.position(failed).ok_or_else(|| entry.missing(failed))?;
    let node = entry.chain[pos].clone();
    if !node.state.is_active() {
        return Err(Error::invalid(format!("{failed} cannot fail from {:?}", node.state)));
    }
    if !(g_sec >= 0.0) {
        return Err(Error::invalid(format!("detection timeout must be >= 0, got {g_sec}")));
    }
    entry.chain[pos].state = NodeState::Failed;

    let mut record = RecoveryRecord {
        failed,
        child: node.child,
        new_parent: None,
        failed_at_min,
        detected_at_min: failed_at_min,
        stall_sec: 0.0,
        closed: Vec::new(),
    };

    match node.child {
        None => {
            // tail: nothing to re-parent, just drop it
            let closed = entry.remove_and_cascade(failed);
            record.closed = closed.into_iter().filter(|&m| m != failed).collect();
        }
        Some(child) => {
            entry.chain.remove(pos);
            entry.node_mut(child).expect("child in chain").parent = node.parent;
            if let Upstream::Member(p) = node.parent {
                entry.node_mut(p).expect("parent in chain").child = Some(child);
            }
            record.new_parent = Some(node.parent);
            record.detected_at_min = failed_at_min + g_sec / 60.0;
            record.stall_sec = g_sec;
        }
    }
    entry.refresh();
    Ok(record)
}

/// Identifies one chain inside an [`SclTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChainId(pub u64);

/// All chains of a run. Each (LPSG, video) pair has at most one current
/// chain that newcomers may join; older chains keep streaming until their
/// members finish.
#[derive(Debug, Clone, Default)]
pub struct SclTable {
    chains: BTreeMap<ChainId, SclEntry>,
    current: BTreeMap<(u32, VideoId), ChainId>,
    member_chain: BTreeMap<MemberId, ChainId>,
    next_id: u64,
}

impl SclTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current(&self, lpsg: u32, video: VideoId) -> Option<(ChainId, &SclEntry)> {
        let id = *self.current.get(&(lpsg, video))?;
        self.chains.get(&id).map(|e| (id, e))
    }

    pub fn get(&self, id: ChainId) -> Option<&SclEntry> {
        self.chains.get(&id)
    }

    pub fn get_mut(&mut self, id: ChainId) -> Option<&mut SclEntry> {
        self.chains.get_mut(&id)
    }

    pub fn chain_of(&self, member: MemberId) -> Option<ChainId> {
        self.member_chain.get(&member).copied()
    }

    pub fn chains(&self) -> impl Iterator<Item = (ChainId, &SclEntry)> {
        self.chains.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    /// Adds a chain and makes it current for its (LPSG, video).
    pub fn insert(&mut self, lpsg: u32, entry: SclEntry) -> ChainId {
        let id = ChainId(self.next_id);
        self.next_id += 1;
        for m in entry.members() {
            self.member_chain.insert(m, id);
        }
        self.current.insert((lpsg, entry.video), id);
        self.chains.insert(id, entry);
        id
    }

    /// Registers the tail split off chain `from`. It takes over as current
    /// only if `from` was current, since it holds that chain's latest members.
    pub fn insert_detached(&mut self, lpsg: u32, from: ChainId, entry: SclEntry) -> ChainId {
        let was_current = self.current.get(&(lpsg, entry.video)) == Some(&from);
        let id = ChainId(self.next_id);
        self.next_id += 1;
        for m in entry.members() {
            self.member_chain.insert(m, id);
        }
        if was_current {
            self.current.insert((lpsg, entry.video), id);
        }
        self.chains.insert(id, entry);
        id
    }

    /// Admits `member` to the current chain of (lpsg, video), if any.
    pub fn try_join(&mut self, lpsg: u32, video: VideoId, member: MemberId, client: NodeId, now_min: f64, d: usize) -> Result<Option<(ChainId, MemberId)>> {
        let Some(&id) = self.current.get(&(lpsg, video)) else {
            return Ok(None);
        };
        let entry = self.chains.get_mut(&id).expect("current chain exists");
        match try_admit(entry, member, client, now_min, d)? {
            Admission::Join { parent, .. } => {
                self.member_chain.insert(member, id);
                Ok(Some((id, parent)))
            }
            Admission::NewStream => Ok(None),
        }
    }

    /// Drops bookkeeping for members that left `id` and removes the chain
    /// once empty.
    pub fn forget(&mut self, id: ChainId, members: &[MemberId]) {
        for m in members {
            if self.member_chain.get(m) == Some(&id) {
                self.member_chain.remove(m);
            }
        }
        if self.chains.get(&id).is_some_and(|e| e.is_empty()) {
            let e = self.chains.remove(&id).expect("checked");
            self.current.retain(|_, c| *c != id);
            debug_assert!(e.is_empty());
        }
    }
}
