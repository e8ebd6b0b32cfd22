//! Main server / tracker ring / proxy ring / client hierarchy.
//!
//! Nodes are addressed by their position in the hierarchy rather than by an
//! opaque integer, so parent and ring relations are pure arithmetic.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Mms,
    Tracker { lpsg: u32 },
    Proxy { lpsg: u32, ps: u32 },
    Client { lpsg: u32, ps: u32, client: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Mms,
    Tracker,
    Proxy,
    Client,
}

impl NodeId {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodeId::Mms => NodeKind::Mms,
            NodeId::Tracker { .. } => NodeKind::Tracker,
            NodeId::Proxy { .. } => NodeKind::Proxy,
            NodeId::Client { .. } => NodeKind::Client,
        }
    }

    pub fn lpsg(&self) -> Option<u32> {
        match *self {
            NodeId::Mms => None,
            NodeId::Tracker { lpsg } | NodeId::Proxy { lpsg, .. } | NodeId::Client { lpsg, .. } => Some(lpsg),
        }
    }

    /// Proxy a client hangs off (the proxy itself for a proxy).
    pub fn proxy(&self) -> Option<NodeId> {
        match *self {
            NodeId::Proxy { lpsg, ps } | NodeId::Client { lpsg, ps, .. } => Some(NodeId::Proxy { lpsg, ps }),
            _ => None,
        }
    }

    pub fn tracker(&self) -> Option<NodeId> {
        self.lpsg().map(|lpsg| NodeId::Tracker { lpsg })
    }

    /// Parent in the delivery tree: client -> PS -> TR -> MMS.
    pub fn parent(&self) -> Option<NodeId> {
        match *self {
            NodeId::Mms => None,
            NodeId::Tracker { .. } => Some(NodeId::Mms),
            NodeId::Proxy { lpsg, .. } => Some(NodeId::Tracker { lpsg }),
            NodeId::Client { lpsg, ps, .. } => Some(NodeId::Proxy { lpsg, ps }),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Mms => write!(f, "MMS"),
            NodeId::Tracker { lpsg } => write!(f, "TR{lpsg}"),
            NodeId::Proxy { lpsg, ps } => write!(f, "PS{lpsg}.{ps}"),
            NodeId::Client { lpsg, ps, client } => write!(f, "C{lpsg}.{ps}.{client}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkClass {
    PsClient,
    ClientClient,
    TrPs,
    PsPs,
    TrTr,
    MmsTr,
}

impl LinkClass {
    pub const ALL: [LinkClass; 6] = [
        LinkClass::PsClient,
        LinkClass::ClientClient,
        LinkClass::TrPs,
        LinkClass::PsPs,
        LinkClass::TrTr,
        LinkClass::MmsTr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LinkClass::PsClient => "PS-CLIENT",
            LinkClass::ClientClient => "CLIENT-CLIENT",
            LinkClass::TrPs => "TR-PS",
            LinkClass::PsPs => "PS-PS",
            LinkClass::TrTr => "TR-TR",
            LinkClass::MmsTr => "MMS-TR",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    /// One-way setup delay.
    pub delay_ms: f64,
    /// Concurrent streams a single link of this class carries.
    pub capacity: u32,
}

/// Delay and capacity for every link class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTable {
    specs: [LinkSpec; 6],
}

impl Default for LinkTable {
    fn default() -> Self {
        let spec = |delay_ms, capacity| LinkSpec { delay_ms, capacity };
        Self {
            specs: [
                spec(100.0, 200), // PS-CLIENT
                spec(100.0, 4),   // CLIENT-CLIENT
                spec(100.0, 50),  // TR-PS
                spec(100.0, 50),  // PS-PS
                spec(300.0, 30),  // TR-TR
                spec(1200.0, 30), // MMS-TR
            ],
        }
    }
}

impl LinkTable {
    pub fn get(&self, class: LinkClass) -> LinkSpec {
        self.specs[class.index()]
    }

    pub fn set(&mut self, class: LinkClass, spec: LinkSpec) -> Result<()> {
        if !(spec.delay_ms >= 0.0) || !spec.delay_ms.is_finite() {
            return Err(Error::invalid(format!("{class}: delay must be >= 0")));
        }
        self.specs[class.index()] = spec;
        Ok(())
    }

    pub fn delay_ms(&self, class: LinkClass) -> f64 {
        self.get(class).delay_ms
    }

    pub fn capacity(&self, class: LinkClass) -> u32 {
        self.get(class).capacity
    }

    pub fn with_capacity(mut self, class: LinkClass, capacity: u32) -> Self {
        self.specs[class.index()].capacity = capacity;
        self
    }

    pub fn with_delay(mut self, class: LinkClass, delay_ms: f64) -> Self {
        self.specs[class.index()].delay_ms = delay_ms;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    lpsgs: u32,
    ps_per_lpsg: u32,
    clients_per_ps: u32,
    links: LinkTable,
}

/// Builds the hierarchy: `j_lpsgs` trackers in a ring, each with a ring of
/// `ps_per_lpsg` proxies, each serving `clients_per_ps` clients.
pub fn build_topology(j_lpsgs: u32, ps_per_lpsg: u32, clients_per_ps: u32, links: LinkTable) -> Result<Topology> {
    if j_lpsgs == 0 || ps_per_lpsg == 0 || clients_per_ps == 0 {
        return Err(Error::invalid(format!(
            "topology counts must be >= 1 (lpsgs={j_lpsgs}, ps={ps_per_lpsg}, clients={clients_per_ps})"
        )));
    }
    Ok(Topology {
        lpsgs: j_lpsgs,
        ps_per_lpsg,
        clients_per_ps,
        links,
    })
}

/// Sum of per-hop delays.
pub fn path_delay(topology: &Topology, hops: &[LinkClass]) -> f64 {
    hops.iter().map(|&c| topology.links.delay_ms(c)).sum()
}

impl Topology {
    pub fn lpsgs(&self) -> u32 {
        self.lpsgs
    }

    pub fn ps_per_lpsg(&self) -> u32 {
        self.ps_per_lpsg
    }

    pub fn clients_per_ps(&self) -> u32 {
        self.clients_per_ps
    }

    pub fn links(&self) -> &LinkTable {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        let j = self.lpsgs as usize;
        let m = self.ps_per_lpsg as usize;
        let c = self.clients_per_ps as usize;
        1 + j + j * m + j * m * c
    }

    /// Every node: MMS first, then each LPSG's tracker, proxies and clients.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::once(NodeId::Mms).chain((0..self.lpsgs).flat_map(move |lpsg| {
            std::iter::once(NodeId::Tracker { lpsg }).chain((0..self.ps_per_lpsg).flat_map(move |ps| {
                std::iter::once(NodeId::Proxy { lpsg, ps })
                    .chain((0..self.clients_per_ps).map(move |client| NodeId::Client { lpsg, ps, client }))
            }))
        }))
    }

    pub fn trackers(&self) -> impl Iterator<Item = NodeId> {
        (0..self.lpsgs).map(|lpsg| NodeId::Tracker { lpsg })
    }

    pub fn proxies(&self, lpsg: u32) -> impl Iterator<Item = NodeId> {
        (0..self.ps_per_lpsg).map(move |ps| NodeId::Proxy { lpsg, ps })
    }

    pub fn all_proxies(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.lpsgs).flat_map(move |l| self.proxies(l))
    }

    pub fn contains(&self, node: NodeId) -> bool {
        match node {
            NodeId::Mms => true,
            NodeId::Tracker { lpsg } => lpsg < self.lpsgs,
            NodeId::Proxy { lpsg, ps } => lpsg < self.lpsgs && ps < self.ps_per_lpsg,
            NodeId::Client { lpsg, ps, client } => {
                lpsg < self.lpsgs && ps < self.ps_per_lpsg && client < self.clients_per_ps
            }
        }
    }

    /// Clockwise successor in the tracker ring, or in the node's proxy ring.
    pub fn ring_next(&self, node: NodeId) -> Option<NodeId> {
        match node {
            NodeId::Tracker { lpsg } => Some(NodeId::Tracker {
                lpsg: (lpsg + 1) % self.lpsgs,
            }),
            NodeId::Proxy { lpsg, ps } => Some(NodeId::Proxy {
                lpsg,
                ps: (ps + 1) % self.ps_per_lpsg,
            }),
            _ => None,
        }
    }

    /// Distinct ring neighbors (left, right), lower index first.
    pub fn ring_neighbors(&self, node: NodeId) -> Vec<NodeId> {
        let (n, idx) = match node {
            NodeId::Tracker { lpsg } => (self.lpsgs, lpsg),
            NodeId::Proxy { ps, .. } => (self.ps_per_lpsg, ps),
            _ => return Vec::new(),
        };
        let mut idxs = vec![(idx + n - 1) % n, (idx + 1) % n];
        idxs.sort_unstable();
        idxs.dedup();
        idxs.into_iter()
            .map(|i| match node {
                NodeId::Tracker { .. } => NodeId::Tracker { lpsg: i },
                NodeId::Proxy { lpsg, .. } => NodeId::Proxy { lpsg, ps: i },
                _ => unreachable!(),
            })
            .collect()
    }

    /// Neighbor LPSGs reachable over one tracker-ring hop, excluding `lpsg`
    /// itself, lower index first.
    pub fn neighbor_lpsgs(&self, lpsg: u32) -> Vec<u32> {
        self.ring_neighbors(NodeId::Tracker { lpsg })
            .into_iter()
            .filter_map(|n| n.lpsg())
            .filter(|&l| l != lpsg)
            .collect()
    }
}
