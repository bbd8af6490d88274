//! Fully-connected Dragonfly construction.
//!
//! Switches are numbered densely group by group (`group * a + index`), and
//! endnodes switch by switch (`switch * p + k`). On every switch the ports are
//! laid out as `p` terminal ports, then `a - 1` local ports (one per group mate,
//! in id order), then the global ports in slot order.

use std::collections::VecDeque;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("invalid Dragonfly parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported parameters: {0}")]
    UnsupportedParams(String),
    #[error("unknown channel {0}")]
    UnknownChannel(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwitchId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EndnodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelId(pub u32);

impl SwitchId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EndnodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Shape of a Dragonfly: `a` switches per group, `h` global links per switch,
/// `p` endnodes per switch and `g` groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DragonflyParams {
    pub a: usize,
    pub h: usize,
    pub p: usize,
    pub g: usize,
}

impl DragonflyParams {
    /// Maximal fully-connected network, `g = ah + 1`.
    pub fn new(a: usize, h: usize, p: usize) -> Result<Self, TopologyError> {
        Self::with_groups(a, h, p, a * h + 1)
    }

    pub fn with_groups(a: usize, h: usize, p: usize, g: usize) -> Result<Self, TopologyError> {
        let params = DragonflyParams { a, h, p, g };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let DragonflyParams { a, h, p, g } = *self;
        if a < 1 || h < 1 || p < 1 {
            return Err(TopologyError::InvalidParams(format!(
                "a, h and p must all be at least 1 (got a={a}, h={h}, p={p})"
            )));
        }
        if g < 2 {
            return Err(TopologyError::InvalidParams(format!(
                "at least two groups are required (got g={g})"
            )));
        }
        if g > self.max_groups() {
            return Err(TopologyError::InvalidParams(format!(
                "g={g} exceeds a*h+1={} (not enough global ports)",
                self.max_groups()
            )));
        }
        if self.endnodes() > u32::MAX as usize / 2 {
            return Err(TopologyError::InvalidParams("network too large".into()));
        }
        Ok(())
    }

    pub fn max_groups(&self) -> usize {
        self.a * self.h + 1
    }

    pub fn is_maximal(&self) -> bool {
        self.g == self.max_groups()
    }

    pub fn switches(&self) -> usize {
        self.a * self.g
    }

    pub fn endnodes(&self) -> usize {
        self.a * self.p * self.g
    }

    /// `a = 2h = 2p`
    pub fn is_balanced(&self) -> bool {
        self.a == 2 * self.h && self.a == 2 * self.p
    }

    /// `a = 2h = p`
    pub fn is_oversubscribed(&self) -> bool {
        self.a == 2 * self.h && self.a == self.p
    }
}

impl fmt::Display for DragonflyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.a, self.h, self.p, self.g)
    }
}

impl FromStr for DragonflyParams {
    type Err = TopologyError;

    /// Parses `a,h,p` or `a,h,p,g`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .split(',')
            .map(|v| v.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TopologyError::InvalidParams(format!("{s:?}: {e}")))?;
        match *values.as_slice() {
            [a, h, p] => DragonflyParams::new(a, h, p),
            [a, h, p, g] => DragonflyParams::with_groups(a, h, p, g),
            _ => Err(TopologyError::InvalidParams(format!(
                "expected a,h,p or a,h,p,g, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    Terminal,
    Local,
    Global,
}

impl ChannelKind {
    pub fn short_name(self) -> &'static str {
        match self {
            ChannelKind::Terminal => "tc",
            ChannelKind::Local => "lc",
            ChannelKind::Global => "gc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeRef {
    Switch(SwitchId),
    Endnode(EndnodeId),
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Switch(s) => write!(f, "s{}", s.0),
            NodeRef::Endnode(e) => write!(f, "e{}", e.0),
        }
    }
}

/// One direction of a cable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channel {
    pub kind: ChannelKind,
    pub src: NodeRef,
    pub src_port: u16,
    pub dst: NodeRef,
    pub dst_port: u16,
    pub reverse: ChannelId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Port {
    pub kind: ChannelKind,
    pub peer: NodeRef,
    pub peer_port: u16,
    /// Channel leaving through this port.
    pub out: ChannelId,
    /// Channel arriving at this port.
    pub inp: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchNode {
    pub id: SwitchId,
    pub group: usize,
    pub ports: Vec<Port>,
}

impl SwitchNode {
    pub fn radix(&self) -> usize {
        self.ports.len()
    }

    /// (terminal, local, global) port counts.
    pub fn port_signature(&self) -> (usize, usize, usize) {
        let mut sig = (0, 0, 0);
        for port in &self.ports {
            match port.kind {
                ChannelKind::Terminal => sig.0 += 1,
                ChannelKind::Local => sig.1 += 1,
                ChannelKind::Global => sig.2 += 1,
            }
        }
        sig
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endnode {
    pub id: EndnodeId,
    pub switch: SwitchId,
    pub switch_port: u16,
    /// Injection channel (endnode to switch).
    pub out: ChannelId,
    /// Ejection channel (switch to endnode).
    pub inp: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub params: DragonflyParams,
    pub switches: Vec<SwitchNode>,
    pub endnodes: Vec<Endnode>,
    pub channels: Vec<Channel>,
}

struct Builder {
    switches: Vec<SwitchNode>,
    endnodes: Vec<Endnode>,
    channels: Vec<Channel>,
}

impl Builder {
    fn cable(
        &mut self,
        kind: ChannelKind,
        x: (NodeRef, u16),
        y: (NodeRef, u16),
    ) -> (ChannelId, ChannelId) {
        let fwd = ChannelId(self.channels.len() as u32);
        let rev = ChannelId(fwd.0 + 1);
        self.channels.push(Channel {
            kind,
            src: x.0,
            src_port: x.1,
            dst: y.0,
            dst_port: y.1,
            reverse: rev,
        });
        self.channels.push(Channel {
            kind,
            src: y.0,
            src_port: y.1,
            dst: x.0,
            dst_port: x.1,
            reverse: fwd,
        });
        (fwd, rev)
    }

    fn switch_link(&mut self, kind: ChannelKind, x: SwitchId, y: SwitchId) {
        let xp = self.switches[x.index()].ports.len() as u16;
        let yp = self.switches[y.index()].ports.len() as u16;
        let (fwd, rev) = self.cable(kind, (NodeRef::Switch(x), xp), (NodeRef::Switch(y), yp));
        self.switches[x.index()].ports.push(Port {
            kind,
            peer: NodeRef::Switch(y),
            peer_port: yp,
            out: fwd,
            inp: rev,
        });
        self.switches[y.index()].ports.push(Port {
            kind,
            peer: NodeRef::Switch(x),
            peer_port: xp,
            out: rev,
            inp: fwd,
        });
    }
}

/// Global channels between group pairs, in creation order.
///
/// Pairs are visited in lexicographic order, one channel per pair per round,
/// while both groups still have a free global slot. With `g = ah + 1` this is a
/// single round and every pair gets exactly one channel; with fewer groups the
/// surplus slots produce parallel channels.
pub fn global_channel_plan(params: &DragonflyParams) -> Vec<(usize, usize)> {
    let slots = params.a * params.h;
    let mut used = vec![0usize; params.g];
    let mut plan = Vec::new();
    loop {
        let mut added = false;
        for i in 0..params.g {
            for j in (i + 1)..params.g {
                if used[i] < slots && used[j] < slots {
                    used[i] += 1;
                    used[j] += 1;
                    plan.push((i, j));
                    added = true;
                }
            }
        }
        if !added {
            break;
        }
    }
    plan
}

pub fn build_topology(params: DragonflyParams) -> Result<Topology, TopologyError> {
    params.validate()?;
    let DragonflyParams { a, h, p, g } = params;
    let mut b = Builder {
        switches: (0..a * g)
            .map(|s| SwitchNode {
                id: SwitchId(s as u32),
                group: s / a,
                ports: Vec::with_capacity(p + a - 1 + h),
            })
            .collect(),
        endnodes: Vec::with_capacity(params.endnodes()),
        channels: Vec::new(),
    };

    for s in 0..a * g {
        let sw = SwitchId(s as u32);
        for k in 0..p {
            let e = EndnodeId((s * p + k) as u32);
            let port = k as u16;
            let (out, inp) = b.cable(
                ChannelKind::Terminal,
                (NodeRef::Endnode(e), 0),
                (NodeRef::Switch(sw), port),
            );
            b.switches[s].ports.push(Port {
                kind: ChannelKind::Terminal,
                peer: NodeRef::Endnode(e),
                peer_port: 0,
                out: inp,
                inp: out,
            });
            b.endnodes.push(Endnode {
                id: e,
                switch: sw,
                switch_port: port,
                out,
                inp,
            });
        }
    }

    // Visiting (lower, higher) pairs in order hands every switch its group
    // mates in id order.
    for grp in 0..g {
        for x in 0..a {
            for y in (x + 1)..a {
                b.switch_link(
                    ChannelKind::Local,
                    SwitchId((grp * a + x) as u32),
                    SwitchId((grp * a + y) as u32),
                );
            }
        }
    }

    // A group's k-th global channel sits on switch k mod a. In a maximal
    // network k is the peer's index with the group itself removed.
    let plan = global_channel_plan(&params);
    let mut next_slot = vec![0usize; g];
    for (i, j) in plan {
        let si = next_slot[i];
        let sj = next_slot[j];
        next_slot[i] += 1;
        next_slot[j] += 1;
        let xi = SwitchId((i * a + si % a) as u32);
        let xj = SwitchId((j * a + sj % a) as u32);
        b.switch_link(ChannelKind::Global, xi, xj);
    }

    Ok(Topology {
        params,
        switches: b.switches,
        endnodes: b.endnodes,
        channels: b.channels,
    })
}

impl Topology {
    pub fn switch(&self, id: SwitchId) -> &SwitchNode {
        &self.switches[id.index()]
    }

    pub fn endnode(&self, id: EndnodeId) -> &Endnode {
        &self.endnodes[id.index()]
    }

    pub fn channel(&self, id: ChannelId) -> Result<&Channel, TopologyError> {
        self.channels
            .get(id.index())
            .ok_or(TopologyError::UnknownChannel(id.0))
    }

    pub fn num_endnodes(&self) -> usize {
        self.endnodes.len()
    }

    pub fn num_switches(&self) -> usize {
        self.switches.len()
    }

    /// Group id of the switch side of a channel (the source for switch-to-switch channels).
    pub fn channel_group(&self, id: ChannelId) -> Result<usize, TopologyError> {
        let ch = self.channel(id)?;
        let sw = match (ch.src, ch.dst) {
            (NodeRef::Switch(s), _) | (NodeRef::Endnode(_), NodeRef::Switch(s)) => s,
            (NodeRef::Endnode(_), NodeRef::Endnode(_)) => {
                unreachable!("endnodes are never wired together")
            }
        };
        Ok(self.switch(sw).group)
    }

    /// Number of cables of each kind: (terminal, local, global).
    pub fn cable_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for ch in self.channels.iter().step_by(2) {
            match ch.kind {
                ChannelKind::Terminal => counts.0 += 1,
                ChannelKind::Local => counts.1 += 1,
                ChannelKind::Global => counts.2 += 1,
            }
        }
        counts
    }

    pub fn max_radix(&self) -> usize {
        self.switches
            .iter()
            .map(SwitchNode::radix)
            .max()
            .unwrap_or(0)
    }

    /// The bare switch-to-switch graph with group labels and channel kinds erased.
    pub fn switch_graph(&self) -> SwitchGraph {
        let mut edges = Vec::new();
        for ch in &self.channels {
            if let (NodeRef::Switch(x), NodeRef::Switch(y)) = (ch.src, ch.dst) {
                if x < y {
                    edges.push((x.index(), y.index()));
                }
            }
        }
        SwitchGraph::from_edges(self.num_switches(), &edges)
    }

    /// Connectivity of the whole graph, endnodes included.
    pub fn is_connected(&self) -> bool {
        let n_sw = self.num_switches();
        let total = n_sw + self.num_endnodes();
        let id = |node: NodeRef| match node {
            NodeRef::Switch(s) => s.index(),
            NodeRef::Endnode(e) => n_sw + e.index(),
        };
        let mut adj = vec![Vec::new(); total];
        for ch in &self.channels {
            adj[id(ch.src)].push(id(ch.dst));
        }
        let mut seen = vec![false; total];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == total
    }

    /// Deterministic text dump, one line per directed channel.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (idx, ch) in self.channels.iter().enumerate() {
            let group = self
                .channel_group(ChannelId(idx as u32))
                .expect("channel exists");
            let _ = writeln!(
                out,
                "{}:{} -> {}:{} kind={} group={}",
                ch.src,
                ch.src_port,
                ch.dst,
                ch.dst_port,
                ch.kind.short_name(),
                group
            );
        }
        out
    }
}

pub fn channel_kind(topology: &Topology, channel: ChannelId) -> Result<ChannelKind, TopologyError> {
    topology.channel(channel).map(|ch| ch.kind)
}

/// Unlabeled, undirected switch graph (parallel cables collapsed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchGraph {
    adjacency: Vec<Vec<usize>>,
}

impl SwitchGraph {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(x, y) in edges {
            if x != y {
                adjacency[x].push(y);
                adjacency[y].push(x);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        SwitchGraph { adjacency }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn adjacent(&self, x: usize, y: usize) -> bool {
        self.adjacency[x].binary_search(&y).is_ok()
    }

    /// The vertex itself plus everything adjacent to it, sorted.
    pub fn closed_neighborhood(&self, v: usize) -> Vec<usize> {
        let mut set = self.adjacency[v].clone();
        let pos = set.binary_search(&v).unwrap_or_else(|p| p);
        set.insert(pos, v);
        set
    }
}

/// Per-channel flow counts under minimal routing and all-to-all traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowCounts {
    pub f_t: u64,
    pub f_g: u64,
    pub f_l: u64,
    pub ratio_g_over_l: f64,
}

pub fn analytic_flow_counts(params: &DragonflyParams) -> Result<FlowCounts, TopologyError> {
    params.validate()?;
    if !params.is_maximal() {
        return Err(TopologyError::UnsupportedParams(format!(
            "flow formulas assume g = a*h+1 = {} (got g={})",
            params.max_groups(),
            params.g
        )));
    }
    let (a, h, p) = (params.a as u64, params.h as u64, params.p as u64);
    let n = a * p * (a * h + 1);
    let f_t = n - 1;
    let f_g = (a * p) * (a * p);
    let f_l = p * p + 2 * a * h * p * p;
    Ok(FlowCounts {
        f_t,
        f_g,
        f_l,
        ratio_g_over_l: f_g as f64 / f_l as f64,
    })
}
