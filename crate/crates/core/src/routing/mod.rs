//! Routing synthesis: forwarding tables (LFTs), per-port SL-to-VL tables and
//! the service level assigned to every source/destination pair.

mod d3r;
mod discovery;
mod dla;
mod dump;
mod updn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{ChannelId, ChannelKind, EndnodeId, NodeRef, SwitchId, Topology};

pub use d3r::route_d3r;
pub use discovery::{discover_groups, GroupAssignment};
pub use dla::route_dla;
pub use dump::{emit_fabric_dump, parse_fabric_dump};
pub use updn::{route_updn, UpDownOrder};

/// Service levels addressable by an SL2VL table.
pub const SL_COUNT: usize = 16;
/// VL indices representable in a table entry.
pub const VL_LIMIT: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoutingError {
    #[error("not a fully-connected Dragonfly: {reason}")]
    NotADragonfly {
        reason: String,
        /// Competing group partitions, when the failure is an ambiguity.
        readings: Vec<Vec<Vec<usize>>>,
    },
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("topology is disconnected: switch {0} unreachable")]
    Disconnected(u32),
    #[error("routing loop from endnode {src} to endnode {dst}")]
    RoutingLoop { src: u32, dst: u32 },
    #[error("switch {switch} forwards endnode {dst} to nonexistent port {port}")]
    BadPort { switch: u32, dst: u32, port: u16 },
    #[error("malformed fabric dump at line {line}: {reason}")]
    MalformedDump { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Dla,
    D3r,
    Updn,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Dla, Engine::D3r, Engine::Updn];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Dla => "dla",
            Engine::D3r => "d3r",
            Engine::Updn => "updn",
        }
    }

    /// Builds the configuration, rediscovering groups for the topology-aware engines.
    pub fn route(self, topology: &Topology) -> Result<RoutingConfig, RoutingError> {
        match self {
            Engine::Dla => route_dla(topology, &discover_or_label(topology)?),
            Engine::D3r => route_d3r(topology, &discover_or_label(topology)?),
            Engine::Updn => route_updn(topology),
        }
    }
}

/// Discovered groups, falling back to the builder's labels when the switch
/// graph admits several readings (for example `a = 2, h = 1`, whose switch graph
/// is a plain cycle) or none in which groups are maximal cliques (parallel
/// global channels can close triangles over a group's switches).
pub fn discover_or_label(topology: &Topology) -> Result<GroupAssignment, RoutingError> {
    match discover_groups(&topology.switch_graph()) {
        Err(RoutingError::NotADragonfly { .. }) => Ok(GroupAssignment::from_topology(topology)),
        other => other,
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dla" => Ok(Engine::Dla),
            "d3r" => Ok(Engine::D3r),
            "updn" => Ok(Engine::Updn),
            other => Err(format!(
                "unknown routing engine {other:?} (expected dla, d3r or updn)"
            )),
        }
    }
}

/// Destination endnode to output port, per switch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearForwardingTable {
    entries: Vec<Vec<u16>>,
}

impl LinearForwardingTable {
    pub fn new(entries: Vec<Vec<u16>>) -> Self {
        LinearForwardingTable { entries }
    }

    pub fn port(&self, switch: SwitchId, dst: EndnodeId) -> u16 {
        self.entries[switch.index()][dst.index()]
    }

    pub fn switch_entries(&self, switch: SwitchId) -> &[u16] {
        &self.entries[switch.index()]
    }

    pub fn num_switches(&self) -> usize {
        self.entries.len()
    }
}

/// Per switch, per output port, per input port: VL for each of the 16 SLs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sl2VlTable {
    radix: Vec<usize>,
    tables: Vec<Vec<[u8; SL_COUNT]>>,
}

impl Sl2VlTable {
    /// Fills every entry from `f(switch, out, in, sl)`.
    pub fn from_fn(radix: Vec<usize>, mut f: impl FnMut(usize, usize, usize, usize) -> u8) -> Self {
        let tables = radix
            .iter()
            .enumerate()
            .map(|(s, &r)| {
                let mut t = vec![[0u8; SL_COUNT]; r * r];
                for out in 0..r {
                    for inp in 0..r {
                        for (sl, vl) in t[out * r + inp].iter_mut().enumerate() {
                            *vl = f(s, out, inp, sl);
                        }
                    }
                }
                t
            })
            .collect();
        Sl2VlTable { radix, tables }
    }

    pub fn vl(&self, switch: SwitchId, out: u16, inp: u16, sl: u8) -> u8 {
        let r = self.radix[switch.index()];
        self.tables[switch.index()][out as usize * r + inp as usize][sl as usize]
    }

    pub fn row(&self, switch: SwitchId, out: u16, inp: u16) -> &[u8; SL_COUNT] {
        let r = self.radix[switch.index()];
        &self.tables[switch.index()][out as usize * r + inp as usize]
    }

    pub fn radix(&self, switch: SwitchId) -> usize {
        self.radix[switch.index()]
    }

    pub fn num_switches(&self) -> usize {
        self.radix.len()
    }

    fn set_all(&mut self, vl: u8) {
        for t in &mut self.tables {
            for row in t.iter_mut() {
                *row = [vl; SL_COUNT];
            }
        }
    }

    fn max_vl_for(&self, sls: &[bool; SL_COUNT]) -> u8 {
        let mut max = 0;
        for t in &self.tables {
            for row in t {
                for (sl, &vl) in row.iter().enumerate() {
                    if sls[sl] {
                        max = max.max(vl);
                    }
                }
            }
        }
        max
    }
}

/// Service level for every (source, destination) endnode pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlPolicy {
    n: usize,
    levels: Vec<u8>,
}

impl SlPolicy {
    pub fn uniform(n: usize, sl: u8) -> Self {
        SlPolicy {
            n,
            levels: vec![sl; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut levels = Vec::with_capacity(n * n);
        for src in 0..n {
            for dst in 0..n {
                levels.push(f(src, dst));
            }
        }
        SlPolicy { n, levels }
    }

    pub fn sl(&self, src: EndnodeId, dst: EndnodeId) -> u8 {
        self.levels[src.index() * self.n + dst.index()]
    }

    pub fn row(&self, src: usize) -> &[u8] {
        &self.levels[src * self.n..(src + 1) * self.n]
    }

    pub fn num_endnodes(&self) -> usize {
        self.n
    }

    /// SLs actually assigned to some pair of distinct endnodes.
    fn used(&self) -> [bool; SL_COUNT] {
        let mut used = [false; SL_COUNT];
        for src in 0..self.n {
            for dst in 0..self.n {
                if src != dst {
                    used[self.levels[src * self.n + dst] as usize] = true;
                }
            }
        }
        used
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resources {
    pub sls: usize,
    pub vls: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingConfig {
    pub engine: Engine,
    pub lft: LinearForwardingTable,
    pub sl2vl: Sl2VlTable,
    /// SL2VL of the endnode adapters (injection side).
    pub hca_sl2vl: [u8; SL_COUNT],
    pub sl_policy: SlPolicy,
    pub resources: Resources,
}

impl RoutingConfig {
    pub(crate) fn assemble(
        engine: Engine,
        lft: LinearForwardingTable,
        sl2vl: Sl2VlTable,
        hca_sl2vl: [u8; SL_COUNT],
        sl_policy: SlPolicy,
    ) -> Self {
        let resources = account(&sl2vl, &hca_sl2vl, &sl_policy);
        RoutingConfig {
            engine,
            lft,
            sl2vl,
            hca_sl2vl,
            sl_policy,
            resources,
        }
    }

    /// Same forwarding, every packet kept on VL 0 (breaks the DLA VL shift).
    pub fn without_vl_shift(mut self) -> Self {
        self.sl2vl.set_all(0);
        self.hca_sl2vl = [0; SL_COUNT];
        self.resources = account(&self.sl2vl, &self.hca_sl2vl, &self.sl_policy);
        self
    }

    pub fn sl(&self, src: EndnodeId, dst: EndnodeId) -> u8 {
        self.sl_policy.sl(src, dst)
    }
}

/// SL/VL counts derived from table contents rather than declared by the engine.
fn account(sl2vl: &Sl2VlTable, hca: &[u8; SL_COUNT], policy: &SlPolicy) -> Resources {
    let used = policy.used();
    let sls = used.iter().filter(|&&u| u).count();
    let mut max_vl = sl2vl.max_vl_for(&used);
    for (sl, &vl) in hca.iter().enumerate() {
        if used[sl] {
            max_vl = max_vl.max(vl);
        }
    }
    Resources {
        sls: sls.max(1),
        vls: max_vl as usize + 1,
    }
}

/// One traversed channel and the VL the packet occupies on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hop {
    pub channel: ChannelId,
    pub vl: u8,
}

/// Follows the tables from `src` to `dst`, injection channel included.
pub fn trace_route(
    topology: &Topology,
    config: &RoutingConfig,
    src: EndnodeId,
    dst: EndnodeId,
) -> Result<Vec<Hop>, RoutingError> {
    let mut hops = Vec::with_capacity(6);
    trace_route_into(topology, config, src, dst, &mut hops)?;
    Ok(hops)
}

/// [`trace_route`] into a reusable buffer.
pub fn trace_route_into(
    topology: &Topology,
    config: &RoutingConfig,
    src: EndnodeId,
    dst: EndnodeId,
    hops: &mut Vec<Hop>,
) -> Result<(), RoutingError> {
    hops.clear();
    let sl = config.sl(src, dst);
    let origin = topology.endnode(src);
    hops.push(Hop {
        channel: origin.out,
        vl: config.hca_sl2vl[sl as usize],
    });
    let mut switch = origin.switch;
    let mut in_port = origin.switch_port;
    for _ in 0..=topology.num_switches() {
        let out = config.lft.port(switch, dst);
        let node = topology.switch(switch);
        let port = node.ports.get(out as usize).ok_or(RoutingError::BadPort {
            switch: switch.0,
            dst: dst.0,
            port: out,
        })?;
        hops.push(Hop {
            channel: port.out,
            vl: config.sl2vl.vl(switch, out, in_port, sl),
        });
        match port.peer {
            NodeRef::Endnode(e) if e == dst => return Ok(()),
            NodeRef::Endnode(_) => {
                return Err(RoutingError::RoutingLoop {
                    src: src.0,
                    dst: dst.0,
                })
            }
            NodeRef::Switch(next) => {
                switch = next;
                in_port = port.peer_port;
            }
        }
    }
    Err(RoutingError::RoutingLoop {
        src: src.0,
        dst: dst.0,
    })
}

/// Port kinds as seen through a group assignment: a switch-to-switch port is
/// local when both ends share a group.
pub(crate) fn port_kinds(topology: &Topology, groups: &GroupAssignment) -> Vec<Vec<ChannelKind>> {
    topology
        .switches
        .iter()
        .map(|sw| {
            sw.ports
                .iter()
                .map(|port| match port.peer {
                    NodeRef::Endnode(_) => ChannelKind::Terminal,
                    NodeRef::Switch(peer) => {
                        if groups.group_of(peer.index()) == groups.group_of(sw.id.index()) {
                            ChannelKind::Local
                        } else {
                            ChannelKind::Global
                        }
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, DragonflyParams};

    #[test]
    fn engine_names_round_trip() {
        for e in Engine::ALL {
            assert_eq!(e.name().parse::<Engine>(), Ok(e));
        }
        assert!("lash".parse::<Engine>().is_err());
    }

    #[test]
    fn resource_accounting_for_desk_network() {
        let t = build_topology(DragonflyParams::new(4, 2, 2).unwrap()).unwrap();
        let expect = [
            (Engine::Dla, (1, 2)),
            (Engine::D3r, (2, 2)),
            (Engine::Updn, (1, 1)),
        ];
        for (engine, (sls, vls)) in expect {
            let cfg = engine.route(&t).unwrap();
            assert_eq!(cfg.resources, Resources { sls, vls }, "{engine}");
        }
        let flat = Engine::Dla.route(&t).unwrap().without_vl_shift();
        assert_eq!(flat.resources, Resources { sls: 1, vls: 1 });
    }

    #[test]
    fn every_engine_delivers_everywhere() {
        for params in [
            DragonflyParams::new(4, 2, 2).unwrap(),
            DragonflyParams::with_groups(3, 3, 2, 7).unwrap(),
            DragonflyParams::with_groups(1, 1, 1, 2).unwrap(),
            DragonflyParams::new(2, 1, 1).unwrap(),
        ] {
            let t = build_topology(params).unwrap();
            for engine in Engine::ALL {
                let cfg = engine.route(&t).unwrap();
                for s in 0..t.num_endnodes() {
                    for d in 0..t.num_endnodes() {
                        if s == d {
                            continue;
                        }
                        let hops = trace_route(&t, &cfg, EndnodeId(s as u32), EndnodeId(d as u32))
                            .unwrap();
                        assert!(hops.len() <= t.num_switches() + 1);
                        let last = t.channel(hops.last().unwrap().channel).unwrap();
                        assert_eq!(last.dst, NodeRef::Endnode(EndnodeId(d as u32)));
                    }
                }
            }
        }
    }
}
