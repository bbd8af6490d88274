//! Minimal Dragonfly routing with a single VL shift.
//!
//! Forwarding at switch `s` towards an endnode on switch `d` in group `G_d`:
//! a switch in another group without a global channel to `G_d` forwards to
//! the group mate owning that channel; a switch owning one takes it; inside
//! `G_d` the packet takes the local channel to `d`, and at `d` the terminal
//! port. Packets move from VL 0 to VL 1 when they leave a global channel
//! through a local one.

use rayon::prelude::*;

use super::{
    port_kinds, GroupAssignment, LinearForwardingTable, RoutingConfig, RoutingError, Sl2VlTable,
    SlPolicy, SL_COUNT,
};
use crate::routing::Engine;
use crate::topology::{ChannelKind, NodeRef, Topology};

/// Precomputed minimal next hops shared by DLA and D3R.
pub(crate) struct MinimalRoutes {
    /// `local[s][t]`: port of `s` towards group mate `t` (u16::MAX if none).
    local: Vec<Vec<u16>>,
    /// `gateway[G][H]`: (switch, port) owning the lowest global channel from G to H.
    gateway: Vec<Vec<Option<(usize, u16)>>>,
    /// `direct[s][H]`: lowest global port of `s` towards group H.
    direct: Vec<Vec<Option<u16>>>,
}

impl MinimalRoutes {
    pub(crate) fn new(topology: &Topology, groups: &GroupAssignment) -> Result<Self, RoutingError> {
        if groups.num_switches() != topology.num_switches() {
            return Err(RoutingError::UnsupportedTopology(format!(
                "group assignment covers {} switches, topology has {}",
                groups.num_switches(),
                topology.num_switches()
            )));
        }
        let n = topology.num_switches();
        let num_groups = groups.num_groups();
        let kinds = port_kinds(topology, groups);
        let mut local = vec![vec![u16::MAX; n]; n];
        let mut direct = vec![vec![None; num_groups]; n];
        let mut gateway = vec![vec![None; num_groups]; num_groups];
        for sw in &topology.switches {
            let s = sw.id.index();
            for (idx, port) in sw.ports.iter().enumerate() {
                let NodeRef::Switch(peer) = port.peer else {
                    continue;
                };
                let peer = peer.index();
                match kinds[s][idx] {
                    ChannelKind::Local => {
                        if local[s][peer] == u16::MAX {
                            local[s][peer] = idx as u16;
                        }
                    }
                    ChannelKind::Global => {
                        let h = groups.group_of(peer);
                        if direct[s][h].is_none() {
                            direct[s][h] = Some(idx as u16);
                        }
                        let gw = &mut gateway[groups.group_of(s)][h];
                        // switches and ports are both visited in increasing order
                        if gw.is_none() {
                            *gw = Some((s, idx as u16));
                        }
                    }
                    ChannelKind::Terminal => unreachable!(),
                }
            }
        }
        for block in groups.groups() {
            for &x in block {
                for &y in block {
                    if x != y && local[x][y] == u16::MAX {
                        return Err(RoutingError::UnsupportedTopology(format!(
                            "switches {x} and {y} share a group but are not directly linked"
                        )));
                    }
                }
            }
        }
        for (gi, row) in gateway.iter().enumerate() {
            for (gj, gw) in row.iter().enumerate() {
                if gi != gj && gw.is_none() {
                    return Err(RoutingError::UnsupportedTopology(format!(
                        "no global channel between groups {gi} and {gj}"
                    )));
                }
            }
        }
        Ok(MinimalRoutes {
            local,
            gateway,
            direct,
        })
    }

    pub(crate) fn lft(
        &self,
        topology: &Topology,
        groups: &GroupAssignment,
    ) -> LinearForwardingTable {
        let entries = topology
            .switches
            .par_iter()
            .map(|sw| {
                let s = sw.id.index();
                let gs = groups.group_of(s);
                topology
                    .endnodes
                    .iter()
                    .map(|e| {
                        let d = e.switch.index();
                        let gd = groups.group_of(d);
                        if d == s {
                            e.switch_port
                        } else if gd == gs {
                            self.local[s][d]
                        } else if let Some(port) = self.direct[s][gd] {
                            port
                        } else {
                            let (owner, _) = self.gateway[gs][gd].expect("checked in new()");
                            self.local[s][owner]
                        }
                    })
                    .collect()
            })
            .collect();
        LinearForwardingTable::new(entries)
    }
}

pub fn route_dla(
    topology: &Topology,
    groups: &GroupAssignment,
) -> Result<RoutingConfig, RoutingError> {
    let routes = MinimalRoutes::new(topology, groups)?;
    let lft = routes.lft(topology, groups);
    let kinds = port_kinds(topology, groups);
    let radix = topology.switches.iter().map(|s| s.radix()).collect();
    let sl2vl = Sl2VlTable::from_fn(radix, |s, out, inp, _sl| {
        u8::from(kinds[s][out] == ChannelKind::Local && kinds[s][inp] == ChannelKind::Global)
    });
    Ok(RoutingConfig::assemble(
        Engine::Dla,
        lft,
        sl2vl,
        [0; SL_COUNT],
        SlPolicy::uniform(topology.num_endnodes(), 0),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{discover_groups, trace_route};
    use crate::topology::{build_topology, DragonflyParams, EndnodeId, SwitchId};

    fn desk() -> (Topology, RoutingConfig) {
        let t = build_topology(DragonflyParams::new(4, 2, 2).unwrap()).unwrap();
        let groups = discover_groups(&t.switch_graph()).unwrap();
        let cfg = route_dla(&t, &groups).unwrap();
        (t, cfg)
    }

    #[test]
    fn same_switch_route_is_two_terminal_hops() {
        let (t, cfg) = desk();
        let hops = trace_route(&t, &cfg, EndnodeId(0), EndnodeId(1)).unwrap();
        let kinds: Vec<_> = hops
            .iter()
            .map(|h| t.channel(h.channel).unwrap().kind)
            .collect();
        assert_eq!(kinds, vec![ChannelKind::Terminal, ChannelKind::Terminal]);
    }

    #[test]
    fn sl2vl_function() {
        let (t, cfg) = desk();
        let sw = t.switch(SwitchId(0));
        let find = |kind| sw.ports.iter().position(|p| p.kind == kind).unwrap() as u16;
        let (tc, lc, gc) = (
            find(ChannelKind::Terminal),
            find(ChannelKind::Local),
            find(ChannelKind::Global),
        );
        assert_eq!(cfg.sl2vl.vl(SwitchId(0), lc, gc, 0), 1);
        assert_eq!(cfg.sl2vl.vl(SwitchId(0), gc, tc, 0), 0);
        assert_eq!(cfg.sl2vl.vl(SwitchId(0), lc, tc, 0), 0);
        assert_eq!(cfg.sl2vl.vl(SwitchId(0), tc, gc, 0), 0);
        for sl in 0..16 {
            assert_eq!(cfg.sl2vl.vl(SwitchId(0), lc, gc, sl), 1);
        }
    }

    #[test]
    fn rejects_missing_group_pair() {
        let t = build_topology(DragonflyParams::new(4, 2, 2).unwrap()).unwrap();
        // Relabel: glue two real groups into one block of 8; the block is not
        // fully connected internally.
        let mut blocks: Vec<Vec<usize>> = GroupAssignment::from_topology(&t).groups().to_vec();
        let merged: Vec<usize> = blocks.remove(1);
        blocks[0].extend(merged);
        let bogus = GroupAssignment::from_blocks(blocks);
        assert!(matches!(
            route_dla(&t, &bogus),
            Err(RoutingError::UnsupportedTopology(_))
        ));
    }
}
