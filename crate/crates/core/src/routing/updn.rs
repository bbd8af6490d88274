//! Up*/Down* routing over a BFS spanning tree rooted at switch 0.
//!
//! Every switch-to-switch channel is oriented by `(level, id)`: it goes up when
//! it points at a smaller pair. A legal route climbs zero or more up channels
//! and then descends zero or more down channels. Forwarding is destination
//! based, so once a switch can reach the destination by descending only, it
//! must do so for every packet it forwards: a packet that arrived on a down
//! channel is not allowed to climb again. Switches without such a path climb
//! towards the up neighbor closest (by legal distance) to the destination.

use std::collections::VecDeque;

use rayon::prelude::*;

use super::{LinearForwardingTable, RoutingConfig, RoutingError, Sl2VlTable, SlPolicy, SL_COUNT};
use crate::routing::Engine;
use crate::topology::{NodeRef, Topology};

const UNREACHED: u32 = u32::MAX;

/// Channel orientation of an up*/down* configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpDownOrder {
    pub level: Vec<u32>,
}

impl UpDownOrder {
    pub fn new(topology: &Topology) -> Result<Self, RoutingError> {
        let n = topology.num_switches();
        let mut level = vec![UNREACHED; n];
        let mut queue = VecDeque::new();
        if n > 0 {
            level[0] = 0;
            queue.push_back(0usize);
        }
        while let Some(v) = queue.pop_front() {
            for port in &topology.switches[v].ports {
                if let NodeRef::Switch(u) = port.peer {
                    if level[u.index()] == UNREACHED {
                        level[u.index()] = level[v] + 1;
                        queue.push_back(u.index());
                    }
                }
            }
        }
        if let Some(s) = level.iter().position(|&l| l == UNREACHED) {
            return Err(RoutingError::Disconnected(s as u32));
        }
        Ok(UpDownOrder { level })
    }

    fn rank(&self, s: usize) -> (u32, usize) {
        (self.level[s], s)
    }

    /// Whether the channel `from -> to` points up.
    pub fn is_up(&self, from: usize, to: usize) -> bool {
        self.rank(to) < self.rank(from)
    }
}

/// Next-hop ports of every switch towards destination switch `t`.
fn next_hops(topology: &Topology, order: &UpDownOrder, by_rank: &[usize], t: usize) -> Vec<u16> {
    let n = topology.num_switches();
    // Shortest descending-only distance to t.
    let mut down = vec![UNREACHED; n];
    down[t] = 0;
    let mut queue = VecDeque::from([t]);
    while let Some(v) = queue.pop_front() {
        for port in &topology.switches[v].ports {
            if let NodeRef::Switch(u) = port.peer {
                let u = u.index();
                // u -> v descends when v ranks above u
                if down[u] == UNREACHED && !order.is_up(u, v) {
                    down[u] = down[v] + 1;
                    queue.push_back(u);
                }
            }
        }
    }
    let mut dist = vec![UNREACHED; n];
    let mut hop = vec![u16::MAX; n];
    for &s in by_rank {
        if down[s] != UNREACHED {
            dist[s] = down[s];
            if s != t {
                hop[s] = topology.switches[s]
                    .ports
                    .iter()
                    .position(|port| match port.peer {
                        NodeRef::Switch(v) => {
                            !order.is_up(s, v.index())
                                && down[v.index()] != UNREACHED
                                && down[v.index()] + 1 == down[s]
                        }
                        NodeRef::Endnode(_) => false,
                    })
                    .expect("descending path has a first hop") as u16;
            }
            continue;
        }
        // Up neighbors rank lower and were settled earlier in this loop.
        let mut best: Option<(u32, u16)> = None;
        for (idx, port) in topology.switches[s].ports.iter().enumerate() {
            if let NodeRef::Switch(u) = port.peer {
                let u = u.index();
                if order.is_up(s, u)
                    && dist[u] != UNREACHED
                    && best.is_none_or(|(d, _)| dist[u] < d)
                {
                    best = Some((dist[u], idx as u16));
                }
            }
        }
        let (d, idx) = best.expect("every non-root switch has an up neighbor");
        dist[s] = d + 1;
        hop[s] = idx;
    }
    hop
}

pub fn route_updn(topology: &Topology) -> Result<RoutingConfig, RoutingError> {
    let order = UpDownOrder::new(topology)?;
    let n = topology.num_switches();
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by_key(|&s| order.rank(s));

    let per_dest: Vec<Vec<u16>> = (0..n)
        .into_par_iter()
        .map(|t| next_hops(topology, &order, &by_rank, t))
        .collect();
    let entries = (0..n)
        .map(|s| {
            topology
                .endnodes
                .iter()
                .map(|e| {
                    let t = e.switch.index();
                    if t == s {
                        e.switch_port
                    } else {
                        per_dest[t][s]
                    }
                })
                .collect()
        })
        .collect();
    let radix = topology.switches.iter().map(|s| s.radix()).collect();
    Ok(RoutingConfig::assemble(
        Engine::Updn,
        LinearForwardingTable::new(entries),
        Sl2VlTable::from_fn(radix, |_, _, _, _| 0),
        [0; SL_COUNT],
        SlPolicy::uniform(topology.num_endnodes(), 0),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::trace_route;
    use crate::topology::{build_topology, ChannelKind, DragonflyParams, EndnodeId};

    fn switch_path(t: &Topology, cfg: &RoutingConfig, src: u32, dst: u32) -> Vec<usize> {
        let hops = trace_route(t, cfg, EndnodeId(src), EndnodeId(dst)).unwrap();
        let mut path = Vec::new();
        for h in hops {
            let ch = t.channel(h.channel).unwrap();
            if let NodeRef::Switch(s) = ch.dst {
                path.push(s.index());
            }
        }
        path
    }

    #[test]
    fn routes_are_up_then_down() {
        let t = build_topology(DragonflyParams::new(4, 2, 2).unwrap()).unwrap();
        let cfg = route_updn(&t).unwrap();
        let order = UpDownOrder::new(&t).unwrap();
        for src in 0..72 {
            for dst in 0..72 {
                if src == dst {
                    continue;
                }
                let path = switch_path(&t, &cfg, src, dst);
                let mut descending = false;
                for w in path.windows(2) {
                    let up = order.is_up(w[0], w[1]);
                    assert!(
                        !(descending && up),
                        "{src}->{dst} climbs after descending: {path:?}"
                    );
                    descending |= !up;
                }
            }
        }
    }

    #[test]
    fn two_switch_route_is_the_only_path() {
        let t = build_topology(DragonflyParams::with_groups(1, 1, 1, 2).unwrap()).unwrap();
        let cfg = route_updn(&t).unwrap();
        assert_eq!(switch_path(&t, &cfg, 0, 1), vec![0, 1]);
        assert_eq!(switch_path(&t, &cfg, 1, 0), vec![1, 0]);
        assert!(cfg
            .sl2vl
            .row(crate::topology::SwitchId(0), 0, 1)
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn some_routes_are_longer_than_graph_distance() {
        let t = build_topology(DragonflyParams::new(4, 2, 2).unwrap()).unwrap();
        let cfg = route_updn(&t).unwrap();
        let mut longer = 0;
        for src in (0..72).step_by(2) {
            for dst in (0..72).step_by(2) {
                if src / 2 == dst / 2 {
                    continue;
                }
                let path = switch_path(&t, &cfg, src, dst);
                let hops = path.len() - 1;
                if hops > 3 {
                    longer += 1;
                }
            }
        }
        assert!(longer > 0);
        // the local/global structure is invisible to the engine
        assert!(t.channels.iter().any(|c| c.kind == ChannelKind::Global));
    }
}
