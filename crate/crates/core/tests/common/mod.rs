//! Independent oracles shared by the integration tests. Nothing here calls the
//! routing or analysis code under test except to obtain its output.

#![allow(dead_code)]

use std::collections::VecDeque;

use dfly_core::routing::trace_route;
use dfly_core::topology::{ChannelKind, EndnodeId, NodeRef, SwitchGraph};
use dfly_core::{DragonflyParams, RoutingConfig, Topology};

/// Every parameter set up to `max_endnodes` endnodes whose switches carry no
/// more global ports than two cables per group pair (plus one spare) need.
pub fn all_params(max_endnodes: usize) -> Vec<DragonflyParams> {
    let mut out = Vec::new();
    for a in 1..=max_endnodes {
        for h in 1..=2 * a {
            for p in 1..=max_endnodes {
                for g in 2..=a * h + 1 {
                    if a * p * g > max_endnodes {
                        break;
                    }
                    if a * h > 2 * (g - 1) + a {
                        continue;
                    }
                    out.push(DragonflyParams::with_groups(a, h, p, g).unwrap());
                }
            }
        }
    }
    out
}

/// Flows per channel, counted by tracing every ordered endnode pair.
pub fn flows_per_channel(t: &Topology, cfg: &RoutingConfig) -> Vec<u64> {
    let mut counts = vec![0u64; t.channels.len()];
    let n = t.num_endnodes() as u32;
    for s in 0..n {
        for d in 0..n {
            if s == d {
                continue;
            }
            for hop in trace_route(t, cfg, EndnodeId(s), EndnodeId(d)).unwrap() {
                counts[hop.channel.index()] += 1;
            }
        }
    }
    counts
}

/// Cycle test by Kahn's algorithm over an explicit edge list.
pub fn kahn_has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut indeg = vec![0usize; n];
    let mut adj = vec![Vec::new(); n];
    for &(x, y) in edges {
        adj[x].push(y);
        indeg[y] += 1;
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut removed = 0;
    while let Some(v) = queue.pop_front() {
        removed += 1;
        for &w in &adj[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    removed < n
}

/// Cycle test by per-vertex reachability: some vertex reaches itself.
pub fn reachability_has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(x, y) in edges {
        adj[x].push(y);
    }
    (0..n).any(|start| {
        let mut seen = vec![false; n];
        let mut stack = adj[start].clone();
        while let Some(v) = stack.pop() {
            if v == start {
                return true;
            }
            if !seen[v] {
                seen[v] = true;
                stack.extend(adj[v].iter().copied());
            }
        }
        false
    })
}

/// Whether `blocks` is a partition into equal cliques with every block pair adjacent.
pub fn is_dragonfly_reading(graph: &SwitchGraph, blocks: &[Vec<usize>]) -> bool {
    let n = graph.len();
    let mut seen = vec![false; n];
    let size = blocks.first().map_or(0, Vec::len);
    for b in blocks {
        if b.len() != size {
            return false;
        }
        for &x in b {
            if x >= n || std::mem::replace(&mut seen[x], true) {
                return false;
            }
            if b.iter().any(|&y| y != x && !graph.adjacent(x, y)) {
                return false;
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return false;
    }
    for (i, x) in blocks.iter().enumerate() {
        for y in &blocks[i + 1..] {
            if !x.iter().any(|&u| y.iter().any(|&v| graph.adjacent(u, v))) {
                return false;
            }
        }
    }
    true
}

/// No vertex outside `block` is adjacent to all of it; single vertices qualify.
pub fn is_maximal_clique(graph: &SwitchGraph, block: &[usize]) -> bool {
    block.len() == 1
        || (0..graph.len())
            .filter(|v| !block.contains(v))
            .all(|v| block.iter().any(|&b| !graph.adjacent(v, b)))
}

/// Switch sequence of a traced route.
pub fn switch_path(t: &Topology, cfg: &RoutingConfig, src: u32, dst: u32) -> Vec<usize> {
    trace_route(t, cfg, EndnodeId(src), EndnodeId(dst))
        .unwrap()
        .iter()
        .filter_map(|h| match t.channel(h.channel).unwrap().dst {
            NodeRef::Switch(s) => Some(s.index()),
            NodeRef::Endnode(_) => None,
        })
        .collect()
}

/// Switch-to-switch hop distances from `src`, allowing at most `max_global` global hops.
pub fn restricted_distances(t: &Topology, src: usize, max_global: usize) -> Vec<usize> {
    let n = t.num_switches();
    let layers = max_global + 1;
    let mut dist = vec![usize::MAX; n * layers];
    dist[src * layers] = 0;
    let mut queue = VecDeque::from([(src, 0usize)]);
    while let Some((v, used)) = queue.pop_front() {
        let d = dist[v * layers + used];
        for port in &t.switches[v].ports {
            let NodeRef::Switch(u) = port.peer else {
                continue;
            };
            let next = used + usize::from(port.kind == ChannelKind::Global);
            if next > max_global {
                continue;
            }
            let slot = u.index() * layers + next;
            if dist[slot] == usize::MAX {
                dist[slot] = d + 1;
                queue.push_back((u.index(), next));
            }
        }
    }
    (0..n)
        .map(|v| (0..layers).map(|l| dist[v * layers + l]).min().unwrap())
        .collect()
}
