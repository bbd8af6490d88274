//! Channel dependency graphs over (channel, VL) pairs.
//!
//! A packet holding channel `c_n` on VL `v_n` and requesting `c_m` on `v_m`
//! creates the dependency `(c_n, v_n) -> (c_m, v_m)`. The graph is built by
//! routing every ordered pair of distinct endnodes through the tables; a
//! routing configuration is deadlock free when the graph is acyclic.
//! Injection channels only ever appear as edge sources and ejection channels
//! only as edge targets, so every cycle lies inside the switch fabric.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use crate::routing::{trace_route_into, RoutingConfig, RoutingError, VL_LIMIT};
use crate::topology::{ChannelId, EndnodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CdgVertex {
    pub channel: ChannelId,
    pub vl: u8,
}

impl CdgVertex {
    fn key(self) -> u64 {
        self.channel.0 as u64 * VL_LIMIT as u64 + self.vl as u64
    }

    fn from_key(key: u64) -> Self {
        CdgVertex {
            channel: ChannelId((key / VL_LIMIT as u64) as u32),
            vl: (key % VL_LIMIT as u64) as u8,
        }
    }
}

impl fmt::Display for CdgVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}@vl{}", self.channel.0, self.vl)
    }
}

/// Directed graph with sorted vertices and sorted adjacency lists.
#[derive(Debug, Clone, Default)]
pub struct ChannelDependencyGraph {
    vertices: Vec<CdgVertex>,
    adjacency: Vec<Vec<u32>>,
    /// Smallest (src, dst) pair inducing each edge, keyed by vertex indices.
    witnesses: HashMap<(u32, u32), (EndnodeId, EndnodeId)>,
}

impl ChannelDependencyGraph {
    /// Graph from explicit edges; every edge gets a placeholder witness.
    pub fn from_edges(edges: &[(CdgVertex, CdgVertex)]) -> Self {
        let map = edges
            .iter()
            .map(|&(x, y)| ((x.key(), y.key()), (EndnodeId(0), EndnodeId(0))))
            .collect();
        Self::from_keyed(map, Vec::new())
    }

    fn from_keyed(edges: HashMap<(u64, u64), (EndnodeId, EndnodeId)>, extra: Vec<u64>) -> Self {
        let mut keys: Vec<u64> = edges
            .keys()
            .flat_map(|&(x, y)| [x, y])
            .chain(extra)
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let index: HashMap<u64, u32> = keys
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i as u32))
            .collect();
        let mut adjacency = vec![Vec::new(); keys.len()];
        let mut witnesses = HashMap::with_capacity(edges.len());
        for ((x, y), pair) in edges {
            let (ix, iy) = (index[&x], index[&y]);
            adjacency[ix as usize].push(iy);
            witnesses.insert((ix, iy), pair);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        ChannelDependencyGraph {
            vertices: keys.into_iter().map(CdgVertex::from_key).collect(),
            adjacency,
            witnesses,
        }
    }

    pub fn vertices(&self) -> &[CdgVertex] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().map(|&u| u as usize)
    }

    pub fn index_of(&self, v: CdgVertex) -> Option<usize> {
        self.vertices.binary_search(&v).ok()
    }

    pub fn has_edge(&self, x: CdgVertex, y: CdgVertex) -> bool {
        match (self.index_of(x), self.index_of(y)) {
            (Some(ix), Some(iy)) => self.adjacency[ix].binary_search(&(iy as u32)).is_ok(),
            _ => false,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (CdgVertex, CdgVertex)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(move |(x, list)| {
                list.iter()
                    .map(move |&y| (self.vertices[x], self.vertices[y as usize]))
            })
    }

    /// One flow inducing the edge, if the edge exists.
    pub fn witness(&self, x: CdgVertex, y: CdgVertex) -> Option<(EndnodeId, EndnodeId)> {
        let (ix, iy) = (self.index_of(x)?, self.index_of(y)?);
        self.witnesses.get(&(ix as u32, iy as u32)).copied()
    }
}

fn merge_min(
    mut a: HashMap<(u64, u64), (EndnodeId, EndnodeId)>,
    b: HashMap<(u64, u64), (EndnodeId, EndnodeId)>,
) -> HashMap<(u64, u64), (EndnodeId, EndnodeId)> {
    if a.len() < b.len() {
        return merge_min(b, a);
    }
    for (edge, pair) in b {
        a.entry(edge)
            .and_modify(|p| *p = (*p).min(pair))
            .or_insert(pair);
    }
    a
}

/// Enumerates all `N(N-1)` routes and collects their dependencies.
pub fn build_cdg(
    topology: &Topology,
    config: &RoutingConfig,
) -> Result<ChannelDependencyGraph, RoutingError> {
    let n = topology.num_endnodes();
    let edges = (0..n)
        .into_par_iter()
        .try_fold(HashMap::new, |mut acc, src| {
            let mut hops = Vec::new();
            for dst in 0..n {
                if dst == src {
                    continue;
                }
                let (s, d) = (EndnodeId(src as u32), EndnodeId(dst as u32));
                trace_route_into(topology, config, s, d, &mut hops)?;
                for w in hops.windows(2) {
                    let x = CdgVertex {
                        channel: w[0].channel,
                        vl: w[0].vl,
                    }
                    .key();
                    let y = CdgVertex {
                        channel: w[1].channel,
                        vl: w[1].vl,
                    }
                    .key();
                    // sources and destinations are visited in increasing order
                    // within a worker, so the first pair seen is the smallest
                    acc.entry((x, y)).or_insert((s, d));
                }
            }
            Ok::<_, RoutingError>(acc)
        })
        .try_reduce(HashMap::new, |a, b| Ok(merge_min(a, b)))?;
    Ok(ChannelDependencyGraph::from_keyed(edges, Vec::new()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlockReport {
    pub acyclic: bool,
    /// Cycle vertices in order; the last one depends on the first.
    pub cycle: Vec<CdgVertex>,
    /// One inducing flow per cycle edge, in cycle order.
    pub inducing_flows: Vec<(EndnodeId, EndnodeId)>,
}

impl DeadlockReport {
    /// Whether the witness is a closed walk over existing edges.
    pub fn witness_is_valid(&self, cdg: &ChannelDependencyGraph) -> bool {
        if self.acyclic {
            return self.cycle.is_empty();
        }
        !self.cycle.is_empty()
            && (0..self.cycle.len())
                .all(|i| cdg.has_edge(self.cycle[i], self.cycle[(i + 1) % self.cycle.len()]))
    }
}

const WHITE: u8 = 0;
const GRAY: u8 = 1;
const BLACK: u8 = 2;

/// Iterative depth-first search from vertices in increasing order; the first
/// back edge found yields the witness.
pub fn check_deadlock_free(cdg: &ChannelDependencyGraph) -> DeadlockReport {
    let n = cdg.vertex_count();
    let mut color = vec![WHITE; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if color[start] != WHITE {
            continue;
        }
        color[start] = GRAY;
        stack.push((start, 0));
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(&w) = cdg.adjacency[v].get(*next) {
                *next += 1;
                let w = w as usize;
                match color[w] {
                    WHITE => {
                        color[w] = GRAY;
                        stack.push((w, 0));
                    }
                    GRAY => {
                        let from = stack
                            .iter()
                            .position(|&(u, _)| u == w)
                            .expect("gray vertex is on the stack");
                        let cycle: Vec<usize> = stack[from..].iter().map(|&(u, _)| u).collect();
                        let inducing_flows = (0..cycle.len())
                            .map(|i| {
                                let edge = (cycle[i] as u32, cycle[(i + 1) % cycle.len()] as u32);
                                cdg.witnesses[&edge]
                            })
                            .collect();
                        return DeadlockReport {
                            acyclic: false,
                            cycle: cycle.into_iter().map(|u| cdg.vertices[u]).collect(),
                            inducing_flows,
                        };
                    }
                    _ => {}
                }
            } else {
                color[v] = BLACK;
                stack.pop();
            }
        }
    }
    DeadlockReport {
        acyclic: true,
        cycle: Vec::new(),
        inducing_flows: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::Engine;
    use crate::topology::{build_topology, DragonflyParams};

    fn v(c: u32) -> CdgVertex {
        CdgVertex {
            channel: ChannelId(c),
            vl: 0,
        }
    }

    #[test]
    fn empty_graph_is_acyclic() {
        let report = check_deadlock_free(&ChannelDependencyGraph::default());
        assert!(report.acyclic);
        assert!(report.cycle.is_empty());
    }

    #[test]
    fn ring_of_three() {
        let cdg = ChannelDependencyGraph::from_edges(&[(v(0), v(1)), (v(1), v(2)), (v(2), v(0))]);
        let report = check_deadlock_free(&cdg);
        assert!(!report.acyclic);
        assert_eq!(report.cycle, vec![v(0), v(1), v(2)]);
        assert!(report.witness_is_valid(&cdg));
    }

    #[test]
    fn witness_starts_at_smallest_vertex_of_first_cycle() {
        // 0 -> 1 -> 2 -> 1 and a separate cycle 5 <-> 6
        let cdg = ChannelDependencyGraph::from_edges(&[
            (v(0), v(1)),
            (v(1), v(2)),
            (v(2), v(1)),
            (v(5), v(6)),
            (v(6), v(5)),
        ]);
        let report = check_deadlock_free(&cdg);
        assert_eq!(report.cycle, vec![v(1), v(2)]);
    }

    #[test]
    fn dag_with_diamond_is_acyclic() {
        let cdg = ChannelDependencyGraph::from_edges(&[
            (v(0), v(1)),
            (v(0), v(2)),
            (v(1), v(3)),
            (v(2), v(3)),
        ]);
        assert!(check_deadlock_free(&cdg).acyclic);
    }

    #[test]
    fn two_switch_network_is_acyclic_for_every_engine() {
        let t = build_topology(DragonflyParams::with_groups(1, 1, 1, 2).unwrap()).unwrap();
        for engine in Engine::ALL {
            let cdg = build_cdg(&t, &engine.route(&t).unwrap()).unwrap();
            assert!(check_deadlock_free(&cdg).acyclic, "{engine}");
        }
    }

    #[test]
    fn cdg_witnesses_induce_their_edges() {
        let t = build_topology(DragonflyParams::new(4, 2, 2).unwrap()).unwrap();
        let cfg = Engine::Dla.route(&t).unwrap().without_vl_shift();
        let cdg = build_cdg(&t, &cfg).unwrap();
        let report = check_deadlock_free(&cdg);
        assert!(!report.acyclic);
        assert!(report.witness_is_valid(&cdg));
        for (i, &(s, d)) in report.inducing_flows.iter().enumerate() {
            let hops = crate::routing::trace_route(&t, &cfg, s, d).unwrap();
            let x = report.cycle[i];
            let y = report.cycle[(i + 1) % report.cycle.len()];
            assert!(hops
                .windows(2)
                .any(|w| (w[0].channel, w[0].vl) == (x.channel, x.vl)
                    && (w[1].channel, w[1].vl) == (y.channel, y.vl)));
        }
    }
}
