//! Group rediscovery from the unlabeled switch graph.
//!
//! A fully-connected Dragonfly's groups are a partition of the switches into
//! equal-size cliques such that every pair of blocks is joined by at least one
//! edge, where every block of two or more switches is a maximal clique. The search grows blocks from the
//! lowest unassigned switch inside its closed neighborhood and keeps every
//! reading it finds (up to two); a graph is accepted only when exactly one
//! reading exists over all block sizes.

use serde::{Deserialize, Serialize};

use super::RoutingError;
use crate::topology::SwitchGraph;

/// Switch to group mapping. Group ids are assigned in order of each group's
/// smallest switch id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    group_of: Vec<usize>,
    groups: Vec<Vec<usize>>,
}

impl GroupAssignment {
    /// Builds an assignment from blocks in any order; blocks are sorted internally.
    pub fn from_blocks(mut blocks: Vec<Vec<usize>>) -> Self {
        for block in &mut blocks {
            block.sort_unstable();
        }
        blocks.sort_by_key(|b| b.first().copied().unwrap_or(usize::MAX));
        let n = blocks.iter().map(Vec::len).sum();
        let mut group_of = vec![usize::MAX; n];
        for (gid, block) in blocks.iter().enumerate() {
            for &s in block {
                group_of[s] = gid;
            }
        }
        GroupAssignment {
            group_of,
            groups: blocks,
        }
    }

    /// The builder's own labels.
    pub fn from_topology(topology: &crate::topology::Topology) -> Self {
        let mut blocks = vec![Vec::new(); topology.params.g];
        for sw in &topology.switches {
            blocks[sw.group].push(sw.id.index());
        }
        Self::from_blocks(blocks)
    }

    pub fn group_of(&self, switch: usize) -> usize {
        self.group_of[switch]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_switches(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_size(&self) -> usize {
        self.groups.first().map_or(0, Vec::len)
    }
}

const SEARCH_BUDGET: usize = 4_000_000;

struct Search<'g> {
    graph: &'g SwitchGraph,
    k: usize,
    block_of: Vec<usize>,
    blocks: Vec<Vec<usize>>,
    readings: Vec<Vec<Vec<usize>>>,
    steps: usize,
}

const UNASSIGNED: usize = usize::MAX;

impl Search<'_> {
    fn run(&mut self) -> Result<(), RoutingError> {
        if self.readings.len() >= 2 {
            return Ok(());
        }
        self.steps += 1;
        if self.steps > SEARCH_BUDGET {
            return Err(RoutingError::NotADragonfly {
                reason: "group search budget exhausted".into(),
                readings: Vec::new(),
            });
        }
        let Some(v) = self.block_of.iter().position(|&b| b == UNASSIGNED) else {
            self.readings.push(self.blocks.clone());
            return Ok(());
        };
        // Candidates are unassigned neighbors; the excluded set starts with the
        // assigned ones, which must stay non-adjacent to some block member.
        let (candidates, excluded): (Vec<usize>, Vec<usize>) = self
            .graph
            .neighbors(v)
            .iter()
            .partition(|&&u| self.block_of[u] == UNASSIGNED);
        let mut clique = vec![v];
        self.extend(&mut clique, candidates, excluded)
    }

    /// Grows `clique` into maximal cliques of size k (Bron-Kerbosch with an
    /// excluded set). Every switch in `candidates` or `excluded` is adjacent to
    /// the whole clique.
    fn extend(
        &mut self,
        clique: &mut Vec<usize>,
        mut candidates: Vec<usize>,
        mut excluded: Vec<usize>,
    ) -> Result<(), RoutingError> {
        if self.readings.len() >= 2 || clique.len() + candidates.len() < self.k {
            return Ok(());
        }
        if clique.len() == self.k {
            // single switches are groups whatever their neighbors
            let maximal = self.k == 1 || (candidates.is_empty() && excluded.is_empty());
            if maximal && self.reaches_all_blocks(clique) {
                self.place(clique)?;
            }
            return Ok(());
        }
        while let Some(&u) = candidates.first() {
            if clique.len() + candidates.len() < self.k {
                break;
            }
            // An excluded switch adjacent to every candidate survives any
            // extension, so no clique grown from here is maximal.
            if self.k > 1
                && excluded
                    .iter()
                    .any(|&x| candidates.iter().all(|&w| self.graph.adjacent(x, w)))
            {
                break;
            }
            let adjacent = |w: &usize| self.graph.adjacent(u, *w);
            let next_candidates: Vec<usize> =
                candidates[1..].iter().copied().filter(adjacent).collect();
            let next_excluded: Vec<usize> = excluded.iter().copied().filter(adjacent).collect();
            clique.push(u);
            let result = self.extend(clique, next_candidates, next_excluded);
            clique.pop();
            result?;
            candidates.remove(0);
            excluded.push(u);
        }
        Ok(())
    }

    fn place(&mut self, clique: &[usize]) -> Result<(), RoutingError> {
        let id = self.blocks.len();
        for &s in clique {
            self.block_of[s] = id;
        }
        self.blocks.push(clique.to_vec());
        let result = if self.blocks_can_finish() {
            self.run()
        } else {
            Ok(())
        };
        self.blocks.pop();
        for &s in clique {
            self.block_of[s] = UNASSIGNED;
        }
        result
    }

    /// Each placed block must still reach every block yet to be placed, each
    /// through a distinct unassigned neighbor.
    fn blocks_can_finish(&self) -> bool {
        let unassigned = self.block_of.iter().filter(|&&b| b == UNASSIGNED).count();
        let future = unassigned / self.k;
        if future == 0 {
            return true;
        }
        let mut mark = vec![false; self.block_of.len()];
        self.blocks.iter().all(|block| {
            let mut distinct = 0;
            for &s in block {
                for &u in self.graph.neighbors(s) {
                    if self.block_of[u] == UNASSIGNED && !mark[u] {
                        mark[u] = true;
                        distinct += 1;
                    }
                }
            }
            for &s in block {
                for &u in self.graph.neighbors(s) {
                    mark[u] = false;
                }
            }
            distinct >= future
        })
    }

    fn reaches_all_blocks(&self, clique: &[usize]) -> bool {
        let mut seen = vec![false; self.blocks.len()];
        let mut count = 0;
        for &s in clique {
            for &u in self.graph.neighbors(s) {
                let b = self.block_of[u];
                if b != UNASSIGNED && !seen[b] {
                    seen[b] = true;
                    count += 1;
                }
            }
        }
        count == self.blocks.len()
    }
}

/// Recovers the group partition of a fully-connected Dragonfly from its
/// switch graph alone.
pub fn discover_groups(graph: &SwitchGraph) -> Result<GroupAssignment, RoutingError> {
    let n = graph.len();
    if n < 2 {
        return Err(RoutingError::NotADragonfly {
            reason: format!("{n} switch(es); at least two groups are required"),
            readings: Vec::new(),
        });
    }
    let min_deg = (0..n).map(|v| graph.neighbors(v).len()).min().unwrap_or(0);
    let max_deg = (0..n).map(|v| graph.neighbors(v).len()).max().unwrap_or(0);
    let mut readings = Vec::new();
    for k in (1..=n / 2).rev() {
        if !n.is_multiple_of(k) || k - 1 > min_deg {
            continue;
        }
        // A block leaves through at most k * (max_deg - (k - 1)) edges and must
        // reach every other block.
        if k * (max_deg - (k - 1)) < n / k - 1 {
            continue;
        }
        let mut search = Search {
            graph,
            k,
            block_of: vec![UNASSIGNED; n],
            blocks: Vec::new(),
            readings: Vec::new(),
            steps: 0,
        };
        search.run()?;
        readings.extend(search.readings);
        if readings.len() >= 2 {
            break;
        }
    }
    match readings.len() {
        0 => Err(RoutingError::NotADragonfly {
            reason:
                "no partition into equal fully-connected groups with a complete inter-group graph"
                    .into(),
            readings,
        }),
        1 => Ok(GroupAssignment::from_blocks(
            readings.pop().expect("one reading"),
        )),
        _ => Err(RoutingError::NotADragonfly {
            reason: "group structure is ambiguous".into(),
            readings,
        }),
    }
}
