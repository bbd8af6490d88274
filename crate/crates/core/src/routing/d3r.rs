//! Layered minimal routing: one VL per route, picked by group order.
//!
//! Routes towards a lower-numbered group travel on SL/VL 1, everything else
//! (including intra-group traffic) on SL/VL 0. Within a layer the group index
//! strictly increases (layer 0) or decreases (layer 1) along every global hop,
//! which is what keeps each layer's dependency graph acyclic; the deadlock
//! analyzer checks this rather than relying on the argument.

use super::dla::MinimalRoutes;
use super::{GroupAssignment, RoutingConfig, RoutingError, Sl2VlTable, SlPolicy, SL_COUNT};
use crate::routing::Engine;
use crate::topology::Topology;

pub fn route_d3r(
    topology: &Topology,
    groups: &GroupAssignment,
) -> Result<RoutingConfig, RoutingError> {
    let routes = MinimalRoutes::new(topology, groups)?;
    let lft = routes.lft(topology, groups);
    let radix = topology.switches.iter().map(|s| s.radix()).collect();
    let sl2vl = Sl2VlTable::from_fn(radix, |_, _, _, sl| if sl < 2 { sl as u8 } else { 0 });
    let mut hca = [0u8; SL_COUNT];
    hca[1] = 1;
    let group_of_endnode: Vec<usize> = topology
        .endnodes
        .iter()
        .map(|e| groups.group_of(e.switch.index()))
        .collect();
    let policy = SlPolicy::from_fn(topology.num_endnodes(), |src, dst| {
        u8::from(group_of_endnode[dst] < group_of_endnode[src])
    });
    Ok(RoutingConfig::assemble(
        Engine::D3r,
        lft,
        sl2vl,
        hca,
        policy,
    ))
}
