//! Dragonfly interconnect toolkit.
//!
//! * [`topology`] builds fully-connected Dragonflies and their analytic channel loads.
//! * [`routing`] rediscovers groups from the bare switch graph and synthesizes
//!   forwarding and SL-to-VL tables for the DLA, D3R and Up*/Down* engines.
//! * [`deadlock`] builds the VL-aware channel dependency graph of a routing
//!   configuration and searches it for cycles.
//! * [`sim`] is a flit-timed, credit-based fabric simulator used to measure
//!   accepted throughput under synthetic traffic.
//! * [`experiment`] parses sweep manifests and writes result files.

pub mod deadlock;
pub mod experiment;
pub mod routing;
pub mod sim;
pub mod topology;

pub use deadlock::{build_cdg, check_deadlock_free, ChannelDependencyGraph, DeadlockReport};
pub use routing::{
    discover_groups, route_d3r, route_dla, route_updn, Engine, GroupAssignment, RoutingConfig,
};
pub use topology::{analytic_flow_counts, build_topology, DragonflyParams, FlowCounts, Topology};

/// Version string embedded in every result file.
pub const TOOL_VERSION: &str = concat!("dfly ", env!("CARGO_PKG_VERSION"));
