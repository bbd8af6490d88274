//! Flit-timed, credit-based fabric simulator.
//!
//! Packets are forwarded with virtual cut-through: a switch may start sending
//! a packet once its head flit has arrived and the routing pipeline has
//! elapsed, and only if the next hop's input buffer for the packet's VL has
//! room for the whole packet. Buffer space returns to the upstream port one
//! flit at a time as the packet drains. Each input port reads one packet at a
//! time; each output port is granted by a round-robin arbiter over
//! (input port, VL) pairs. Endnodes sink traffic at link rate.

mod arbiter;
mod engine;
mod report;
mod traffic;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::deadlock::{build_cdg, check_deadlock_free};
use crate::routing::{emit_fabric_dump, RoutingConfig, RoutingError};
use crate::topology::Topology;

pub use arbiter::{arbitrate_output, Candidate, RoundRobinArbiter};
pub use report::{csv_header_line, csv_rows, results_json, CSV_COLUMNS};
pub use traffic::{cubic_dims, stencil_neighbors, TrafficPattern};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("routing configuration has a cyclic channel dependency graph (cycle of {0} channels)")]
    CyclicRouting(usize),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(
        "deadlock detected at t={time_ps} ps: packet {src}->{dst} stuck at switch {switch} port {port} vl {vl} \
         for {resident_ps} ps"
    )]
    DeadlockDetected {
        time_ps: u64,
        switch: u32,
        port: u16,
        vl: u8,
        src: u32,
        dst: u32,
        resident_ps: u64,
    },
    #[error("load point {index} (load {load}): {source}")]
    AtLoad {
        index: usize,
        load: f64,
        #[source]
        source: Box<SimError>,
    },
}

impl SimError {
    /// The innermost error, without load-point context.
    pub fn root(&self) -> &SimError {
        match self {
            SimError::AtLoad { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Every simulator knob; times are in seconds, rates in bits per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub voq: bool,
    /// Packets per VL at every input buffer.
    pub buffer_depth: usize,
    pub data_vls: usize,
    pub link_rate: f64,
    pub mtu: usize,
    pub flit_size: usize,
    pub link_latency: f64,
    pub switch_latency: f64,
    pub pattern: TrafficPattern,
    /// Fraction of link rate injected by every regular source.
    pub offered_load: f64,
    pub warmup: f64,
    pub measure: f64,
    pub seed: u64,
    /// Overrides the derived stall horizon.
    pub stall_horizon: Option<f64>,
    /// Refuse routing configurations whose dependency graph has a cycle.
    pub require_acyclic: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            voq: true,
            buffer_depth: 16,
            data_vls: 8,
            link_rate: 32e9,
            mtu: 4096,
            flit_size: 64,
            link_latency: 40e-9,
            switch_latency: 100e-9,
            pattern: TrafficPattern::Uniform,
            offered_load: 1.0,
            warmup: 0.2e-3,
            measure: 1e-3,
            seed: 1,
            stall_horizon: None,
            require_acyclic: true,
        }
    }
}

/// Minimum stall horizon before a stuck packet counts as deadlocked.
pub const MIN_STALL_HORIZON: f64 = 1e-3;

pub(crate) fn picos(seconds: f64) -> u64 {
    (seconds * 1e12).round() as u64
}

impl SimSettings {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.buffer_depth < 1 {
            return bad("buffer_depth must hold at least one packet per VL".into());
        }
        if !(0.0..=1.0).contains(&self.offered_load) {
            return bad(format!("offered_load {} outside [0, 1]", self.offered_load));
        }
        if self.data_vls < 1 || self.data_vls > 15 {
            return bad(format!("data_vls {} outside 1..=15", self.data_vls));
        }
        if self.flit_size == 0 || self.mtu == 0 || !self.mtu.is_multiple_of(self.flit_size) {
            return bad(format!(
                "flit_size {} must divide mtu {}",
                self.flit_size, self.mtu
            ));
        }
        if !self.link_rate.is_finite() || self.link_rate <= 0.0 {
            return bad("link_rate must be positive".into());
        }
        if picos(self.flit_size as f64 * 8.0 / self.link_rate) == 0 {
            return bad("flit time rounds to zero picoseconds".into());
        }
        for (name, v) in [
            ("link_latency", self.link_latency),
            ("switch_latency", self.switch_latency),
            ("warmup", self.warmup),
            ("measure", self.measure),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be a finite non-negative time"));
            }
        }
        if self.measure <= 0.0 {
            return bad("measure window must be positive".into());
        }
        if let Some(h) = self.stall_horizon {
            if h.is_nan() || h <= 0.0 {
                return bad("stall_horizon must be positive".into());
            }
        }
        Ok(())
    }

    pub fn flits_per_packet(&self) -> usize {
        self.mtu / self.flit_size
    }
}

/// A validated simulation input. Cheap to clone.
#[derive(Debug, Clone)]
pub struct SimConfig<'a> {
    pub topology: &'a Topology,
    pub routing: &'a RoutingConfig,
    pub settings: SimSettings,
    routing_digest: String,
}

impl<'a> SimConfig<'a> {
    pub fn new(
        topology: &'a Topology,
        routing: &'a RoutingConfig,
        settings: SimSettings,
    ) -> Result<Self, SimError> {
        settings.validate()?;
        if routing.lft.num_switches() != topology.num_switches()
            || routing.sl_policy.num_endnodes() != topology.num_endnodes()
        {
            return Err(SimError::InvalidConfig(
                "routing tables do not match the topology".into(),
            ));
        }
        if routing.resources.vls > settings.data_vls {
            return Err(SimError::InvalidConfig(format!(
                "routing uses {} VLs but only {} data VLs are configured",
                routing.resources.vls, settings.data_vls
            )));
        }
        if settings.require_acyclic {
            let report = check_deadlock_free(&build_cdg(topology, routing)?);
            if !report.acyclic {
                return Err(SimError::CyclicRouting(report.cycle.len()));
            }
        }
        let routing_digest = hex::encode(Sha256::digest(emit_fabric_dump(routing).as_bytes()));
        Ok(SimConfig {
            topology,
            routing,
            settings,
            routing_digest,
        })
    }

    /// Same fabric with different load and seed; skips revalidation of the routing.
    pub fn at(&self, offered_load: f64, seed: u64) -> Result<Self, SimError> {
        let mut next = self.clone();
        next.settings.offered_load = offered_load;
        next.settings.seed = seed;
        next.settings.validate()?;
        Ok(next)
    }

    /// Digest of the routing tables as dumped.
    pub fn routing_digest(&self) -> &str {
        &self.routing_digest
    }

    /// Hash over everything that determines the outcome of a run.
    pub fn config_hash(&self) -> String {
        let doc = serde_json::json!({
            "params": self.topology.params.to_string(),
            "engine": self.routing.engine.name(),
            "routing": self.routing_digest,
            "settings": self.settings,
        });
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub events: u64,
    pub generated_packets: u64,
    pub injected_packets: u64,
    pub delivered_packets: u64,
    /// Counter: injected minus delivered.
    pub in_fabric_packets: u64,
    /// Scan of switch buffers at the end of the run.
    pub resident_packets: u64,
    pub queued_at_sources: u64,
    pub flits_per_packet: u64,
    /// Largest number of packets waiting in one input VL buffer.
    pub max_vl_occupancy: u64,
    /// Packets placed on VL 1 other than on a local hop right after a global one.
    pub vl1_violations: u64,
    pub stall_horizon_ps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub offered: f64,
    /// Mean over measured endnodes of received traffic, normalized to link rate.
    pub accepted: f64,
    pub measured: Vec<u32>,
    pub per_endnode: Vec<f64>,
    pub config_hash: String,
    pub seed: u64,
    pub stats: SimStats,
}

impl SimResult {
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_string(self)
                .expect("result serializes")
                .as_bytes(),
        ))
    }
}

/// One deterministic single-threaded run.
pub fn run_sim(config: &SimConfig) -> Result<SimResult, SimError> {
    engine::simulate(config)
}

/// The ten load points 0.1, 0.2, ..., 1.0.
pub fn default_loads() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Independent runs per load, seeded `base + index`, in parallel.
pub fn sweep(config: &SimConfig, loads: &[f64]) -> Result<Vec<SimResult>, SimError> {
    if loads.iter().any(|l| !(0.0..=1.0).contains(l)) || loads.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimError::InvalidConfig(
            "loads must be sorted and within [0, 1]".into(),
        ));
    }
    let base = config.settings.seed;
    loads
        .par_iter()
        .enumerate()
        .map(|(index, &load)| {
            let wrap = |e: SimError| SimError::AtLoad {
                index,
                load,
                source: Box::new(e),
            };
            let run = config
                .at(load, base.wrapping_add(index as u64))
                .map_err(wrap)?;
            run_sim(&run).map_err(wrap)
        })
        .collect()
}
