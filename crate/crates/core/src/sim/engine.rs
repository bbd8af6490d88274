//! Event loop of a single simulation run.
//!
//! Time is kept in integer picoseconds. Events are processed in
//! `(time, sequence)` order, so ties are broken by scheduling order.
//! Forwarding is modelled per packet; flit timing enters through the credit
//! streams and the delivery accounting, both evaluated in closed form.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arbiter::RoundRobinArbiter;
use super::traffic::Traffic;
use super::{picos, SimConfig, SimError, SimResult, SimStats, MIN_STALL_HORIZON};
use crate::routing::{Engine, RoutingConfig};
use crate::topology::{ChannelKind, EndnodeId, NodeRef, SwitchId, Topology};

const NEVER: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Generate(u32),
    Hca(u32),
    Switch(u32),
    Watchdog,
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    src: u32,
    dst: u32,
    sl: u8,
    /// VL of the buffer currently holding the packet.
    vl: u8,
    /// Requested output port at the current switch.
    out: u16,
    /// VL on the requested output.
    out_vl: u8,
    /// Head flit fully received at the current switch.
    arrived: u64,
    /// Eligible for arbitration.
    ready: u64,
}

/// Credits of one (output, VL), with returns in flight as flit trains.
#[derive(Debug, Clone, Default)]
struct CreditLine {
    avail: u32,
    /// `(start, count)`: credit `k` arrives at `start + k * tf`.
    streams: VecDeque<(u64, u32)>,
}

impl CreditLine {
    fn settle(&mut self, now: u64, tf: u64) {
        while let Some(front) = self.streams.front_mut() {
            if now < front.0 {
                break;
            }
            let back = ((now - front.0) / tf + 1).min(front.1 as u64) as u32;
            self.avail += back;
            if back == front.1 {
                self.streams.pop_front();
            } else {
                *front = (front.0 + back as u64 * tf, front.1 - back);
                break;
            }
        }
    }

    /// Earliest time `need` credits are available; streams are disjoint and ordered.
    fn earliest(&self, need: u32, tf: u64) -> u64 {
        let mut have = self.avail;
        if have >= need {
            return 0;
        }
        for &(start, count) in &self.streams {
            if have + count >= need {
                return start + (need - have - 1) as u64 * tf;
            }
            have += count;
        }
        NEVER
    }

    fn outstanding(&self) -> u32 {
        self.avail + self.streams.iter().map(|s| s.1).sum::<u32>()
    }
}

/// Pending wake-up times of one node, to avoid duplicate events.
#[derive(Debug, Clone, Default)]
struct Wakes(Vec<u64>);

impl Wakes {
    /// Records `t`; false if already pending.
    fn add(&mut self, t: u64) -> bool {
        if self.0.contains(&t) {
            return false;
        }
        self.0.push(t);
        true
    }

    fn fire(&mut self, t: u64) {
        if let Some(i) = self.0.iter().position(|&x| x == t) {
            self.0.swap_remove(i);
        }
    }
}

struct SwitchState {
    /// Indexed `(input * vls + vl) * lanes + lane`; one lane without VOQ, one per output with.
    queues: Vec<VecDeque<u32>>,
    /// Packets waiting per (input, VL).
    waiting: Vec<u32>,
    in_busy: Vec<u64>,
    out_busy: Vec<u64>,
    /// Per (output, VL); unused on terminal outputs.
    credits: Vec<CreditLine>,
    arbiters: Vec<RoundRobinArbiter>,
    first_output: usize,
    wakes: Wakes,
}

struct HcaState {
    queues: Vec<VecDeque<u32>>,
    busy: u64,
    credits: Vec<CreditLine>,
    next_vl: usize,
    rng: ChaCha8Rng,
    saturating: bool,
    wakes: Wakes,
}

struct Sim<'a> {
    topology: &'a Topology,
    routing: &'a RoutingConfig,
    traffic: Traffic,
    voq: bool,
    vls: usize,
    depth: u32,
    flits: u32,
    tf: u64,
    packet_time: u64,
    link: u64,
    pipeline: u64,
    load: f64,
    end: u64,
    window: (u64, u64),
    horizon_override: Option<u64>,

    now: u64,
    seq: u64,
    heap: BinaryHeap<Reverse<(u64, u64, Action)>>,
    packets: Vec<Packet>,
    free: Vec<u32>,
    switches: Vec<SwitchState>,
    hcas: Vec<HcaState>,
    measured: Vec<bool>,
    received_flits: Vec<u64>,
    last_delivery: Option<u64>,
    max_warmup_gap: u64,
    /// Last injection or switch grant; source generation does not count.
    last_progress: u64,
    stats: SimStats,
}

impl<'a> Sim<'a> {
    fn new(config: &SimConfig<'a>) -> Result<Self, SimError> {
        let s = &config.settings;
        let topology = config.topology;
        let routing = config.routing;
        let n = topology.num_endnodes();
        let mut pattern_rng = ChaCha8Rng::seed_from_u64(s.seed);
        let traffic = Traffic::resolve(&s.pattern, n, &mut pattern_rng)?;
        let vls = routing.resources.vls.max(1);
        let flits = s.flits_per_packet() as u32;
        let tf = picos(s.flit_size as f64 * 8.0 / s.link_rate);
        let cap = s.buffer_depth as u32 * flits;
        let full = || CreditLine {
            avail: cap,
            streams: VecDeque::new(),
        };

        let switches = topology
            .switches
            .iter()
            .map(|sw| {
                let radix = sw.radix();
                let lanes = if s.voq { radix } else { 1 };
                SwitchState {
                    queues: vec![VecDeque::new(); radix * vls * lanes],
                    waiting: vec![0; radix * vls],
                    in_busy: vec![0; radix],
                    out_busy: vec![0; radix],
                    credits: (0..radix * vls).map(|_| full()).collect(),
                    arbiters: (0..radix)
                        .map(|_| RoundRobinArbiter::new(radix, vls))
                        .collect(),
                    first_output: 0,
                    wakes: Wakes::default(),
                }
            })
            .collect();
        let hcas = (0..n)
            .map(|e| {
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
                rng.set_stream(e as u64 + 1);
                HcaState {
                    queues: vec![VecDeque::new(); vls],
                    busy: 0,
                    credits: (0..vls).map(|_| full()).collect(),
                    next_vl: 0,
                    rng,
                    saturating: traffic.saturating[e],
                    wakes: Wakes::default(),
                }
            })
            .collect();
        let mut measured = vec![false; n];
        for &e in &traffic.measured {
            measured[e as usize] = true;
        }
        let warmup = picos(s.warmup);
        let end = warmup + picos(s.measure);
        Ok(Sim {
            topology,
            routing,
            traffic,
            voq: s.voq,
            vls,
            depth: s.buffer_depth as u32,
            flits,
            tf,
            packet_time: tf * flits as u64,
            link: picos(s.link_latency),
            pipeline: picos(s.switch_latency),
            load: s.offered_load,
            end,
            window: (warmup, end),
            horizon_override: s.stall_horizon.map(picos),
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            packets: Vec::new(),
            free: Vec::new(),
            switches,
            hcas,
            measured,
            received_flits: vec![0; n],
            last_delivery: None,
            max_warmup_gap: 0,
            last_progress: 0,
            stats: SimStats {
                flits_per_packet: flits as u64,
                ..SimStats::default()
            },
        })
    }

    fn schedule(&mut self, time: u64, action: Action) {
        self.seq += 1;
        self.heap.push(Reverse((time, self.seq, action)));
    }

    fn wake_switch(&mut self, s: usize, time: u64) {
        if time < self.end && self.switches[s].wakes.add(time) {
            self.schedule(time, Action::Switch(s as u32));
        }
    }

    fn wake_hca(&mut self, e: usize, time: u64) {
        if time < self.end && self.hcas[e].wakes.add(time) {
            self.schedule(time, Action::Hca(e as u32));
        }
    }

    fn horizon(&self) -> u64 {
        self.horizon_override
            .unwrap_or_else(|| picos(MIN_STALL_HORIZON).max(self.max_warmup_gap.saturating_mul(10)))
    }

    fn queue_index(&self, input: usize, vl: usize, lane: usize, radix: usize) -> usize {
        let lanes = if self.voq { radix } else { 1 };
        (input * self.vls + vl) * lanes + lane
    }

    fn run(mut self) -> Result<SimResult, SimError> {
        for e in 0..self.hcas.len() {
            if self.traffic.active[e] {
                if let Some(t) = self.next_slot(e, 0) {
                    self.schedule(t, Action::Generate(e as u32));
                }
            }
        }
        let check = picos(MIN_STALL_HORIZON) / 4;
        self.schedule(check, Action::Watchdog);
        while let Some(Reverse((time, _, action))) = self.heap.pop() {
            if time >= self.end {
                break;
            }
            self.now = time;
            self.stats.events += 1;
            match action {
                Action::Generate(e) => self.generate(e as usize),
                Action::Hca(e) => {
                    self.hcas[e as usize].wakes.fire(time);
                    self.try_inject(e as usize);
                }
                Action::Switch(s) => {
                    self.switches[s as usize].wakes.fire(time);
                    self.allocate(s as usize);
                }
                Action::Watchdog => {
                    self.watchdog()?;
                    self.schedule(time + check, Action::Watchdog);
                }
            }
        }
        Ok(self.finish())
    }

    /// First Bernoulli success at or after `from`, on packet-slot boundaries.
    fn next_slot(&mut self, e: usize, from: u64) -> Option<u64> {
        let hca = &mut self.hcas[e];
        let mut t = from;
        while t < self.end {
            if hca.saturating || hca.rng.gen_bool(self.load) {
                return Some(t);
            }
            if self.load == 0.0 {
                return None;
            }
            t += self.packet_time;
        }
        None
    }

    fn generate(&mut self, e: usize) {
        let dst = self.traffic.destination(e, &mut self.hcas[e].rng);
        let sl = self.routing.sl(EndnodeId(e as u32), EndnodeId(dst));
        let vl = self.routing.hca_sl2vl[sl as usize];
        let packet = Packet {
            src: e as u32,
            dst,
            sl,
            vl,
            out: 0,
            out_vl: vl,
            arrived: self.now,
            ready: self.now,
        };
        let pid = match self.free.pop() {
            Some(pid) => {
                self.packets[pid as usize] = packet;
                pid
            }
            None => {
                self.packets.push(packet);
                (self.packets.len() - 1) as u32
            }
        };
        self.hcas[e].queues[vl as usize].push_back(pid);
        self.stats.generated_packets += 1;
        if let Some(t) = self.next_slot(e, self.now + self.packet_time) {
            self.schedule(t, Action::Generate(e as u32));
        }
        self.try_inject(e);
    }

    fn try_inject(&mut self, e: usize) {
        let (now, tf, need) = (self.now, self.tf, self.flits);
        let vls = self.vls;
        let hca = &mut self.hcas[e];
        if hca.busy > now {
            return;
        }
        let mut earliest = NEVER;
        let mut chosen = None;
        for k in 0..vls {
            let v = (hca.next_vl + k) % vls;
            if hca.queues[v].is_empty() {
                continue;
            }
            let line = &mut hca.credits[v];
            line.settle(now, tf);
            if line.avail >= need {
                chosen = Some(v);
                break;
            }
            earliest = earliest.min(line.earliest(need, tf));
        }
        let Some(v) = chosen else {
            if earliest != NEVER {
                self.wake_hca(e, earliest);
            }
            return;
        };
        let pid = hca.queues[v].pop_front().expect("chosen VL has a packet");
        hca.next_vl = (v + 1) % vls;
        hca.busy = now + self.packet_time;
        hca.credits[v].avail -= need;
        self.stats.injected_packets += 1;
        self.last_progress = self.now;
        self.stats.in_fabric_packets += 1;
        let busy = now + self.packet_time;
        self.wake_hca(e, busy);
        let node = self.topology.endnode(EndnodeId(e as u32));
        self.arrive(node.switch.index(), node.switch_port as usize, pid, now);
    }

    /// Places a packet sent at `sent` into the input buffer of `switch`.
    fn arrive(&mut self, s: usize, port: usize, pid: u32, sent: u64) {
        let switch = SwitchId(s as u32);
        let radix = self.topology.switch(switch).radix();
        let p = &mut self.packets[pid as usize];
        p.vl = p.out_vl;
        p.arrived = sent + self.link + self.tf;
        p.ready = p.arrived + self.pipeline;
        p.out = self.routing.lft.port(switch, EndnodeId(p.dst));
        p.out_vl = self.routing.sl2vl.vl(switch, p.out, port as u16, p.sl);
        let (vl, out, ready) = (p.vl as usize, p.out as usize, p.ready);
        assert!(
            vl < self.vls && (p.out_vl as usize) < self.vls,
            "VL outside the configured range"
        );
        let lane = if self.voq { out } else { 0 };
        let q = self.queue_index(port, vl, lane, radix);
        let sw = &mut self.switches[s];
        sw.queues[q].push_back(pid);
        let waiting = &mut sw.waiting[port * self.vls + vl];
        *waiting += 1;
        assert!(
            *waiting <= self.depth,
            "input buffer overflow at switch {s} port {port} vl {vl}"
        );
        self.stats.max_vl_occupancy = self.stats.max_vl_occupancy.max(*waiting as u64);
        self.wake_switch(s, ready);
    }

    fn allocate(&mut self, s: usize) {
        let (now, tf, need, voq, vls) = (self.now, self.tf, self.flits, self.voq, self.vls);
        let node = self.topology.switch(SwitchId(s as u32));
        let radix = node.radix();
        let lanes = if voq { radix } else { 1 };
        let first = self.switches[s].first_output;
        self.switches[s].first_output = (first + 1) % radix;
        let mut credit_wake = NEVER;
        for k in 0..radix {
            let o = (first + k) % radix;
            let sink = matches!(node.ports[o].peer, NodeRef::Endnode(_));
            let SwitchState {
                queues,
                in_busy,
                out_busy,
                credits,
                arbiters,
                ..
            } = &mut self.switches[s];
            if out_busy[o] > now {
                continue;
            }
            if !sink {
                for line in &mut credits[o * vls..(o + 1) * vls] {
                    line.settle(now, tf);
                }
            }
            let packets = &self.packets;
            let mut blocked = NEVER;
            let choice = arbiters[o].pick(|i, v| {
                if in_busy[i] > now {
                    return false;
                }
                let lane = if voq { o } else { 0 };
                let Some(&pid) = queues[(i * vls + v) * lanes + lane].front() else {
                    return false;
                };
                let p = &packets[pid as usize];
                if p.out as usize != o || p.ready > now {
                    return false;
                }
                if sink {
                    return true;
                }
                let line = &credits[o * vls + p.out_vl as usize];
                if line.avail >= need {
                    true
                } else {
                    blocked = blocked.min(line.earliest(need, tf));
                    false
                }
            });
            match choice {
                Some((i, v)) => self.grant(s, o, i, v),
                None => credit_wake = credit_wake.min(blocked),
            }
        }
        if credit_wake != NEVER {
            self.wake_switch(s, credit_wake);
        }
    }

    fn grant(&mut self, s: usize, o: usize, i: usize, v: usize) {
        let (now, tf, need, vls) = (self.now, self.tf, self.flits, self.vls);
        let node = self.topology.switch(SwitchId(s as u32));
        let radix = node.radix();
        let lane = if self.voq { o } else { 0 };
        let q = self.queue_index(i, v, lane, radix);
        let done = now + self.packet_time;
        let sw = &mut self.switches[s];
        let pid = sw.queues[q]
            .pop_front()
            .expect("granted queue has a packet");
        sw.waiting[i * vls + v] -= 1;
        sw.in_busy[i] = done;
        sw.out_busy[o] = done;
        self.last_progress = now;
        self.wake_switch(s, done);

        // The drained flits return as credits to whoever feeds input `i`.
        let stream = (now + tf + self.link, need);
        let cap = self.depth * need;
        match node.ports[i].peer {
            NodeRef::Switch(u) => {
                let line = &mut self.switches[u.index()].credits
                    [node.ports[i].peer_port as usize * vls + v];
                line.settle(now, tf);
                let starved = line.avail < need;
                line.streams.push_back(stream);
                assert!(line.outstanding() <= cap, "credit overflow");
                if starved {
                    let t = line.earliest(need, tf);
                    self.wake_switch(u.index(), t);
                }
            }
            NodeRef::Endnode(e) => {
                let line = &mut self.hcas[e.index()].credits[v];
                line.settle(now, tf);
                let starved = line.avail < need;
                line.streams.push_back(stream);
                assert!(line.outstanding() <= cap, "credit overflow");
                if starved {
                    let t = line.earliest(need, tf);
                    self.wake_hca(e.index(), t);
                }
            }
        }

        let p = self.packets[pid as usize];
        if self.routing.engine == Engine::Dla
            && p.out_vl == 1
            && !(node.ports[o].kind == ChannelKind::Local
                && node.ports[i].kind == ChannelKind::Global)
        {
            self.stats.vl1_violations += 1;
        }
        match node.ports[o].peer {
            NodeRef::Switch(u) => {
                let line = &mut self.switches[s].credits[o * vls + p.out_vl as usize];
                assert!(line.avail >= need, "forwarded without credits");
                line.avail -= need;
                self.arrive(u.index(), node.ports[o].peer_port as usize, pid, now);
            }
            NodeRef::Endnode(e) => self.deliver(pid, e.index(), now),
        }
    }

    fn deliver(&mut self, pid: u32, e: usize, sent: u64) {
        let base = sent + self.link;
        if self.measured[e] {
            let (lo, hi) = self.window;
            let in_window = (1..=self.flits as u64)
                .filter(|k| {
                    let t = base + k * self.tf;
                    t >= lo && t < hi
                })
                .count();
            self.received_flits[e] += in_window as u64;
        }
        let last = base + self.flits as u64 * self.tf;
        if last < self.window.0 {
            if let Some(prev) = self.last_delivery {
                self.max_warmup_gap = self.max_warmup_gap.max(last - prev);
            }
        }
        self.last_delivery = Some(last);
        self.stats.delivered_packets += 1;
        self.stats.in_fabric_packets -= 1;
        self.free.push(pid);
    }

    /// Trips when packets remain but nothing has moved for the horizon; the
    /// oldest resident packet is reported as the witness.
    fn watchdog(&self) -> Result<(), SimError> {
        if self.now.saturating_sub(self.last_progress) <= self.horizon() {
            return Ok(());
        }
        let mut oldest: Option<(u64, usize, usize, u32)> = None;
        for (s, sw) in self.switches.iter().enumerate() {
            let radix = self.topology.switch(SwitchId(s as u32)).radix();
            let lanes = if self.voq { radix } else { 1 };
            for (idx, q) in sw.queues.iter().enumerate() {
                if let Some(&pid) = q.front() {
                    let arrived = self.packets[pid as usize].arrived;
                    if oldest.is_none_or(|(t, ..)| arrived < t) {
                        oldest = Some((arrived, s, idx / lanes / self.vls, pid));
                    }
                }
            }
        }
        match oldest {
            None => Ok(()),
            Some((arrived, s, port, pid)) => {
                let p = &self.packets[pid as usize];
                Err(SimError::DeadlockDetected {
                    time_ps: self.now,
                    switch: s as u32,
                    port: port as u16,
                    vl: p.vl,
                    src: p.src,
                    dst: p.dst,
                    resident_ps: self.now - arrived,
                })
            }
        }
    }

    fn finish(self) -> SimResult {
        let window = (self.window.1 - self.window.0) as f64;
        let measured: Vec<u32> = self.traffic.measured.clone();
        let per_endnode: Vec<f64> = measured
            .iter()
            .map(|&e| self.received_flits[e as usize] as f64 * self.tf as f64 / window)
            .collect();
        let accepted = if per_endnode.is_empty() {
            0.0
        } else {
            per_endnode.iter().sum::<f64>() / per_endnode.len() as f64
        };
        let mut stats = self.stats.clone();
        stats.resident_packets = self
            .switches
            .iter()
            .flat_map(|s| &s.queues)
            .map(|q| q.len() as u64)
            .sum();
        stats.queued_at_sources = self
            .hcas
            .iter()
            .flat_map(|h| &h.queues)
            .map(|q| q.len() as u64)
            .sum();
        stats.stall_horizon_ps = self.horizon();
        SimResult {
            offered: self.load,
            accepted,
            measured,
            per_endnode,
            config_hash: String::new(),
            seed: 0,
            stats,
        }
    }
}

pub(crate) fn simulate(config: &SimConfig) -> Result<SimResult, SimError> {
    let mut result = Sim::new(config)?.run()?;
    result.config_hash = config.config_hash();
    result.seed = config.settings.seed;
    Ok(result)
}
