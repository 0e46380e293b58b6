//! The deterministic event loop.
//!
//! All timing is integer microseconds. A single seeded RNG drives every
//! random draw in event order, so a fixed (topology, spec, plan, seed)
//! reproduces the trace bit for bit. Rows may be emitted at future
//! timestamps by the handler that decides them; the trace is stable-sorted
//! by time once at the end of the run.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::connection::{connection_duration, Connection, ConnectionsSpec, EndpointPolicy};
use super::misbehavior::{MisbehaviorKind, MisbehaviorPlan};
use super::topology::Topology;
use super::trace::{EventKind, EventTrace, TraceEvent, BROADCAST};
use super::{NodeId, SimError};

// 2 Mbps transmission rate.
const BYTE_TIME_US: u64 = 4;
const T_RTS_US: u64 = 50;
const T_CTS_US: u64 = 50;
const T_ACK_US: u64 = 50;
const SLOT_US: u64 = 20;
const DIFS_US: u64 = 50;
const RTS_TIMEOUT_US: u64 = 300;
const RTS_RETRY_LIMIT: u32 = 7;
const MAX_BACKOFF_EXP: u32 = 6;
const PROC_DELAY_US: u64 = 1_000;
const RREQ_JITTER_US: u64 = 2_000;
const RREP_HOP_US: u64 = 1_000;
const RERR_HOP_US: u64 = 1_000;
const TUNNEL_LATENCY_US: u64 = 500;
const DISCOVERY_TIMEOUT_US: u64 = 1_000_000;
const ACK_FAILURE_LIMIT: u32 = 3;
const TX_QUEUE_CAP: usize = 50;
const SOURCE_BUFFER_CAP: usize = 20;
const RREQ_SIZE: u32 = 24;
const RREP_SIZE: u32 = 20;
const RERR_SIZE: u32 = 20;
const REPLACEMENT_DELAY_US: u64 = 1_000_000;
const START_STAGGER_US: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RouteState {
    Valid,
    Invalid,
    Unreachable,
}

#[derive(Debug, Clone, Copy)]
struct RouteEntry {
    next_hop: NodeId,
    hops: u32,
    state: RouteState,
}

#[derive(Debug, Default)]
struct NodeState {
    occupied_until: u64,
    busy_tx: bool,
    tx_gen: u64,
    current: Option<CurrentTx>,
    queue: VecDeque<u64>,
    route: BTreeMap<NodeId, RouteEntry>,
    seen_discoveries: HashSet<u32>,
    ack_failures: BTreeMap<NodeId, u32>,
}

#[derive(Debug, Clone, Copy)]
struct CurrentTx {
    pid: u64,
    backoffs: u32,
    rts_sent: u32,
}

#[derive(Debug, Clone, Copy)]
struct DataPacket {
    conn: usize,
    seq: u32,
    size: u32,
    alive: bool,
    holder: NodeId,
}

#[derive(Debug)]
struct ConnState {
    meta: Connection,
    next_seq: u32,
    expired: bool,
    discovering: Option<u32>,
    buffer: VecDeque<u64>,
    replaced: bool,
}

impl ConnState {
    fn end_us(&self) -> u64 {
        secs_to_us(self.meta.start_time + self.meta.duration)
    }
}

#[derive(Debug)]
struct Discovery {
    conn: usize,
    origin: NodeId,
    target: NodeId,
    resolved: bool,
    replied: bool,
    path_rev: Vec<NodeId>,
}

#[derive(Debug, Clone)]
enum Action {
    Inject { conn: usize },
    EnqueueData { node: NodeId, pid: u64 },
    Attempt { node: NodeId, gen: u64 },
    TxDone { node: NodeId, gen: u64 },
    ReceiveProcess { node: NodeId, pid: u64 },
    TunnelArrive { node: NodeId, from: NodeId, pid: u64 },
    RreqStart { conn: usize, disc: u32 },
    RreqProcess { node: NodeId, from: NodeId, disc: u32, hops: u32 },
    RreqBroadcast { node: NodeId, disc: u32 },
    RrepAt { node: NodeId, from: Option<NodeId>, disc: u32, hops_to_dest: u32, pid: u64 },
    RerrAt { node: NodeId, conn: usize, disc: u32, pid: u64 },
    ConnectionExpire { conn: usize },
    DiscoveryTimeout { conn: usize, disc: u32 },
}

#[derive(Debug)]
struct Sched {
    time: u64,
    tick: u64,
    action: Action,
}

impl PartialEq for Sched {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.tick == other.tick
    }
}
impl Eq for Sched {}
impl PartialOrd for Sched {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Sched {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.tick).cmp(&(other.time, other.tick))
    }
}

fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

/// Simulation output: the trace plus realized connections and packet
/// conservation counters.
#[derive(Debug)]
pub struct SimReport {
    pub trace: EventTrace,
    pub connections: Vec<Connection>,
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Connections whose route discovery never succeeded.
    pub unrouted_connections: usize,
}

struct Simulator<'a> {
    topo: &'a Topology,
    plan: &'a MisbehaviorPlan,
    spec: &'a ConnectionsSpec,
    sim_end: u64,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Reverse<Sched>>,
    tick: u64,
    rows: Vec<TraceEvent>,
    nodes: Vec<NodeState>,
    conns: Vec<ConnState>,
    discoveries: Vec<Discovery>,
    packets: HashMap<u64, DataPacket>,
    next_pid: u64,
    used_sources: BTreeSet<NodeId>,
    injected: u64,
    delivered: u64,
    dropped: u64,
    unrouted: usize,
}

impl<'a> Simulator<'a> {
    fn new(
        topo: &'a Topology,
        spec: &'a ConnectionsSpec,
        plan: &'a MisbehaviorPlan,
        sim_duration: f64,
        seed: u64,
    ) -> Simulator<'a> {
        Simulator {
            topo,
            plan,
            spec,
            sim_end: secs_to_us(sim_duration),
            rng: ChaCha8Rng::seed_from_u64(seed),
            heap: BinaryHeap::new(),
            tick: 0,
            rows: Vec::new(),
            nodes: (0..topo.len()).map(|_| NodeState::default()).collect(),
            conns: Vec::new(),
            discoveries: Vec::new(),
            packets: HashMap::new(),
            next_pid: 0,
            used_sources: BTreeSet::new(),
            injected: 0,
            delivered: 0,
            dropped: 0,
            unrouted: 0,
        }
    }

    fn schedule(&mut self, time: u64, action: Action) {
        self.tick += 1;
        self.heap.push(Reverse(Sched {
            time,
            tick: self.tick,
            action,
        }));
    }

    fn alloc_pid(&mut self) -> u64 {
        let pid = self.next_pid;
        self.next_pid += 1;
        pid
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &mut self,
        time: u64,
        observer: NodeId,
        kind: EventKind,
        pid: u64,
        conn: u32,
        src: NodeId,
        dst: NodeId,
        seq: u32,
        size: u32,
    ) {
        self.rows.push(TraceEvent {
            time_us: time,
            observer,
            kind,
            packet_id: pid,
            connection_id: conn,
            src,
            dst_mac: dst,
            seq_number: seq,
            size,
        });
    }

    fn occupy(&mut self, center: NodeId, until: u64) {
        let node = &mut self.nodes[center as usize];
        node.occupied_until = node.occupied_until.max(until);
        for i in 0..self.topo.neighbors(center).len() {
            let nbr = self.topo.neighbors(center)[i];
            let n = &mut self.nodes[nbr as usize];
            n.occupied_until = n.occupied_until.max(until);
        }
    }

    fn data_dur(&self, size: u32) -> u64 {
        size as u64 * BYTE_TIME_US
    }

    // ---- connection setup ----------------------------------------------

    fn sample_pair(&mut self, hops: u32) -> Option<(NodeId, NodeId)> {
        let n = self.topo.len() as NodeId;
        let mut sources: Vec<NodeId> = (0..n)
            .filter(|s| !self.used_sources.contains(s))
            .collect();
        if sources.is_empty() {
            // All sources used once; allow reuse.
            sources = (0..n).collect();
        }
        for _ in 0..64 {
            if sources.is_empty() {
                break;
            }
            let si = self.rng.gen_range(0..sources.len());
            let source = sources.swap_remove(si);
            let dist = self.topo.hop_distances(source);
            let at_exact: Vec<NodeId> = (0..n)
                .filter(|&d| dist[d as usize] == Some(hops))
                .collect();
            if !at_exact.is_empty() {
                let dest = at_exact[self.rng.gen_range(0..at_exact.len())];
                return Some((source, dest));
            }
            // No node at the exact distance: fall back to the farthest
            // available below it.
            let best = (0..n)
                .filter_map(|d| dist[d as usize].filter(|&h| h >= 2 && h < hops).map(|h| (h, d)))
                .max();
            if let Some((_, dest)) = best {
                return Some((source, dest));
            }
        }
        None
    }

    fn add_connection(&mut self, source: NodeId, dest: NodeId, start_us: u64) {
        let r_u: f64 = self.rng.gen_range(0.0..=1.0);
        let duration = connection_duration(self.spec.delta, self.spec.lambda, r_u)
            .expect("validated spec");
        let id = self.conns.len() as u32;
        self.used_sources.insert(source);
        self.conns.push(ConnState {
            meta: Connection {
                connection_id: id,
                source,
                destination: dest,
                path: Vec::new(),
                start_time: start_us as f64 / 1e6,
                duration,
                injection_interval: self.spec.injection_interval,
                packet_size: self.spec.packet_size,
            },
            next_seq: 0,
            expired: false,
            discovering: None,
            buffer: VecDeque::new(),
            replaced: false,
        });
        let idx = self.conns.len() - 1;
        self.schedule(start_us, Action::Inject { conn: idx });
        let end = self.conns[idx].end_us();
        if end < self.sim_end {
            self.schedule(end, Action::ConnectionExpire { conn: idx });
        }
    }

    fn setup_connections(&mut self) -> Result<(), SimError> {
        match self.spec.endpoints.clone() {
            EndpointPolicy::Explicit(pairs) => {
                for (s, d) in pairs {
                    if s as usize >= self.topo.len() {
                        return Err(SimError::BadEndpoint(s));
                    }
                    if d as usize >= self.topo.len() || s == d {
                        return Err(SimError::BadEndpoint(d));
                    }
                    self.add_connection(s, d, 0);
                }
            }
            EndpointPolicy::RandomPairs { count, hops } => {
                for _ in 0..count {
                    let start = self.rng.gen_range(0..START_STAGGER_US);
                    match self.sample_pair(hops) {
                        Some((s, d)) => self.add_connection(s, d, start),
                        None => return Err(SimError::NoPairAtDistance(hops)),
                    }
                }
            }
        }
        Ok(())
    }

    // ---- routing ---------------------------------------------------------

    fn valid_route(&self, node: NodeId, dest: NodeId) -> Option<RouteEntry> {
        self.nodes[node as usize]
            .route
            .get(&dest)
            .filter(|r| r.state == RouteState::Valid)
            .copied()
    }

    fn install_route(&mut self, node: NodeId, dest: NodeId, next_hop: NodeId, hops: u32) {
        let table = &mut self.nodes[node as usize].route;
        let replace = match table.get(&dest) {
            Some(existing) => existing.state != RouteState::Valid || hops <= existing.hops,
            None => true,
        };
        if replace {
            table.insert(
                dest,
                RouteEntry {
                    next_hop,
                    hops,
                    state: RouteState::Valid,
                },
            );
        }
    }

    fn start_discovery(&mut self, conn: usize, now: u64) {
        if self.conns[conn].discovering.is_some() {
            return;
        }
        let disc = self.discoveries.len() as u32;
        self.discoveries.push(Discovery {
            conn,
            origin: self.conns[conn].meta.source,
            target: self.conns[conn].meta.destination,
            resolved: false,
            replied: false,
            path_rev: Vec::new(),
        });
        self.conns[conn].discovering = Some(disc);
        self.schedule(now, Action::RreqStart { conn, disc });
        self.schedule(now + DISCOVERY_TIMEOUT_US, Action::DiscoveryTimeout { conn, disc });
    }

    fn rreq_transmit(&mut self, node: NodeId, disc: u32, hops: u32, now: u64) {
        let conn = self.discoveries[disc as usize].conn as u32;
        let pid = self.alloc_pid();
        let dur = self.data_dur(RREQ_SIZE);
        self.row(now, node, EventKind::Rreq, pid, conn, node, BROADCAST, disc, RREQ_SIZE);
        self.occupy(node, now + dur);
        for i in 0..self.topo.neighbors(node).len() {
            let nbr = self.topo.neighbors(node)[i];
            self.row(
                now + dur,
                nbr,
                EventKind::Rreq,
                pid,
                conn,
                node,
                BROADCAST,
                disc,
                RREQ_SIZE,
            );
            self.schedule(
                now + dur,
                Action::RreqProcess {
                    node: nbr,
                    from: node,
                    disc,
                    hops: hops + 1,
                },
            );
        }
        // Wormhole endpoints tunnel route requests to the peer; only the
        // reception side of the private transfer is observable.
        if let Some(peer) = self.plan.wormhole_peer(node) {
            let t = now + TUNNEL_LATENCY_US;
            let tunnel_pid = self.alloc_pid();
            self.row(
                t,
                peer,
                EventKind::Rreq,
                tunnel_pid,
                conn,
                node,
                BROADCAST,
                disc,
                RREQ_SIZE,
            );
            self.schedule(
                t,
                Action::RreqProcess {
                    node: peer,
                    from: node,
                    disc,
                    hops: hops + 1,
                },
            );
        }
    }

    fn handle_rreq_process(&mut self, node: NodeId, from: NodeId, disc: u32, hops: u32, now: u64) {
        if !self.nodes[node as usize].seen_discoveries.insert(disc) {
            return;
        }
        let origin = self.discoveries[disc as usize].origin;
        let target = self.discoveries[disc as usize].target;
        if node != origin {
            self.install_route(node, origin, from, hops);
        }
        if node == target {
            if !self.discoveries[disc as usize].replied {
                self.discoveries[disc as usize].replied = true;
                let pid = self.alloc_pid();
                self.schedule(
                    now + PROC_DELAY_US,
                    Action::RrepAt {
                        node,
                        from: None,
                        disc,
                        hops_to_dest: 0,
                        pid,
                    },
                );
            }
            return;
        }
        let jitter = self.rng.gen_range(0..RREQ_JITTER_US);
        self.schedule(
            now + PROC_DELAY_US + jitter,
            Action::RreqBroadcast { node, disc },
        );
    }

    fn handle_rrep_at(
        &mut self,
        node: NodeId,
        from: Option<NodeId>,
        disc: u32,
        hops_to_dest: u32,
        pid: u64,
        now: u64,
    ) {
        let conn = self.discoveries[disc as usize].conn;
        let dest = self.discoveries[disc as usize].target;
        let origin = self.discoveries[disc as usize].origin;
        if let Some(from) = from {
            self.install_route(node, dest, from, hops_to_dest);
        }
        self.discoveries[disc as usize].path_rev.push(node);
        if node == origin {
            self.discoveries[disc as usize].resolved = true;
            if self.conns[conn].discovering == Some(disc) {
                self.conns[conn].discovering = None;
            }
            if self.conns[conn].meta.path.is_empty() {
                let mut path = self.discoveries[disc as usize].path_rev.clone();
                path.reverse();
                self.conns[conn].meta.path = path;
            }
            // Route is up: move buffered packets into the source queue.
            while let Some(pid) = self.conns[conn].buffer.pop_front() {
                self.schedule(now, Action::EnqueueData { node, pid });
            }
            return;
        }
        let next = match self.nodes[node as usize].route.get(&origin) {
            Some(r) if r.state == RouteState::Valid => r.next_hop,
            _ => {
                log::warn!("rrep chain broken at node {node}: no reverse route to {origin}");
                return;
            }
        };
        let conn_id = self.conns[conn].meta.connection_id;
        if self.plan.wormhole_peer(node) == Some(next) {
            let t = now + TUNNEL_LATENCY_US;
            self.row(t, next, EventKind::Rrep, pid, conn_id, node, next, disc, RREP_SIZE);
            self.schedule(
                t + RREP_HOP_US,
                Action::RrepAt {
                    node: next,
                    from: Some(node),
                    disc,
                    hops_to_dest: hops_to_dest + 1,
                    pid,
                },
            );
            return;
        }
        let dur = self.data_dur(RREP_SIZE);
        self.row(now, node, EventKind::Rrep, pid, conn_id, node, next, disc, RREP_SIZE);
        self.occupy(node, now + dur);
        for i in 0..self.topo.neighbors(node).len() {
            let nbr = self.topo.neighbors(node)[i];
            if nbr == next {
                continue;
            }
            self.row(now, nbr, EventKind::Rrep, pid, conn_id, node, next, disc, RREP_SIZE);
        }
        self.row(now + dur, next, EventKind::Rrep, pid, conn_id, node, next, disc, RREP_SIZE);
        self.schedule(
            now + dur + RREP_HOP_US,
            Action::RrepAt {
                node: next,
                from: Some(node),
                disc,
                hops_to_dest: hops_to_dest + 1,
                pid,
            },
        );
    }

    fn handle_rerr_at(&mut self, node: NodeId, conn: usize, disc: u32, pid: u64, now: u64) {
        let dest = self.conns[conn].meta.destination;
        let source = self.conns[conn].meta.source;
        if let Some(entry) = self.nodes[node as usize].route.get_mut(&dest) {
            if entry.state == RouteState::Valid {
                entry.state = RouteState::Invalid;
            }
        }
        if node == source {
            return;
        }
        let next = match self.nodes[node as usize].route.get(&source) {
            Some(r) if r.state == RouteState::Valid => r.next_hop,
            _ => return,
        };
        let conn_id = self.conns[conn].meta.connection_id;
        if self.plan.wormhole_peer(node) == Some(next) {
            let t = now + TUNNEL_LATENCY_US;
            self.row(t, next, EventKind::Rerr, pid, conn_id, node, next, disc, RERR_SIZE);
            self.schedule(t + RERR_HOP_US, Action::RerrAt { node: next, conn, disc, pid });
            return;
        }
        let dur = self.data_dur(RERR_SIZE);
        self.row(now, node, EventKind::Rerr, pid, conn_id, node, next, disc, RERR_SIZE);
        self.occupy(node, now + dur);
        self.row(now + dur, next, EventKind::Rerr, pid, conn_id, node, next, disc, RERR_SIZE);
        self.schedule(now + dur + RERR_HOP_US, Action::RerrAt { node: next, conn, disc, pid });
    }

    fn note_ack_failure(&mut self, node: NodeId, next_hop: NodeId, pid: u64, now: u64) {
        let count = self.nodes[node as usize]
            .ack_failures
            .entry(next_hop)
            .and_modify(|c| *c += 1)
            .or_insert(1);
        if *count < ACK_FAILURE_LIMIT {
            return;
        }
        self.nodes[node as usize].ack_failures.remove(&next_hop);
        // Break every route through the failed next hop.
        let broken: Vec<NodeId> = self.nodes[node as usize]
            .route
            .iter()
            .filter(|(_, r)| r.next_hop == next_hop && r.state == RouteState::Valid)
            .map(|(&d, _)| d)
            .collect();
        for d in broken {
            self.nodes[node as usize].route.get_mut(&d).unwrap().state = RouteState::Invalid;
        }
        let conn = self.packets[&pid].conn;
        let disc = self.conns[conn].discovering.unwrap_or(0);
        let rerr_pid = self.alloc_pid();
        self.schedule(now, Action::RerrAt { node, conn, disc, pid: rerr_pid });
    }

    // ---- data plane ------------------------------------------------------

    fn handle_inject(&mut self, conn: usize, now: u64) {
        if self.conns[conn].expired || now >= self.sim_end || now >= self.conns[conn].end_us() {
            return;
        }
        let seq = self.conns[conn].next_seq;
        self.conns[conn].next_seq += 1;
        let pid = self.alloc_pid();
        let source = self.conns[conn].meta.source;
        self.packets.insert(
            pid,
            DataPacket {
                conn,
                seq,
                size: self.conns[conn].meta.packet_size,
                alive: true,
                holder: source,
            },
        );
        self.injected += 1;

        let dest = self.conns[conn].meta.destination;
        if self.valid_route(source, dest).is_some() {
            self.schedule(now, Action::EnqueueData { node: source, pid });
        } else {
            if self.conns[conn].buffer.len() >= SOURCE_BUFFER_CAP {
                let oldest = self.conns[conn].buffer.pop_front().unwrap();
                self.drop_packet(oldest, source, now);
            }
            self.conns[conn].buffer.push_back(pid);
            self.start_discovery(conn, now);
        }
        let next = now + secs_to_us(self.conns[conn].meta.injection_interval);
        if next < self.sim_end && next < self.conns[conn].end_us() {
            self.schedule(next, Action::Inject { conn });
        }
    }

    fn drop_packet(&mut self, pid: u64, at: NodeId, now: u64) {
        let Some(p) = self.packets.get_mut(&pid) else {
            return;
        };
        if !p.alive {
            return;
        }
        p.alive = false;
        let (conn, seq, size) = (p.conn, p.seq, p.size);
        self.dropped += 1;
        let conn_id = self.conns[conn].meta.connection_id;
        self.row(now, at, EventKind::DropInternal, pid, conn_id, at, at, seq, size);
    }

    fn handle_enqueue(&mut self, node: NodeId, pid: u64, now: u64) {
        if !self.packets.get(&pid).map(|p| p.alive).unwrap_or(false) {
            return;
        }
        self.packets.get_mut(&pid).unwrap().holder = node;
        if self.nodes[node as usize].queue.len() >= TX_QUEUE_CAP {
            self.drop_packet(pid, node, now);
            return;
        }
        self.nodes[node as usize].queue.push_back(pid);
        self.kick(node, now);
    }

    fn kick(&mut self, node: NodeId, now: u64) {
        let st = &mut self.nodes[node as usize];
        if st.busy_tx || st.queue.is_empty() {
            return;
        }
        let pid = st.queue.pop_front().unwrap();
        st.busy_tx = true;
        st.tx_gen += 1;
        let gen = st.tx_gen;
        st.current = Some(CurrentTx {
            pid,
            backoffs: 0,
            rts_sent: 0,
        });
        self.schedule(now, Action::Attempt { node, gen });
    }

    fn finish_tx(&mut self, node: NodeId, now: u64) {
        let st = &mut self.nodes[node as usize];
        st.busy_tx = false;
        st.current = None;
        self.kick(node, now);
    }

    fn backoff_delay(&mut self, backoffs: u32) -> u64 {
        let exp = backoffs.min(MAX_BACKOFF_EXP);
        let slots = self.rng.gen_range(0..(1u64 << exp).max(1));
        DIFS_US + slots * SLOT_US
    }

    fn handle_attempt(&mut self, node: NodeId, gen: u64, now: u64) {
        if self.nodes[node as usize].tx_gen != gen || !self.nodes[node as usize].busy_tx {
            return;
        }
        let Some(mut cur) = self.nodes[node as usize].current else {
            return;
        };
        let Some(&pkt) = self.packets.get(&cur.pid) else {
            self.finish_tx(node, now);
            return;
        };
        if !pkt.alive {
            self.finish_tx(node, now);
            return;
        }
        let conn = pkt.conn;
        let dest = self.conns[conn].meta.destination;
        let source = self.conns[conn].meta.source;
        let conn_id = self.conns[conn].meta.connection_id;

        let route = self.valid_route(node, dest);
        let Some(route) = route else {
            // Route lost while queued: sources re-buffer and rediscover,
            // relays drop.
            if node == source && !self.conns[conn].expired {
                if self.conns[conn].buffer.len() >= SOURCE_BUFFER_CAP {
                    self.drop_packet(cur.pid, node, now);
                } else {
                    self.conns[conn].buffer.push_back(cur.pid);
                    self.start_discovery(conn, now);
                }
            } else {
                self.drop_packet(cur.pid, node, now);
            }
            self.finish_tx(node, now);
            return;
        };
        let next_hop = route.next_hop;

        // Private wormhole link: no radio activity at all.
        if self.plan.wormhole_peer(node) == Some(next_hop) {
            self.schedule(
                now + TUNNEL_LATENCY_US,
                Action::TunnelArrive {
                    node: next_hop,
                    from: node,
                    pid: cur.pid,
                },
            );
            self.finish_tx(node, now);
            return;
        }

        if self.nodes[node as usize].occupied_until > now {
            cur.backoffs += 1;
            self.row(
                now,
                node,
                EventKind::Backoff,
                cur.pid,
                conn_id,
                node,
                next_hop,
                pkt.seq,
                pkt.size,
            );
            let delay = self.backoff_delay(cur.backoffs);
            self.nodes[node as usize].current = Some(cur);
            let retry = self.nodes[node as usize].occupied_until.max(now) + delay;
            self.schedule(retry, Action::Attempt { node, gen });
            return;
        }

        cur.rts_sent += 1;
        self.row(
            now,
            node,
            EventKind::Rts,
            cur.pid,
            conn_id,
            node,
            next_hop,
            pkt.seq,
            pkt.size,
        );
        if self.nodes[next_hop as usize].occupied_until > now {
            // Receiver is deaf to the request; no CTS will come back.
            if cur.rts_sent >= RTS_RETRY_LIMIT {
                self.drop_packet(cur.pid, node, now + RTS_TIMEOUT_US);
                self.note_ack_failure(node, next_hop, cur.pid, now + RTS_TIMEOUT_US);
                self.finish_tx(node, now + RTS_TIMEOUT_US);
                return;
            }
            cur.backoffs += 1;
            self.row(
                now + RTS_TIMEOUT_US,
                node,
                EventKind::Backoff,
                cur.pid,
                conn_id,
                node,
                next_hop,
                pkt.seq,
                pkt.size,
            );
            let delay = self.backoff_delay(cur.backoffs);
            self.nodes[node as usize].current = Some(cur);
            self.schedule(now + RTS_TIMEOUT_US + delay, Action::Attempt { node, gen });
            return;
        }

        // Handshake succeeds: RTS -> CTS -> DATA -> ACK.
        self.nodes[node as usize].current = Some(cur);
        let t_cts = now + T_RTS_US;
        let t_send = t_cts + T_CTS_US;
        let t_rx = t_send + self.data_dur(pkt.size);
        let t_ack = t_rx + T_ACK_US;
        self.row(t_cts, node, EventKind::Cts, cur.pid, conn_id, next_hop, node, pkt.seq, pkt.size);
        self.row(t_send, node, EventKind::Send, cur.pid, conn_id, node, next_hop, pkt.seq, pkt.size);
        for i in 0..self.topo.neighbors(node).len() {
            let nbr = self.topo.neighbors(node)[i];
            if nbr == next_hop {
                continue;
            }
            self.row(
                t_send,
                nbr,
                EventKind::Overhear,
                cur.pid,
                conn_id,
                node,
                next_hop,
                pkt.seq,
                pkt.size,
            );
        }
        self.row(t_rx, next_hop, EventKind::Receive, cur.pid, conn_id, node, next_hop, pkt.seq, pkt.size);
        self.row(t_ack, node, EventKind::Ack, cur.pid, conn_id, next_hop, node, pkt.seq, pkt.size);
        self.occupy(node, t_ack);
        self.nodes[node as usize].ack_failures.remove(&next_hop);
        self.packets.get_mut(&cur.pid).unwrap().holder = next_hop;
        self.schedule(t_rx, Action::ReceiveProcess { node: next_hop, pid: cur.pid });
        self.schedule(t_ack, Action::TxDone { node, gen });
    }

    fn handle_receive_process(&mut self, node: NodeId, pid: u64, now: u64) {
        let Some(&pkt) = self.packets.get(&pid) else {
            return;
        };
        if !pkt.alive {
            return;
        }
        let conn = pkt.conn;
        if node == self.conns[conn].meta.destination {
            self.packets.get_mut(&pid).unwrap().alive = false;
            self.delivered += 1;
            return;
        }
        // Forwarding misbehavior applies to transit data packets only.
        let mut extra_delay = 0u64;
        if self.plan.affected_nodes.contains(&node) {
            match self.plan.kind {
                MisbehaviorKind::Dropping => {
                    if self.rng.gen::<f64>() < self.plan.drop_or_delay_prob {
                        self.drop_packet(pid, node, now);
                        return;
                    }
                }
                MisbehaviorKind::Delaying => {
                    if self.rng.gen::<f64>() < self.plan.drop_or_delay_prob {
                        extra_delay = secs_to_us(self.plan.delay_amount);
                    }
                }
                _ => {}
            }
        }
        self.schedule(
            now + PROC_DELAY_US + extra_delay,
            Action::EnqueueData { node, pid },
        );
    }

    fn handle_tunnel_arrive(&mut self, node: NodeId, from: NodeId, pid: u64, now: u64) {
        let Some(&pkt) = self.packets.get(&pid) else {
            return;
        };
        if !pkt.alive {
            return;
        }
        let conn_id = self.conns[pkt.conn].meta.connection_id;
        self.row(now, node, EventKind::Receive, pid, conn_id, from, node, pkt.seq, pkt.size);
        self.packets.get_mut(&pid).unwrap().holder = node;
        self.handle_receive_process(node, pid, now);
    }

    fn handle_expire(&mut self, conn: usize, now: u64) {
        if self.conns[conn].expired {
            return;
        }
        self.conns[conn].expired = true;
        let source = self.conns[conn].meta.source;
        while let Some(pid) = self.conns[conn].buffer.pop_front() {
            self.drop_packet(pid, source, now);
        }
        if let EndpointPolicy::RandomPairs { hops, .. } = self.spec.endpoints {
            if !self.conns[conn].replaced {
                self.conns[conn].replaced = true;
                let start = now + REPLACEMENT_DELAY_US;
                if start < self.sim_end {
                    if let Some((s, d)) = self.sample_pair(hops) {
                        self.add_connection(s, d, start);
                    }
                }
            }
        }
    }

    fn handle_discovery_timeout(&mut self, conn: usize, disc: u32, now: u64) {
        if self.discoveries[disc as usize].resolved {
            return;
        }
        if self.conns[conn].discovering == Some(disc) {
            self.conns[conn].discovering = None;
        }
        let source = self.conns[conn].meta.source;
        let dest = self.conns[conn].meta.destination;
        self.nodes[source as usize].route.insert(
            dest,
            RouteEntry {
                next_hop: source,
                hops: 0,
                state: RouteState::Unreachable,
            },
        );
        // Unreachable declaration: a self-addressed route error row.
        let pid = self.alloc_pid();
        let conn_id = self.conns[conn].meta.connection_id;
        self.row(now, source, EventKind::Rerr, pid, conn_id, source, source, disc, RERR_SIZE);
        log::warn!(
            "connection {conn_id}: destination {dest} unreachable from {source}, skipping buffered packets"
        );
        self.unrouted += 1;
        while let Some(pid) = self.conns[conn].buffer.pop_front() {
            self.drop_packet(pid, source, now);
        }
    }

    // ---- main loop -------------------------------------------------------

    fn run(mut self) -> Result<SimReport, SimError> {
        self.setup_connections()?;
        while let Some(Reverse(sched)) = self.heap.pop() {
            if sched.time > self.sim_end {
                continue;
            }
            let now = sched.time;
            match sched.action {
                Action::Inject { conn } => self.handle_inject(conn, now),
                Action::EnqueueData { node, pid } => self.handle_enqueue(node, pid, now),
                Action::Attempt { node, gen } => self.handle_attempt(node, gen, now),
                Action::TxDone { node, gen } => {
                    if self.nodes[node as usize].tx_gen == gen {
                        self.finish_tx(node, now);
                    }
                }
                Action::ReceiveProcess { node, pid } => self.handle_receive_process(node, pid, now),
                Action::TunnelArrive { node, from, pid } => {
                    self.handle_tunnel_arrive(node, from, pid, now)
                }
                Action::RreqStart { conn, disc } => {
                    let origin = self.conns[conn].meta.source;
                    self.nodes[origin as usize].seen_discoveries.insert(disc);
                    self.rreq_transmit(origin, disc, 0, now);
                }
                Action::RreqProcess { node, from, disc, hops } => {
                    self.handle_rreq_process(node, from, disc, hops, now)
                }
                Action::RreqBroadcast { node, disc } => {
                    let hops = self.rreq_hops_of(node, disc);
                    self.rreq_transmit(node, disc, hops, now);
                }
                Action::RrepAt { node, from, disc, hops_to_dest, pid } => {
                    self.handle_rrep_at(node, from, disc, hops_to_dest, pid, now)
                }
                Action::RerrAt { node, conn, disc, pid } => {
                    self.handle_rerr_at(node, conn, disc, pid, now)
                }
                Action::ConnectionExpire { conn } => self.handle_expire(conn, now),
                Action::DiscoveryTimeout { conn, disc } => {
                    self.handle_discovery_timeout(conn, disc, now)
                }
            }
        }

        // Flush: everything still alive is dropped at simulation end.
        let mut alive: Vec<(u64, NodeId)> = self
            .packets
            .iter()
            .filter(|(_, p)| p.alive)
            .map(|(&pid, p)| (pid, p.holder))
            .collect();
        alive.sort_unstable();
        let end = self.sim_end;
        for (pid, holder) in alive {
            self.drop_packet(pid, holder, end);
        }

        let mut rows = std::mem::take(&mut self.rows);
        rows.sort_by_key(|r| r.time_us);
        let connections = self.conns.iter().map(|c| c.meta.clone()).collect();
        Ok(SimReport {
            trace: EventTrace::new(rows),
            connections,
            injected: self.injected,
            delivered: self.delivered,
            dropped: self.dropped,
            unrouted_connections: self.unrouted,
        })
    }

    /// Hop count of `node` within discovery `disc`, recovered from the
    /// reverse route it installed towards the origin.
    fn rreq_hops_of(&self, node: NodeId, disc: u32) -> u32 {
        let origin = self.discoveries[disc as usize].origin;
        self.nodes[node as usize]
            .route
            .get(&origin)
            .map(|r| r.hops)
            .unwrap_or(1)
    }
}

/// Runs one simulation. Deterministic: identical inputs produce a
/// bit-identical trace.
pub fn run_simulation(
    topology: &Topology,
    spec: &ConnectionsSpec,
    plan: &MisbehaviorPlan,
    sim_duration: f64,
    seed: u64,
) -> Result<SimReport, SimError> {
    if sim_duration <= 0.0 {
        return Err(SimError::BadDuration(sim_duration));
    }
    plan.validate(topology)?;
    let sim = Simulator::new(topology, spec, plan, sim_duration, seed);
    sim.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::misbehavior::{plan_misbehavior, PlanSpec, WormholeSpec};
    use crate::netsim::topology::line_topology;

    fn line3_spec(sim: f64) -> ConnectionsSpec {
        ConnectionsSpec::explicit_full_run(vec![(0, 2)], sim)
    }

    #[test]
    fn line_forwarding_delivers_all_packets() {
        let topo = line_topology(3, 50.0);
        let report = run_simulation(
            &topo,
            &line3_spec(100.0),
            &MisbehaviorPlan::none(),
            100.0,
            1,
        )
        .unwrap();
        assert_eq!(report.injected, 50);
        assert!(
            report.delivered >= 49,
            "delivered {} of {}",
            report.delivered,
            report.injected
        );
        // Node 0 overhears node 1's forwards.
        let overhears = report
            .trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Overhear && e.observer == 0 && e.src == 1)
            .count();
        assert!((49..=50).contains(&overhears), "overheard {overhears}");
    }

    #[test]
    fn conservation_holds() {
        let topo = line_topology(5, 50.0);
        let spec = ConnectionsSpec::explicit_full_run(vec![(0, 4), (4, 0)], 200.0);
        let report =
            run_simulation(&topo, &spec, &MisbehaviorPlan::none(), 200.0, 3).unwrap();
        assert_eq!(report.injected, report.delivered + report.dropped);
    }

    #[test]
    fn trace_is_time_ordered_and_seq_monotone() {
        let topo = line_topology(3, 50.0);
        let report = run_simulation(
            &topo,
            &line3_spec(50.0),
            &MisbehaviorPlan::none(),
            50.0,
            9,
        )
        .unwrap();
        assert!(report.trace.is_time_ordered());
        // Per-connection injected sequence numbers are 0,1,2,... gap-free.
        let mut seqs: Vec<u32> = report
            .trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Send && e.src == 0)
            .map(|e| e.seq_number)
            .collect();
        seqs.dedup();
        let expected: Vec<u32> = (0..seqs.len() as u32).collect();
        assert_eq!(seqs, expected);
    }

    #[test]
    fn determinism_bit_identical() {
        let topo = line_topology(4, 50.0);
        let spec = ConnectionsSpec::explicit_full_run(vec![(0, 3)], 120.0);
        let plan = MisbehaviorPlan {
            kind: MisbehaviorKind::Dropping,
            affected_nodes: [1].into_iter().collect(),
            ..MisbehaviorPlan::none()
        };
        let a = run_simulation(&topo, &spec, &plan, 120.0, 42).unwrap();
        let b = run_simulation(&topo, &spec, &plan, 120.0, 42).unwrap();
        assert_eq!(a.trace, b.trace);
        let c = run_simulation(&topo, &spec, &plan, 120.0, 43).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn dropping_reduces_forwarding_to_about_seventy_percent() {
        let topo = line_topology(3, 50.0);
        let plan = MisbehaviorPlan {
            kind: MisbehaviorKind::Dropping,
            affected_nodes: [1].into_iter().collect(),
            ..MisbehaviorPlan::none()
        };
        let mut ratios = Vec::new();
        for seed in 0..10 {
            let report =
                run_simulation(&topo, &line3_spec(100.0), &plan, 100.0, seed).unwrap();
            ratios.push(report.delivered as f64 / report.injected as f64);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((0.65..=0.75).contains(&mean), "mean forwarded {mean}");
    }

    #[test]
    fn delaying_adds_expected_latency() {
        let topo = line_topology(3, 50.0);
        let plan = MisbehaviorPlan {
            kind: MisbehaviorKind::Delaying,
            affected_nodes: [1].into_iter().collect(),
            ..MisbehaviorPlan::none()
        };
        let latency = |report: &SimReport| -> f64 {
            // Time from node 1 receiving a packet to node 1 sending it on.
            let mut rx: HashMap<u64, u64> = HashMap::new();
            let mut total = 0.0;
            let mut count = 0usize;
            for e in &report.trace.events {
                match e.kind {
                    EventKind::Receive if e.observer == 1 => {
                        rx.insert(e.packet_id, e.time_us);
                    }
                    EventKind::Send if e.observer == 1 => {
                        if let Some(&t) = rx.get(&e.packet_id) {
                            total += (e.time_us - t) as f64 / 1e6;
                            count += 1;
                        }
                    }
                    _ => {}
                }
            }
            total / count as f64
        };
        let mut base = 0.0;
        let mut delayed = 0.0;
        for seed in 0..10 {
            base += latency(
                &run_simulation(&topo, &line3_spec(100.0), &MisbehaviorPlan::none(), 100.0, seed)
                    .unwrap(),
            );
            delayed +=
                latency(&run_simulation(&topo, &line3_spec(100.0), &plan, 100.0, seed).unwrap());
        }
        let added = (delayed - base) / 10.0;
        assert!(
            (added - 0.03).abs() <= 0.006,
            "added latency {added}, expected 0.03 +- 20%"
        );
    }

    #[test]
    fn overhear_closure_every_send_heard_by_all_other_neighbors() {
        let topo = line_topology(4, 50.0);
        let spec = ConnectionsSpec::explicit_full_run(vec![(0, 3)], 60.0);
        let report =
            run_simulation(&topo, &spec, &MisbehaviorPlan::none(), 60.0, 5).unwrap();
        for e in &report.trace.events {
            if e.kind != EventKind::Send {
                continue;
            }
            let heard: Vec<NodeId> = report
                .trace
                .events
                .iter()
                .filter(|o| {
                    o.kind == EventKind::Overhear
                        && o.packet_id == e.packet_id
                        && o.time_us == e.time_us
                })
                .map(|o| o.observer)
                .collect();
            let expected: Vec<NodeId> = topo
                .neighbors(e.src)
                .iter()
                .copied()
                .filter(|&n| n != e.dst_mac)
                .collect();
            assert_eq!(heard, expected, "send of packet {}", e.packet_id);
        }
    }

    #[test]
    fn wormhole_tunnels_are_invisible_and_attract_routes() {
        // A 16-node line with a wormhole between its ends; connection from
        // 1 to 14 is 13 radio hops but only 3 via the tunnel.
        let topo = line_topology(16, 50.0);
        let plan = plan_misbehavior(
            &topo,
            MisbehaviorKind::Wormhole,
            PlanSpec::Wormholes(WormholeSpec {
                count: 1,
                min_hop_separation: 15,
            }),
            1,
        )
        .unwrap();
        let spec = ConnectionsSpec::explicit_full_run(vec![(1, 14)], 100.0);
        let report = run_simulation(&topo, &spec, &plan, 100.0, 2).unwrap();
        // Route went through the tunnel.
        let path = &report.connections[0].path;
        assert!(
            path.windows(2).any(|w| w == [0, 15] || w == [15, 0]),
            "path {path:?} does not use the wormhole"
        );
        assert!(report.delivered > 40, "delivered {}", report.delivered);
        // Tunnel transfers: receive rows between non-adjacent endpoints.
        let tunnel_receives: Vec<&TraceEvent> = report
            .trace
            .events
            .iter()
            .filter(|e| {
                e.kind == EventKind::Receive && !topo.are_adjacent(e.src, e.observer) && e.src != e.observer
            })
            .collect();
        assert!(!tunnel_receives.is_empty());
        // No overhear row ever names a wormhole endpoint as transmitter of
        // a tunneled packet at tunnel time.
        for t in &tunnel_receives {
            let leaked = report.trace.events.iter().any(|o| {
                o.kind == EventKind::Overhear && o.packet_id == t.packet_id && o.src == t.src
            });
            assert!(!leaked, "tunnel transfer of packet {} leaked", t.packet_id);
        }
    }

    #[test]
    fn rejects_nonpositive_duration() {
        let topo = line_topology(3, 50.0);
        assert!(matches!(
            run_simulation(&topo, &line3_spec(10.0), &MisbehaviorPlan::none(), 0.0, 1),
            Err(SimError::BadDuration(_))
        ));
    }

    #[test]
    fn random_pairs_honor_hop_distance() {
        let topo = crate::netsim::topology::build_topology(150, 1000.0, 1000.0, 120.0, 11).unwrap();
        let spec = ConnectionsSpec {
            endpoints: EndpointPolicy::RandomPairs { count: 5, hops: 5 },
            injection_interval: 2.0,
            packet_size: 68,
            delta: 600.0,
            lambda: 0.0,
        };
        let report = run_simulation(&topo, &spec, &MisbehaviorPlan::none(), 60.0, 4).unwrap();
        assert_eq!(report.connections.len(), 5);
        for c in &report.connections {
            let d = topo.hop_distances(c.source)[c.destination as usize];
            assert_eq!(d, Some(5), "connection {} distance {d:?}", c.connection_id);
        }
    }
}
