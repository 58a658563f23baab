//! Contention-only baseline: the same star network run over slotted
//! CSMA/CA instead of a reservation schedule.
//!
//! ```text
//! k·t_frame                                             (k+1)·t_frame
//! |  every node wakes, backs off, assesses, transmits  |   sleep   |
//! |  <- contention, collisions, retries, acknowledge -> |           |
//! ```
//!
//! Every node wakes at its own local frame boundary, runs a
//! clear-channel backoff dance for the medium, sends its reading, and
//! waits for the hub's acknowledgement. A busy assessment backs off with
//! a growing exponent; too many busy assessments in a row drop the
//! frame. A missing acknowledgement retries the whole dance a bounded
//! number of times. There is no join phase, no schedule, and no clock
//! correction — the protocol never needs to know what time the hub
//! thinks it is, which is its charm and its energy bill.
//!
//! Metering starts at frame zero and uses the same per-term ledger as
//! the reservation protocol, so the two are directly comparable: same
//! radio, same traffic, same sleep settlement at each frame boundary.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::energy::{self, EnergyLedger, RadioParams};
use crate::engine::{
    run_until, stream_rng, streams, ClockModel, Event, EventQueue, Handler, Medium, SimTime,
    TxId, TxOutcome,
};
use crate::protocol::{Address, Packet, PacketKind, Payload};
use crate::report::{CellResult, NodeReport, NodeStats, Protocol};

/// Backoff/assessment tuning for the contention dance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsmaParams {
    /// Initial backoff exponent.
    pub min_be: u8,
    /// Exponent ceiling.
    pub max_be: u8,
    /// Busy assessments tolerated per attempt before the frame is
    /// dropped as a channel-access failure.
    pub max_backoffs: u8,
    /// Retransmissions after a missing acknowledgement.
    pub max_retries: u8,
    /// One backoff unit.
    pub backoff_unit_us: u64,
    /// Clear-channel assessment listen time.
    pub cca_us: u64,
}

impl Default for CsmaParams {
    fn default() -> Self {
        CsmaParams {
            min_be: 3,
            max_be: 5,
            max_backoffs: 4,
            max_retries: 3,
            backoff_unit_us: 320,
            cca_us: 128,
        }
    }
}

/// Full parameter set of one baseline cell.
#[derive(Debug, Clone)]
pub struct CsmaConfig {
    pub n_nodes: usize,
    pub n_cycles: u32,
    pub t_frame_us: u64,
    pub per_percent: f64,
    pub seed: u64,
    pub radio: RadioParams,
    pub data_rate: Vec<u16>,
    pub skew_ppm: Vec<i32>,
    pub ack_timeout_us: u64,
    pub csma: CsmaParams,
    /// Frame kinds exempt from random channel loss (never from
    /// collisions).
    pub per_exempt_kinds: Vec<PacketKind>,
    pub trace: bool,
}

impl CsmaConfig {
    /// A homogeneous default cell: `n` identical drift-free nodes on a
    /// lossless channel.
    pub fn uniform(n_nodes: usize, n_cycles: u32) -> Self {
        CsmaConfig {
            n_nodes,
            n_cycles,
            t_frame_us: 1_000_000,
            per_percent: 0.0,
            seed: 1,
            radio: RadioParams::default(),
            data_rate: vec![31; n_nodes],
            skew_ppm: vec![0; n_nodes],
            ack_timeout_us: 864,
            csma: CsmaParams::default(),
            per_exempt_kinds: Vec::new(),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    Data { node: usize },
    Ack { node: usize },
}

#[derive(Debug, Clone)]
enum Ev {
    /// Frame boundary on the hub's clock: settle sleep, count cycles.
    FrameStart { k: u32 },
    /// A node's local frame boundary: switch on and contend.
    NodeWake,
    /// A clear-channel assessment ended.
    CcaEnd,
    /// A transmission left the air.
    TxEnd {
        tx: TxId,
        packet: Packet,
        purpose: Purpose,
    },
    /// The hub's acknowledgement hits the air after the turnaround.
    AckTx { node: usize },
    /// The sender stops waiting for its acknowledgement.
    WaitTimeout { token: u64 },
}

struct Node {
    addr: Address,
    clock: ClockModel,
    data_rate: u16,
    /// The node's own frame counter.
    frame_k: u32,
    /// Invalidates stale acknowledgement deadlines.
    token: u64,
    /// Busy assessments in the current attempt.
    nb: u8,
    be: u8,
    retries: u8,
    /// Backoff idle time to book when the pending assessment ends.
    pending_idle_us: u64,
    awaiting_ack: bool,
    /// Global end of the node's own last data transmission.
    await_since: SimTime,
    /// Last frame counter value the hub credited a delivery for
    /// (duplicate suppression, as a sequence number would).
    credited_frame: i64,
    ledger: EnergyLedger,
    active_us: u64,
    stats: NodeStats,
}

impl Node {
    fn new(index: usize, cfg: &CsmaConfig) -> Self {
        Node {
            addr: Address(index as u16 + 1),
            clock: ClockModel {
                skew_ppm: cfg.skew_ppm[index],
                phase_offset_us: 0,
            },
            data_rate: cfg.data_rate[index],
            frame_k: 0,
            token: 0,
            nb: 0,
            be: cfg.csma.min_be,
            retries: 0,
            pending_idle_us: 0,
            awaiting_ack: false,
            await_since: 0,
            credited_frame: -1,
            ledger: EnergyLedger::default(),
            active_us: 0,
            stats: NodeStats::default(),
        }
    }
}

struct World {
    cfg: CsmaConfig,
    radio: RadioParams,
    medium: Medium,
    rng_backoff: ChaCha8Rng,
    nodes: Vec<Node>,
    done: bool,
    collisions: u64,
    trace: Option<Vec<String>>,
}

impl World {
    fn new(cfg: &CsmaConfig) -> Self {
        assert_eq!(cfg.data_rate.len(), cfg.n_nodes);
        assert_eq!(cfg.skew_ppm.len(), cfg.n_nodes);
        World {
            radio: cfg.radio,
            medium: Medium::new(
                cfg.per_percent / 100.0,
                stream_rng(cfg.seed, streams::CHANNEL),
            ),
            rng_backoff: stream_rng(cfg.seed, streams::BACKOFF),
            nodes: (0..cfg.n_nodes).map(|i| Node::new(i, cfg)).collect(),
            done: false,
            collisions: 0,
            trace: if cfg.trace { Some(Vec::new()) } else { None },
            cfg: cfg.clone(),
        }
    }

    fn trace(&mut self, at: SimTime, entity: &str, event: &str, detail: String) {
        if let Some(lines) = &mut self.trace {
            lines.push(format!("{at}, {entity}, {event}, {detail}"));
        }
    }

    fn meter_switch(&mut self, i: usize) {
        self.nodes[i].ledger.e_switch += energy::e_switch(&self.radio);
        self.nodes[i].active_us += self.radio.t_switch_us;
    }

    fn meter_idle(&mut self, i: usize, us: u64) {
        if us > 0 {
            self.nodes[i].ledger.e_tout += energy::e_timeout(us, &self.radio);
            self.nodes[i].active_us += us;
        }
    }

    fn meter_listen(&mut self, i: usize, us: u64) {
        if us > 0 {
            self.nodes[i].ledger.e_rec += energy::e_listen(us, &self.radio);
            self.nodes[i].active_us += us;
        }
    }

    fn meter_tx(&mut self, i: usize, octets: u64) {
        self.nodes[i].ledger.e_trans += energy::e_trans(octets, &self.radio);
        self.nodes[i].active_us += self.radio.airtime_us(octets);
    }

    fn meter_rx(&mut self, i: usize, octets: u64) {
        self.nodes[i].ledger.e_rec += energy::e_rec(octets, &self.radio);
        self.nodes[i].active_us += self.radio.airtime_us(octets);
    }

    /// Draw a backoff delay and schedule the assessment after it.
    fn backoff_round(&mut self, q: &mut EventQueue<Ev>, i: usize) {
        let slots = 1u64 << self.nodes[i].be;
        let delay = self.rng_backoff.gen_range(0..slots) * self.cfg.csma.backoff_unit_us;
        self.nodes[i].pending_idle_us = delay;
        q.schedule(
            q.now() + delay + self.cfg.csma.cca_us,
            i as u32 + 1,
            Ev::CcaEnd,
        )
        .expect("assessment end is ahead");
    }

    /// Frame over for this node (acked, dropped, or exhausted): switch
    /// off and wake at the next local boundary.
    fn cycle_end(&mut self, q: &mut EventQueue<Ev>, i: usize) {
        self.meter_switch(i);
        let node = &mut self.nodes[i];
        node.awaiting_ack = false;
        node.frame_k += 1;
        let at = node
            .clock
            .local_to_global(node.frame_k as u64 * self.cfg.t_frame_us);
        q.schedule(at.max(q.now()), i as u32 + 1, Ev::NodeWake)
            .expect("next boundary is not in the past");
    }
}

impl Handler for World {
    type Kind = Ev;

    fn handle(&mut self, ev: Event<Ev>, q: &mut EventQueue<Ev>) {
        if self.done {
            return;
        }
        let now = ev.at;
        match ev.kind {
            Ev::FrameStart { k } => {
                let t_frame = self.cfg.t_frame_us;
                if k > 0 {
                    for node in &mut self.nodes {
                        let sleep_us = t_frame - node.active_us.min(t_frame);
                        node.ledger.e_sleep += energy::e_sleep(sleep_us, &self.radio);
                        node.ledger.cycles_counted += 1;
                        node.active_us = 0;
                    }
                }
                if k == self.cfg.n_cycles {
                    self.done = true;
                    return;
                }
                q.schedule(now + t_frame, 0, Ev::FrameStart { k: k + 1 })
                    .expect("next frame is ahead");
            }
            Ev::NodeWake => {
                let i = (ev.target - 1) as usize;
                self.meter_switch(i);
                let node = &mut self.nodes[i];
                node.retries = 0;
                node.nb = 0;
                node.be = self.cfg.csma.min_be;
                self.backoff_round(q, i);
            }
            Ev::CcaEnd => {
                let i = (ev.target - 1) as usize;
                let cca = self.cfg.csma.cca_us;
                self.meter_idle(i, self.nodes[i].pending_idle_us);
                self.nodes[i].pending_idle_us = 0;
                self.meter_listen(i, cca);
                if self.medium.busy_window(now - cca, now) {
                    let node = &mut self.nodes[i];
                    node.nb += 1;
                    node.be = (node.be + 1).min(self.cfg.csma.max_be);
                    if node.nb > self.cfg.csma.max_backoffs {
                        self.trace(now, &format!("node{i}"), "access_failure", String::new());
                        self.cycle_end(q, i);
                    } else {
                        self.backoff_round(q, i);
                    }
                    return;
                }
                self.nodes[i].stats.sent += 1;
                let packet = Packet {
                    src: self.nodes[i].addr,
                    payload: Payload::Data {
                        body: vec![0; self.nodes[i].data_rate as usize],
                    },
                };
                self.meter_tx(i, packet.encoded_len() as u64);
                let air = self.radio.airtime_us(packet.encoded_len() as u64);
                let exempt = self.cfg.per_exempt_kinds.contains(&packet.kind());
                let tx = self.medium.begin_tx(now, air, exempt);
                q.schedule(
                    now + air,
                    i as u32 + 1,
                    Ev::TxEnd {
                        tx,
                        packet,
                        purpose: Purpose::Data { node: i },
                    },
                )
                .expect("tx end is ahead");
            }
            Ev::TxEnd { tx, packet, purpose } => {
                let outcome = self.medium.end_tx(tx);
                let air = self.radio.airtime_us(packet.encoded_len() as u64);
                match purpose {
                    Purpose::Data { node } => {
                        if outcome == TxOutcome::Collided {
                            self.nodes[node].stats.collided += 1;
                            self.collisions += 1;
                        }
                        let n = &mut self.nodes[node];
                        n.awaiting_ack = true;
                        n.await_since = now;
                        let token = n.token;
                        q.schedule(
                            now + self.cfg.ack_timeout_us,
                            node as u32 + 1,
                            Ev::WaitTimeout { token },
                        )
                        .expect("timeout is ahead");
                        if outcome == TxOutcome::Delivered {
                            // The hub credits one delivery per node
                            // frame, as a duplicate bit would.
                            let k = self.nodes[node].frame_k as i64;
                            if self.nodes[node].credited_frame != k {
                                self.nodes[node].credited_frame = k;
                                self.nodes[node].stats.delivered += 1;
                            }
                            q.schedule(
                                now + self.radio.t_switch_us,
                                0,
                                Ev::AckTx { node },
                            )
                            .expect("ack turnaround is ahead");
                        }
                    }
                    Purpose::Ack { node } => {
                        if outcome == TxOutcome::Delivered && self.nodes[node].awaiting_ack {
                            let gap = now - air - self.nodes[node].await_since;
                            self.meter_idle(node, gap);
                            self.meter_rx(node, packet.encoded_len() as u64);
                            self.nodes[node].token += 1;
                            self.cycle_end(q, node);
                        }
                    }
                }
            }
            Ev::AckTx { node } => {
                let packet = Packet {
                    src: self.nodes[node].addr,
                    payload: Payload::Ack { odt: false },
                };
                let air = self.radio.airtime_us(packet.encoded_len() as u64);
                let exempt = self.cfg.per_exempt_kinds.contains(&packet.kind());
                let tx = self.medium.begin_tx(now, air, exempt);
                q.schedule(
                    now + air,
                    0,
                    Ev::TxEnd {
                        tx,
                        packet,
                        purpose: Purpose::Ack { node },
                    },
                )
                .expect("ack end is ahead");
            }
            Ev::WaitTimeout { token } => {
                let i = (ev.target - 1) as usize;
                if self.nodes[i].token != token {
                    return;
                }
                self.nodes[i].token += 1;
                self.meter_idle(i, self.cfg.ack_timeout_us);
                self.nodes[i].awaiting_ack = false;
                if self.nodes[i].retries < self.cfg.csma.max_retries {
                    let node = &mut self.nodes[i];
                    node.retries += 1;
                    node.stats.retried += 1;
                    node.nb = 0;
                    node.be = self.cfg.csma.min_be;
                    self.backoff_round(q, i);
                } else {
                    self.trace(now, &format!("node{i}"), "retries_exhausted", String::new());
                    self.cycle_end(q, i);
                }
            }
        }
    }
}

/// Everything one finished baseline run hands back.
pub struct RunOutput {
    pub cell: CellResult,
    /// Event trace (when requested), one `time, entity, event, detail`
    /// line per record.
    pub trace: Vec<String>,
}

/// Run one baseline cell to completion.
pub fn run(cfg: &CsmaConfig) -> RunOutput {
    let mut world = World::new(cfg);
    let mut q: EventQueue<Ev> = EventQueue::new();
    q.schedule(0, 0, Ev::FrameStart { k: 0 })
        .expect("first frame at time zero");
    for i in 0..cfg.n_nodes {
        let at = world.nodes[i].clock.local_to_global(0);
        q.schedule(at, i as u32 + 1, Ev::NodeWake)
            .expect("first wake at the local epoch");
    }
    let t_frame = cfg.t_frame_us;
    let mut end = t_frame;
    let horizon = (cfg.n_cycles as u64 + 2) * t_frame;
    while !world.done && end <= horizon {
        run_until(&mut world, &mut q, end);
        if q.is_empty() {
            break;
        }
        end += t_frame;
    }
    let cell = CellResult {
        protocol: Protocol::Csma,
        per_percent: cfg.per_percent,
        seed: cfg.seed,
        nodes: world
            .nodes
            .iter()
            .map(|n| NodeReport {
                ledger: n.ledger,
                stats: n.stats,
            })
            .collect(),
        cfp_collisions: 0,
        cap_collisions: world.collisions,
        aborted: None,
    };
    RunOutput {
        cell,
        trace: world.trace.unwrap_or_default(),
    }
}
