//! The adaptive TDMA world: one hub plus N sensor nodes, end to end.
//!
//! One superframe (all offsets in µs from the frame boundary):
//!
//! ```text
//! 0                                  cfp          cfp+cap      t_frame
//! | gb |slot 1| gb |slot 2| ... | gb |advert|  contention  |  idle  |
//! |<------- contention-free ------->|<---- contention ---->|<-tail->|
//! ```
//!
//! Node lifecycle: scan the RF channels for a hub advertisement, anchor
//! the local frame phase on it, run the contended join handshake
//! (acknowledge the advert, request a slot, receive the grant), then
//! settle into the per-frame duty cycle — wake just before the slot,
//! transmit the reading, collect the hub's acknowledgement, sleep. The
//! hub measures every slot arrival against the schedule and, when the
//! error exceeds the tolerance `D`, replies with a correcting
//! acknowledgement carrying the full signed error; the node shifts its
//! next wake by it. Contention traffic (join handshake, emergency
//! reports, hub-initiated polls) runs CSMA-style in the contention
//! window: a random initial delay, a clear-channel assessment, and
//! binary-exponential backoff while the channel stays busy.
//!
//! Energy is metered per node over an N-frame measurement window that
//! arms at the first frame boundary after every node holds a slot; each
//! charge is booked at the instant it starts, and the sleep term is
//! settled at every frame boundary as the unspent remainder of the
//! frame.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::energy::{self, EnergyLedger, RadioParams};
use crate::engine::{
    run_until, stream_rng, streams, Event, EventQueue, Handler, Medium, SimTime, TxId, TxOutcome,
};
use crate::engine::ClockModel;
use crate::protocol::{Address, Packet, PacketKind, Payload};
use crate::report::{CellResult, NodeReport, NodeStats, Protocol};
use crate::schedule::{build_schedule, FrameLayout, Schedule, SlotRequest};
use crate::sync::{delta_t, drift_value};

/// Event target id of the hub (nodes are `index + 1`).
const HUB: u32 = 0;

/// Contended-access tuning for the contention window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapParams {
    /// Clear-channel assessment listen time.
    pub cca_us: u64,
    /// One backoff unit.
    pub backoff_unit_us: u64,
    /// The initial access delay is uniform over `[0, cap_len / div)`.
    pub initial_delay_div: u64,
    /// Busy assessments tolerated before deferring to the next frame.
    pub max_cca_failures: u8,
}

impl Default for CapParams {
    fn default() -> Self {
        CapParams {
            cca_us: 128,
            backoff_unit_us: 320,
            initial_delay_div: 4,
            max_cca_failures: 4,
        }
    }
}

/// One hub-initiated poll: in measured frame `frame` (0-based from the
/// start of the measurement window), pull `bytes` octets from `node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnDemandPoll {
    pub frame: u32,
    pub node: usize,
    pub bytes: u16,
}

/// Full parameter set of one simulation cell.
#[derive(Debug, Clone)]
pub struct ArmacConfig {
    pub n_nodes: usize,
    /// Frames in the measurement window.
    pub n_cycles: u32,
    pub layout: FrameLayout,
    /// Guard-band factor in percent.
    pub f_percent: u32,
    /// Packet-error rate in percent; each transmission is independently
    /// lost with this probability.
    pub per_percent: f64,
    pub seed: u64,
    pub radio: RadioParams,
    /// Per-node payload octets per frame.
    pub data_rate: Vec<u16>,
    /// Per-node oscillator skew.
    pub skew_ppm: Vec<i32>,
    /// Per-node explicit slot-duration floor (0 = sized from data rate).
    pub requested_slot_us: Vec<u32>,
    /// Upper bound of the uniform extra delay before each slot
    /// transmission (0 = none).
    pub jitter_us: u64,
    pub cap: CapParams,
    /// How long a transmitter waits for an acknowledgement, from the end
    /// of its own frame.
    pub ack_timeout_us: u64,
    /// Scan dwell on a channel that carries energy but no advert yet.
    pub t_cp_us: u64,
    /// Give up on the cell if the network has not fully joined by this
    /// frame.
    pub max_join_frames: u32,
    /// Per-frame emergency arrival rate (Poisson; at most one per frame
    /// per node).
    pub emergency_rate: f64,
    pub on_demand: Vec<OnDemandPoll>,
    /// Frame kinds exempt from random channel loss (never from
    /// collisions).
    pub per_exempt_kinds: Vec<PacketKind>,
    /// Which of the three RF channels carry foreign traffic.
    pub rf_busy: [bool; 3],
    /// Record a human-readable event trace.
    pub trace: bool,
}

impl ArmacConfig {
    /// A homogeneous default cell: `n` identical drift-free nodes on a
    /// lossless channel.
    pub fn uniform(n_nodes: usize, n_cycles: u32) -> Self {
        ArmacConfig {
            n_nodes,
            n_cycles,
            layout: FrameLayout::new(1_000_000, 50_000, 50_000).expect("default layout"),
            f_percent: 10,
            per_percent: 0.0,
            seed: 1,
            radio: RadioParams::default(),
            data_rate: vec![31; n_nodes],
            skew_ppm: vec![0; n_nodes],
            requested_slot_us: vec![0; n_nodes],
            jitter_us: 0,
            cap: CapParams::default(),
            ack_timeout_us: 864,
            t_cp_us: 1_000_000,
            max_join_frames: 200,
            emergency_rate: 0.0,
            on_demand: Vec::new(),
            per_exempt_kinds: Vec::new(),
            rf_busy: [false; 3],
            trace: false,
        }
    }
}

/// What a finished transmission was for; routes its outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    /// Hub channel advertisement (broadcast).
    Advert,
    /// A joining node acknowledging the advert (best-effort).
    AdvertAck { node: usize },
    /// A joining node's slot request.
    JoinRequest { node: usize },
    /// The hub's slot grant.
    JoinReply { node: usize },
    /// A node's in-slot data frame.
    SlotData { node: usize },
    /// The hub's in-slot acknowledgement (plain or correcting).
    SlotReply { node: usize },
    /// A node's contended emergency report.
    EmergencyData { node: usize },
    /// The hub's pull request to a flagged node.
    OdPoll { node: usize },
    /// The node's reply to a poll.
    OdData { node: usize },
    /// The hub acknowledging contention-window data.
    CapAck { node: usize },
}

impl Purpose {
    /// Does the transmission belong to the contention-free period?
    fn in_cfp(self) -> bool {
        matches!(self, Purpose::SlotData { .. } | Purpose::SlotReply { .. })
    }
}

/// World event vocabulary.
#[derive(Debug, Clone)]
enum Ev {
    /// Superframe boundary `k`: metering, arming, traffic draws.
    FrameStart { k: u32 },
    /// Hub starts its advertisement.
    AdvertTx,
    /// A transmission left the air; resolve and dispatch it.
    TxEnd {
        tx: TxId,
        packet: Packet,
        purpose: Purpose,
    },
    /// A scanning node finishes evaluating / dwelling on a channel.
    ScanStep { token: u64 },
    /// A contended access finishes its clear-channel assessment.
    CcaEnd { actor: Actor },
    /// A joined node switches on ahead of its slot.
    NodeWake,
    /// A joined node starts its in-slot transmission.
    SlotTx,
    /// A node stops waiting for a reply.
    WaitTimeout { token: u64 },
    /// A node wakes for contention-window duty (emergency report,
    /// poll listening, or a join retry).
    CapWake,
    /// The hub's turnaround reply hits the air.
    HubReplyTx { packet: Packet, purpose: Purpose },
    /// A polled node's turnaround data reply hits the air.
    OdDataTx { token: u64 },
    /// A poll-listening window closed without a request.
    OdListenEnd { token: u64 },
}

/// Who is running a contended access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Actor {
    Hub,
    Node(usize),
}

/// An in-progress contended access.
#[derive(Debug, Clone)]
struct CapAttempt {
    packet: Packet,
    purpose: Purpose,
    /// Busy assessments so far this window.
    cca_failures: u8,
    /// Idle time (delay or backoff) to book when the assessment ends.
    pending_idle_us: u64,
    /// Air + turnaround time the whole exchange still needs; access is
    /// deferred when it no longer fits before the window closes.
    tail_us: u64,
}

/// Join/duty progress of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Stepping across RF channels.
    Scan,
    /// Radio on, dwelling for an advert.
    WaitAdvert,
    /// Anchored; working through the contended join handshake.
    JoinRequest,
    /// Slot request sent; listening for the grant until window close.
    AwaitJoinReply,
    Joined,
}

/// What reply, if any, a node is currently waiting for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Awaiting {
    None,
    /// The in-slot acknowledgement of its data frame.
    SlotReply,
    /// The acknowledgement of an emergency report.
    EmergencyAck,
    /// The acknowledgement of a poll reply.
    OdAck,
}

struct Node {
    addr: Address,
    clock: ClockModel,
    data_rate: u16,
    requested_slot_us: u32,
    phase: Phase,
    awaiting: Awaiting,
    /// Invalidates stale timers (wait deadlines, scan dwells).
    token: u64,
    scan_channel: usize,
    tsr_attempts: u8,
    /// Local time of the start of the frame holding the node's next
    /// scheduled action (duty slot once joined, join window before).
    frame_start_local: u64,
    slot_start_us: u64,
    slot_len_us: u64,
    /// This frame's contention window, stashed in global time whenever
    /// contended duty is scheduled.
    cap_window: (SimTime, SimTime),
    cap: Option<CapAttempt>,
    /// Global end of the node's own last transmission while a reply is
    /// pending.
    await_since: SimTime,
    /// Told to listen for a poll in this frame's contention window.
    odt: bool,
    /// Emergency report pending for this frame's contention window.
    emergency: bool,
    od_listening: bool,
    od_listen_start: SimTime,
    /// Global end of the poll-listening window.
    od_listen_end: SimTime,
    ledger: EnergyLedger,
    active_us: u64,
    stats: NodeStats,
}

impl Node {
    fn new(index: usize, cfg: &ArmacConfig) -> Self {
        Node {
            addr: Address(index as u16 + 1),
            clock: ClockModel {
                skew_ppm: cfg.skew_ppm[index],
                // Local clocks start one frame ahead of the shared
                // timeline: the node powered on before the hub's first
                // frame, so even a slow crystal anchors the first frame
                // at a representable (non-negative) local instant.
                phase_offset_us: cfg.layout.t_frame_us as i64,
            },
            data_rate: cfg.data_rate[index],
            requested_slot_us: cfg.requested_slot_us[index],
            phase: Phase::Scan,
            awaiting: Awaiting::None,
            token: 0,
            scan_channel: 0,
            tsr_attempts: 0,
            frame_start_local: 0,
            slot_start_us: 0,
            slot_len_us: 0,
            cap_window: (0, 0),
            cap: None,
            await_since: 0,
            odt: false,
            emergency: false,
            od_listening: false,
            od_listen_start: 0,
            od_listen_end: 0,
            ledger: EnergyLedger::default(),
            active_us: 0,
            stats: NodeStats::default(),
        }
    }
}

/// An active hub-initiated poll.
#[derive(Debug, Clone, Copy)]
struct OdJob {
    node: usize,
    bytes: u16,
    /// Frames this poll has been attempted in.
    frames_tried: u32,
}

struct Hub {
    addr: Address,
    channel: usize,
    requests: Vec<SlotRequest>,
    schedule: Schedule,
    cap: Option<CapAttempt>,
    /// Global bounds of this frame's contention window, after the
    /// advert.
    cap_window: (SimTime, SimTime),
    /// Last frame index delivered per node, for duplicate suppression.
    last_delivered_frame: Vec<i64>,
    od_pending: Vec<OnDemandPoll>,
    od_active: Option<OdJob>,
}

struct World {
    cfg: ArmacConfig,
    layout: FrameLayout,
    radio: RadioParams,
    medium: Medium,
    rng_jitter: ChaCha8Rng,
    rng_traffic: ChaCha8Rng,
    rng_backoff: ChaCha8Rng,
    nodes: Vec<Node>,
    hub: Hub,
    joined: usize,
    armed: bool,
    measure_start: u32,
    measure_end: u32,
    done: bool,
    aborted: Option<String>,
    cfp_collisions: u64,
    cap_collisions: u64,
    trace: Option<Vec<String>>,
}

/// Nearest-integer division, ties away from zero.
fn div_round_nearest(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let half = den / 2;
    if num >= 0 {
        (num + half) / den
    } else {
        -((-num + half) / den)
    }
}

impl World {
    fn new(cfg: &ArmacConfig) -> Self {
        assert_eq!(cfg.data_rate.len(), cfg.n_nodes);
        assert_eq!(cfg.skew_ppm.len(), cfg.n_nodes);
        assert_eq!(cfg.requested_slot_us.len(), cfg.n_nodes);
        let channel = cfg.rf_busy.iter().position(|b| !b).unwrap_or(0);
        let nodes = (0..cfg.n_nodes).map(|i| Node::new(i, cfg)).collect();
        World {
            layout: cfg.layout,
            radio: cfg.radio,
            medium: Medium::new(
                cfg.per_percent / 100.0,
                stream_rng(cfg.seed, streams::CHANNEL),
            ),
            rng_jitter: stream_rng(cfg.seed, streams::JITTER),
            rng_traffic: stream_rng(cfg.seed, streams::TRAFFIC),
            rng_backoff: stream_rng(cfg.seed, streams::BACKOFF),
            nodes,
            hub: Hub {
                addr: Address(0),
                channel,
                requests: Vec::new(),
                schedule: Schedule {
                    slots: Vec::new(),
                    guard_bands: Vec::new(),
                    f_percent: cfg.f_percent,
                    d_us: 0,
                },
                cap: None,
                cap_window: (0, 0),
                last_delivered_frame: vec![-1; cfg.n_nodes],
                od_pending: Vec::new(),
                od_active: None,
            },
            joined: 0,
            armed: false,
            measure_start: 0,
            measure_end: u32::MAX,
            done: false,
            aborted: None,
            cfp_collisions: 0,
            cap_collisions: 0,
            trace: if cfg.trace { Some(Vec::new()) } else { None },
            cfg: cfg.clone(),
        }
    }

    fn trace(&mut self, at: SimTime, entity: &str, event: &str, detail: String) {
        if let Some(lines) = &mut self.trace {
            lines.push(format!("{at}, {entity}, {event}, {detail}"));
        }
    }

    fn node_entity(i: usize) -> String {
        format!("node{i}")
    }

    fn exempt(&self, kind: PacketKind) -> bool {
        self.cfg.per_exempt_kinds.contains(&kind)
    }

    fn airtime(&self, packet: &Packet) -> u64 {
        self.radio.airtime_us(packet.encoded_len() as u64)
    }

    // ---- metering -------------------------------------------------

    fn meter_switch(&mut self, i: usize) {
        if self.armed {
            self.nodes[i].ledger.e_switch += energy::e_switch(&self.radio);
            self.nodes[i].active_us += self.radio.t_switch_us;
        }
    }

    fn meter_idle(&mut self, i: usize, us: u64) {
        if self.armed && us > 0 {
            self.nodes[i].ledger.e_tout += energy::e_timeout(us, &self.radio);
            self.nodes[i].active_us += us;
        }
    }

    fn meter_listen(&mut self, i: usize, us: u64) {
        if self.armed && us > 0 {
            self.nodes[i].ledger.e_rec += energy::e_listen(us, &self.radio);
            self.nodes[i].active_us += us;
        }
    }

    fn meter_tx(&mut self, i: usize, octets: u64) {
        if self.armed {
            self.nodes[i].ledger.e_trans += energy::e_trans(octets, &self.radio);
            self.nodes[i].active_us += self.radio.airtime_us(octets);
        }
    }

    fn meter_rx(&mut self, i: usize, octets: u64) {
        if self.armed {
            self.nodes[i].ledger.e_rec += energy::e_rec(octets, &self.radio);
            self.nodes[i].active_us += self.radio.airtime_us(octets);
        }
    }

    // ---- shared transmission plumbing ------------------------------

    /// Put a frame on the air and schedule its landing.
    fn transmit(
        &mut self,
        q: &mut EventQueue<Ev>,
        target: u32,
        packet: Packet,
        purpose: Purpose,
    ) {
        let air = self.airtime(&packet);
        let exempt = self.exempt(packet.kind());
        let tx = self.medium.begin_tx(q.now(), air, exempt);
        q.schedule(q.now() + air, target, Ev::TxEnd { tx, packet, purpose })
            .expect("tx end is in the future");
    }

    /// Begin a contended access: initial delay, then assessment.
    fn cap_begin(
        &mut self,
        q: &mut EventQueue<Ev>,
        actor: Actor,
        packet: Packet,
        purpose: Purpose,
    ) {
        let window = match actor {
            Actor::Hub => self.hub.cap_window,
            Actor::Node(i) => self.nodes[i].cap_window,
        };
        let air = self.airtime(&packet);
        let tail = air + self.exchange_tail_us(purpose);
        let start = q.now().max(window.0);
        let span = self.layout.cap_len_us / self.cfg.cap.initial_delay_div;
        let delay = if span > 0 {
            self.rng_backoff.gen_range(0..span)
        } else {
            0
        };
        let cca_at = start + delay + self.cfg.cap.cca_us;
        if cca_at + tail > window.1 {
            self.cap_defer(q, actor, purpose);
            return;
        }
        let attempt = CapAttempt {
            packet,
            purpose,
            cca_failures: 0,
            pending_idle_us: (start - q.now()) + delay,
            tail_us: tail,
        };
        let target = match actor {
            Actor::Hub => {
                self.hub.cap = Some(attempt);
                HUB
            }
            Actor::Node(i) => {
                self.nodes[i].cap = Some(attempt);
                i as u32 + 1
            }
        };
        q.schedule(cca_at, target, Ev::CcaEnd { actor })
            .expect("assessment is in the future");
    }

    /// Time the rest of an exchange needs on the air after the initial
    /// frame: turnarounds plus every reply, worst case.
    fn exchange_tail_us(&self, purpose: Purpose) -> u64 {
        let turn = self.radio.t_switch_us;
        let ack = self.radio.airtime_us(4);
        match purpose {
            // Best-effort, nothing comes back.
            Purpose::AdvertAck { .. } => 0,
            // Slot grant: 19 octets.
            Purpose::JoinRequest { .. } => turn + self.radio.airtime_us(19),
            Purpose::EmergencyData { .. } => turn + ack,
            // Poll, turnaround, data reply, turnaround, ack.
            Purpose::OdPoll { .. } => {
                let bytes = self
                    .hub
                    .od_active
                    .map(|j| j.bytes as u64)
                    .unwrap_or(0);
                turn + self.radio.airtime_us(4 + bytes) + turn + ack
            }
            _ => turn + ack,
        }
    }

    /// A contended access ran out of road this frame.
    fn cap_defer(&mut self, q: &mut EventQueue<Ev>, actor: Actor, purpose: Purpose) {
        let now = q.now();
        match (actor, purpose) {
            (Actor::Hub, _) => {
                self.hub.cap = None;
                self.trace(now, "hub", "poll_deferred", "contention window full".into());
            }
            (Actor::Node(i), Purpose::AdvertAck { .. }) => {
                // The advert ack is courtesy traffic; skip straight to
                // the slot request next frame.
                self.nodes[i].cap = None;
                self.join_retry_next_frame(q, i);
            }
            (Actor::Node(i), Purpose::JoinRequest { .. }) => {
                self.nodes[i].cap = None;
                self.join_retry_next_frame(q, i);
            }
            (Actor::Node(i), Purpose::EmergencyData { .. }) => {
                self.nodes[i].cap = None;
                self.nodes[i].emergency = false;
                self.trace(now, &Self::node_entity(i), "emergency_dropped", "no channel access".into());
                self.node_radio_off(i);
            }
            (Actor::Node(i), _) => {
                self.nodes[i].cap = None;
                self.node_radio_off(i);
            }
        }
    }

    /// Book the off-switch at the end of a metered awake stretch.
    fn node_radio_off(&mut self, i: usize) {
        self.meter_switch(i);
    }

    /// Re-run the join step in the next frame's contention window.
    fn join_retry_next_frame(&mut self, q: &mut EventQueue<Ev>, i: usize) {
        let t_frame = self.layout.t_frame_us;
        let node = &mut self.nodes[i];
        node.frame_start_local += t_frame;
        node.phase = Phase::JoinRequest;
        let cap_start = node.frame_start_local + self.layout.cap_start_us();
        let cap_end = node.frame_start_local + self.layout.cap_end_us();
        node.cap_window = (
            node.clock.local_to_global(cap_start),
            node.clock.local_to_global(cap_end),
        );
        let at = node.cap_window.0;
        q.schedule(at.max(q.now()), i as u32 + 1, Ev::CapWake)
            .expect("next contention window is ahead");
    }

    /// Schedule the next duty wake from the node's own clock.
    fn schedule_duty_wake(&mut self, q: &mut EventQueue<Ev>, i: usize) {
        let node = &self.nodes[i];
        let wake_local = node.frame_start_local + node.slot_start_us - self.radio.t_switch_us;
        let at = node.clock.local_to_global(wake_local);
        q.schedule(at, i as u32 + 1, Ev::NodeWake)
            .expect("duty wake is ahead of the completed cycle");
    }

    /// Finish a duty cycle: book the off-switch, advance one frame
    /// (plus any correction), and schedule the next wake.
    fn finish_cycle(&mut self, q: &mut EventQueue<Ev>, i: usize, dv_us: i64) {
        self.node_radio_off(i);
        let t_frame = self.layout.t_frame_us as i64;
        let node = &mut self.nodes[i];
        node.awaiting = Awaiting::None;
        node.frame_start_local = (node.frame_start_local as i64 + t_frame + dv_us) as u64;
        self.schedule_duty_wake(q, i);
    }

    /// The hub's reaction to a delivered in-slot data frame.
    fn hub_on_slot_data(&mut self, q: &mut EventQueue<Ev>, i: usize, tx_start: SimTime) {
        let addr = self.nodes[i].addr;
        let slot = match self.hub.schedule.slot_for(addr) {
            Some(s) => *s,
            None => return, // stale frame from a node the hub dropped
        };
        let t_frame = self.layout.t_frame_us;
        let k_est = div_round_nearest(
            tx_start as i128 - slot.start_us as i128,
            t_frame as i128,
        )
        .max(0) as u64;
        let expected = k_est * t_frame + slot.start_us;
        let decision = drift_value(delta_t(expected, tx_start), self.hub.schedule.d_us);
        let odt = self
            .hub
            .od_active
            .map(|j| j.node == i)
            .unwrap_or(false);
        if self.armed && self.hub.last_delivered_frame[i] != k_est as i64 {
            self.hub.last_delivered_frame[i] = k_est as i64;
            self.nodes[i].stats.delivered += 1;
        }
        let payload = if decision.send_sync_ack {
            if self.armed {
                self.nodes[i].stats.sync_acks += 1;
            }
            self.trace(
                q.now(),
                "hub",
                "sync_ack",
                format!("node{} dv={}", i, decision.dv_us),
            );
            Payload::SyncAck {
                dv_us: decision.dv_us as i32,
                odt,
            }
        } else {
            Payload::Ack { odt }
        };
        let packet = Packet {
            src: addr,
            payload,
        };
        let at = q.now() + self.radio.t_switch_us;
        q.schedule(
            at,
            HUB,
            Ev::HubReplyTx {
                packet,
                purpose: Purpose::SlotReply { node: i },
            },
        )
        .expect("turnaround reply is ahead");
    }

    /// A node received the hub's in-slot reply.
    fn node_on_slot_reply(&mut self, q: &mut EventQueue<Ev>, i: usize, packet: &Packet, air: u64) {
        let now = q.now();
        let gap = now - air - self.nodes[i].await_since;
        self.meter_idle(i, gap);
        self.meter_rx(i, packet.encoded_len() as u64);
        self.nodes[i].token += 1;
        let (dv, odt) = match packet.payload {
            Payload::SyncAck { dv_us, odt } => (dv_us as i64, odt),
            Payload::Ack { odt } => (0, odt),
            _ => (0, false),
        };
        if odt {
            // Stash this frame's listening window before the frame
            // anchor moves on, then wake for it.
            let node = &mut self.nodes[i];
            let cap_start_l = node.frame_start_local + self.layout.cap_start_us();
            let cap_end_l = node.frame_start_local + self.layout.cap_end_us();
            let wake = node
                .clock
                .local_to_global(cap_start_l - self.radio.t_switch_us);
            node.od_listen_end = node.clock.local_to_global(cap_end_l);
            node.odt = true;
            q.schedule(wake.max(now), i as u32 + 1, Ev::CapWake)
                .expect("listen window is ahead of the slot");
        }
        self.finish_cycle(q, i, dv);
    }

    /// Arm/advance per-frame bookkeeping at a superframe boundary.
    fn on_frame_start(&mut self, q: &mut EventQueue<Ev>, k: u32) {
        let t_frame = self.layout.t_frame_us;
        // Settle the sleep term of the frame that just ended.
        if self.armed && k > self.measure_start {
            for node in &mut self.nodes {
                let sleep_us = t_frame - node.active_us.min(t_frame);
                node.ledger.e_sleep += energy::e_sleep(sleep_us, &self.radio);
                node.ledger.cycles_counted += 1;
                node.active_us = 0;
            }
        }
        if self.armed && k == self.measure_end {
            self.armed = false;
            self.done = true;
            self.trace(q.now(), "world", "disarm", format!("frame {k}"));
            return;
        }
        if !self.armed && !self.done {
            if self.joined == self.cfg.n_nodes && self.measure_end == u32::MAX {
                self.armed = true;
                self.measure_start = k;
                self.measure_end = k + self.cfg.n_cycles;
                for node in &mut self.nodes {
                    node.active_us = 0;
                }
                self.trace(q.now(), "world", "arm", format!("frame {k}"));
            } else if self.joined < self.cfg.n_nodes && k >= self.cfg.max_join_frames {
                self.aborted = Some(format!(
                    "join incomplete after {} frames ({} of {} nodes hold slots)",
                    k, self.joined, self.cfg.n_nodes
                ));
                self.trace(q.now(), "world", "abort", self.aborted.clone().unwrap());
                return;
            }
        }
        let frame_base = k as u64 * t_frame;
        // The advert leads the contention window.
        q.schedule(frame_base + self.layout.cap_start_us(), HUB, Ev::AdvertTx)
            .expect("advert is ahead");
        let advert_air = self.radio.airtime_us(6);
        self.hub.cap_window = (
            frame_base + self.layout.cap_start_us() + advert_air,
            frame_base + self.layout.cap_end_us(),
        );
        if self.armed {
            self.frame_traffic_draws(q, k);
        }
        q.schedule(frame_base + t_frame, HUB, Ev::FrameStart { k: k + 1 })
            .expect("next frame is ahead");
    }

    /// Measured-window per-frame traffic: emergency draws and poll
    /// activation.
    fn frame_traffic_draws(&mut self, q: &mut EventQueue<Ev>, k: u32) {
        let rel = k - self.measure_start;
        if self.cfg.emergency_rate > 0.0 {
            let p = 1.0 - (-self.cfg.emergency_rate).exp();
            for i in 0..self.nodes.len() {
                if self.rng_traffic.gen_bool(p) {
                    let node = &mut self.nodes[i];
                    node.emergency = true;
                    let cap_start_l = node.frame_start_local + self.layout.cap_start_us();
                    let cap_end_l = node.frame_start_local + self.layout.cap_end_us();
                    node.cap_window = (
                        node.clock.local_to_global(cap_start_l),
                        node.clock.local_to_global(cap_end_l),
                    );
                    let wake = node.cap_window.0 - self.radio.t_switch_us;
                    q.schedule(wake.max(q.now()), i as u32 + 1, Ev::CapWake)
                        .expect("contention window is ahead");
                    self.trace(q.now(), &Self::node_entity(i), "emergency", format!("frame {k}"));
                }
            }
        }
        // Move due polls into the queue; run one at a time.
        let due: Vec<OnDemandPoll> = self
            .cfg
            .on_demand
            .iter()
            .filter(|p| p.frame == rel)
            .copied()
            .collect();
        self.hub.od_pending.extend(due);
        // Retire a poll that has exhausted its frame budget, promote the
        // next one, and count this frame against whatever is active.
        if let Some(job) = self.hub.od_active {
            if job.frames_tried >= 3 {
                self.nodes[job.node].stats.od_abandoned += 1;
                self.trace(q.now(), "hub", "od_abandoned", format!("node{}", job.node));
                self.hub.od_active = None;
            }
        }
        if self.hub.od_active.is_none() && !self.hub.od_pending.is_empty() {
            let poll = self.hub.od_pending.remove(0);
            self.hub.od_active = Some(OdJob {
                node: poll.node,
                bytes: poll.bytes,
                frames_tried: 0,
            });
        }
        if let Some(job) = &mut self.hub.od_active {
            job.frames_tried += 1;
        }
    }

    /// Advance a scanning node one step.
    fn on_scan_step(&mut self, q: &mut EventQueue<Ev>, i: usize, token: u64) {
        if self.nodes[i].token != token {
            return;
        }
        let now = q.now();
        match self.nodes[i].phase {
            Phase::Scan => {
                let ch = self.nodes[i].scan_channel;
                let occupied = ch == self.hub.channel || self.cfg.rf_busy[ch];
                if occupied {
                    // Energy on the channel: dwell for an advert.
                    self.nodes[i].phase = Phase::WaitAdvert;
                    let deadline = now + self.cfg.t_cp_us;
                    let token = self.nodes[i].token;
                    q.schedule(deadline, i as u32 + 1, Ev::ScanStep { token })
                        .expect("dwell deadline is ahead");
                } else {
                    // Silent channel: one assessment and move on.
                    self.nodes[i].scan_channel = (ch + 1) % 3;
                    let token = self.nodes[i].token;
                    q.schedule(now + self.cfg.cap.cca_us, i as u32 + 1, Ev::ScanStep { token })
                        .expect("assessment end is ahead");
                }
            }
            Phase::WaitAdvert => {
                // Dwell ran out without an advert; next channel.
                let node = &mut self.nodes[i];
                node.phase = Phase::Scan;
                node.scan_channel = (node.scan_channel + 1) % 3;
                let token = node.token;
                q.schedule(now, i as u32 + 1, Ev::ScanStep { token })
                    .expect("same-tick step");
            }
            _ => {}
        }
    }

    /// A delivered advert reaches every dwelling node.
    fn on_advert_delivered(&mut self, q: &mut EventQueue<Ev>, air: u64) {
        let now = q.now();
        let hub_channel = self.hub.channel;
        let listeners: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.phase == Phase::WaitAdvert && n.scan_channel == hub_channel)
            .map(|(i, _)| i)
            .collect();
        for i in listeners {
            let node = &mut self.nodes[i];
            // A slow clock can place the first frame's start before the
            // node's local epoch; clamping leaves an alignment error the
            // first correction absorbs.
            let start_local = node.clock.global_to_local(now).saturating_sub(air);
            node.frame_start_local = start_local.saturating_sub(self.layout.cap_start_us());
            node.token += 1; // cancel the dwell deadline
            node.phase = Phase::JoinRequest;
            let cap_start = node.frame_start_local + self.layout.cap_start_us();
            let cap_end = node.frame_start_local + self.layout.cap_end_us();
            node.cap_window = (
                node.clock.local_to_global(cap_start),
                node.clock.local_to_global(cap_end),
            );
            let addr = node.addr;
            self.trace(now, &Self::node_entity(i), "anchor", format!("frame starts {start_local}"));
            self.cap_begin(
                q,
                Actor::Node(i),
                Packet {
                    src: addr,
                    payload: Payload::Ack { odt: false },
                },
                Purpose::AdvertAck { node: i },
            );
        }
    }

    /// Hub handling of a delivered slot request.
    fn hub_on_join_request(&mut self, q: &mut EventQueue<Ev>, i: usize, packet: &Packet) {
        let addr = self.nodes[i].addr;
        if self.hub.schedule.slot_for(addr).is_none() {
            let (data_rate, requested_slot_us) = match packet.payload {
                Payload::TimeSlotRequest {
                    data_rate,
                    requested_slot_us,
                } => (data_rate, requested_slot_us),
                _ => return,
            };
            self.hub.requests.push(SlotRequest {
                node: addr,
                data_rate,
                requested_slot_us,
            });
            match build_schedule(
                &self.hub.requests,
                &self.layout,
                self.cfg.f_percent,
                &self.radio,
            ) {
                Ok(schedule) => self.hub.schedule = schedule,
                Err(e) => {
                    // No room: drop the request and stay silent.
                    self.hub.requests.pop();
                    self.trace(q.now(), "hub", "join_rejected", format!("node{i}: {e}"));
                    return;
                }
            }
        }
        let slot = *self
            .hub
            .schedule
            .slot_for(addr)
            .expect("slot was just placed");
        let packet = Packet {
            src: addr,
            payload: Payload::TimeSlotRequestReply {
                slot_start_us: slot.start_us as u32,
                slot_len_us: slot.len_us as u32,
                cap_start_us: self.layout.cap_start_us() as u32,
                cap_len_us: self.layout.cap_len_us as u32,
            },
        };
        let at = q.now() + self.radio.t_switch_us;
        q.schedule(
            at,
            HUB,
            Ev::HubReplyTx {
                packet,
                purpose: Purpose::JoinReply { node: i },
            },
        )
        .expect("grant turnaround is ahead");
    }

    /// A node received its slot grant.
    fn node_on_join_reply(&mut self, q: &mut EventQueue<Ev>, i: usize, packet: &Packet) {
        let now = q.now();
        let (slot_start, slot_len) = match packet.payload {
            Payload::TimeSlotRequestReply {
                slot_start_us,
                slot_len_us,
                ..
            } => (slot_start_us as u64, slot_len_us as u64),
            _ => return,
        };
        let node = &mut self.nodes[i];
        node.token += 1; // cancel the window-close deadline
        node.phase = Phase::Joined;
        node.awaiting = Awaiting::None;
        node.slot_start_us = slot_start;
        node.slot_len_us = slot_len;
        node.stats.join_latency_frames = (now / self.layout.t_frame_us) as u32 + 1;
        // First duty cycle runs in the next frame.
        node.frame_start_local += self.layout.t_frame_us;
        self.joined += 1;
        self.trace(
            now,
            &Self::node_entity(i),
            "joined",
            format!("slot {slot_start}+{slot_len}"),
        );
        self.schedule_duty_wake(q, i);
    }

    /// Resolve a landed transmission and dispatch both sides.
    fn on_tx_end(&mut self, q: &mut EventQueue<Ev>, packet: Packet, tx: TxId, purpose: Purpose) {
        let outcome = self.medium.end_tx(tx);
        let now = q.now();
        let air = self.airtime(&packet);
        if outcome == TxOutcome::Collided && self.armed {
            if purpose.in_cfp() {
                self.cfp_collisions += 1;
            } else {
                self.cap_collisions += 1;
            }
        }
        match purpose {
            Purpose::Advert => {
                if outcome == TxOutcome::Delivered {
                    self.on_advert_delivered(q, air);
                }
            }
            Purpose::AdvertAck { node } => {
                // Best-effort; move on to the slot request regardless.
                self.cap_begin(
                    q,
                    Actor::Node(node),
                    Packet {
                        src: self.nodes[node].addr,
                        payload: Payload::TimeSlotRequest {
                            data_rate: self.nodes[node].data_rate,
                            requested_slot_us: self.nodes[node].requested_slot_us,
                        },
                    },
                    Purpose::JoinRequest { node },
                );
            }
            Purpose::JoinRequest { node } => {
                // Sender: count the attempt and listen for the grant
                // until the window closes.
                let deadline = self.nodes[node].cap_window.1;
                let n = &mut self.nodes[node];
                n.tsr_attempts += 1;
                n.phase = Phase::AwaitJoinReply;
                let token = n.token;
                q.schedule(deadline.max(now), node as u32 + 1, Ev::WaitTimeout { token })
                    .expect("window close is ahead");
                if outcome == TxOutcome::Delivered {
                    self.hub_on_join_request(q, node, &packet);
                }
            }
            Purpose::JoinReply { node } => {
                if outcome == TxOutcome::Delivered
                    && self.nodes[node].phase == Phase::AwaitJoinReply
                {
                    self.node_on_join_reply(q, node, &packet);
                }
            }
            Purpose::SlotData { node } => {
                if self.armed {
                    self.nodes[node].stats.sent += 1;
                    if outcome == TxOutcome::Collided {
                        self.nodes[node].stats.collided += 1;
                    }
                }
                // Sender listens for the reply either way.
                let n = &mut self.nodes[node];
                n.awaiting = Awaiting::SlotReply;
                n.await_since = now;
                let token = n.token;
                q.schedule(
                    now + self.cfg.ack_timeout_us,
                    node as u32 + 1,
                    Ev::WaitTimeout { token },
                )
                .expect("timeout is ahead");
                if outcome == TxOutcome::Delivered {
                    self.hub_on_slot_data(q, node, now - air);
                }
            }
            Purpose::SlotReply { node } => {
                if outcome == TxOutcome::Delivered
                    && self.nodes[node].awaiting == Awaiting::SlotReply
                {
                    self.node_on_slot_reply(q, node, &packet, air);
                }
                // The reply carried the poll flag: the hub follows up
                // with the actual pull request in the contention window.
                let flagged = matches!(
                    packet.payload,
                    Payload::Ack { odt: true } | Payload::SyncAck { odt: true, .. }
                );
                if flagged {
                    if let Some(job) = self.hub.od_active {
                        if job.node == node && self.hub.cap.is_none() {
                            self.cap_begin(
                                q,
                                Actor::Hub,
                                Packet {
                                    src: self.nodes[node].addr,
                                    payload: Payload::DataRequest {
                                        requested_bytes: job.bytes,
                                    },
                                },
                                Purpose::OdPoll { node },
                            );
                        }
                    }
                }
            }
            Purpose::EmergencyData { node } => {
                if self.armed {
                    self.nodes[node].stats.sent += 1;
                    if outcome == TxOutcome::Collided {
                        self.nodes[node].stats.collided += 1;
                    }
                }
                let n = &mut self.nodes[node];
                n.awaiting = Awaiting::EmergencyAck;
                n.await_since = now;
                let token = n.token;
                q.schedule(
                    now + self.cfg.ack_timeout_us,
                    node as u32 + 1,
                    Ev::WaitTimeout { token },
                )
                .expect("timeout is ahead");
                if outcome == TxOutcome::Delivered {
                    if self.armed {
                        self.nodes[node].stats.delivered += 1;
                    }
                    let packet = Packet {
                        src: self.nodes[node].addr,
                        payload: Payload::Ack { odt: false },
                    };
                    q.schedule(
                        now + self.radio.t_switch_us,
                        HUB,
                        Ev::HubReplyTx {
                            packet,
                            purpose: Purpose::CapAck { node },
                        },
                    )
                    .expect("ack turnaround is ahead");
                }
            }
            Purpose::OdPoll { node } => {
                if outcome == TxOutcome::Delivered && self.nodes[node].od_listening {
                    // Listening paid off: book it and reply after the
                    // turnaround.
                    let listened = now - self.nodes[node].od_listen_start;
                    self.meter_listen(node, listened);
                    let n = &mut self.nodes[node];
                    n.od_listening = false;
                    n.token += 1; // cancel the listen-window close
                    let token = n.token;
                    q.schedule(
                        now + self.radio.t_switch_us,
                        node as u32 + 1,
                        Ev::OdDataTx { token },
                    )
                    .expect("reply turnaround is ahead");
                }
            }
            Purpose::OdData { node } => {
                let n = &mut self.nodes[node];
                n.awaiting = Awaiting::OdAck;
                n.await_since = now;
                let token = n.token;
                q.schedule(
                    now + self.cfg.ack_timeout_us,
                    node as u32 + 1,
                    Ev::WaitTimeout { token },
                )
                .expect("timeout is ahead");
                if self.armed {
                    self.nodes[node].stats.sent += 1;
                    if outcome == TxOutcome::Collided {
                        self.nodes[node].stats.collided += 1;
                    }
                }
                if outcome == TxOutcome::Delivered {
                    if self.armed {
                        self.nodes[node].stats.delivered += 1;
                    }
                    if self.hub.od_active.map(|j| j.node) == Some(node) {
                        self.hub.od_active = None;
                        self.trace(now, "hub", "od_complete", format!("node{node}"));
                    }
                    let packet = Packet {
                        src: self.nodes[node].addr,
                        payload: Payload::Ack { odt: false },
                    };
                    q.schedule(
                        now + self.radio.t_switch_us,
                        HUB,
                        Ev::HubReplyTx {
                            packet,
                            purpose: Purpose::CapAck { node },
                        },
                    )
                    .expect("ack turnaround is ahead");
                }
            }
            Purpose::CapAck { node } => {
                let want = match self.nodes[node].awaiting {
                    Awaiting::EmergencyAck | Awaiting::OdAck => true,
                    _ => false,
                };
                if outcome == TxOutcome::Delivered && want {
                    let gap = now - air - self.nodes[node].await_since;
                    self.meter_idle(node, gap);
                    self.meter_rx(node, packet.encoded_len() as u64);
                    let n = &mut self.nodes[node];
                    n.token += 1;
                    n.awaiting = Awaiting::None;
                    n.emergency = false;
                    self.node_radio_off(node);
                }
            }
        }
    }

    /// A contended access finished its clear-channel assessment.
    fn on_cca_end(&mut self, q: &mut EventQueue<Ev>, actor: Actor) {
        let now = q.now();
        let cca = self.cfg.cap.cca_us;
        let attempt = match actor {
            Actor::Hub => self.hub.cap.take(),
            Actor::Node(i) => self.nodes[i].cap.take(),
        };
        let mut attempt = match attempt {
            Some(a) => a,
            None => return,
        };
        if let Actor::Node(i) = actor {
            self.meter_idle(i, attempt.pending_idle_us);
            self.meter_listen(i, cca);
        }
        attempt.pending_idle_us = 0;
        let busy = self.medium.busy_window(now - cca, now);
        if !busy {
            let target = match actor {
                Actor::Hub => HUB,
                Actor::Node(i) => i as u32 + 1,
            };
            if let Actor::Node(i) = actor {
                self.meter_tx(i, attempt.packet.encoded_len() as u64);
            }
            self.transmit(q, target, attempt.packet, attempt.purpose);
            return;
        }
        attempt.cca_failures += 1;
        if attempt.cca_failures > self.cfg.cap.max_cca_failures {
            self.cap_defer(q, actor, attempt.purpose);
            return;
        }
        let be = (attempt.cca_failures as u32).min(5);
        let slots = 1u64 << be;
        let backoff = self.rng_backoff.gen_range(0..slots) * self.cfg.cap.backoff_unit_us;
        let window_end = match actor {
            Actor::Hub => self.hub.cap_window.1,
            Actor::Node(i) => self.nodes[i].cap_window.1,
        };
        let next_cca = now + backoff + cca;
        if next_cca + attempt.tail_us > window_end {
            self.cap_defer(q, actor, attempt.purpose);
            return;
        }
        attempt.pending_idle_us = backoff;
        let target = match actor {
            Actor::Hub => {
                self.hub.cap = Some(attempt);
                HUB
            }
            Actor::Node(i) => {
                self.nodes[i].cap = Some(attempt);
                i as u32 + 1
            }
        };
        q.schedule(next_cca, target, Ev::CcaEnd { actor })
            .expect("backed-off assessment is ahead");
    }

    /// A node's reply wait expired.
    fn on_wait_timeout(&mut self, q: &mut EventQueue<Ev>, i: usize, token: u64) {
        if self.nodes[i].token != token {
            return;
        }
        self.nodes[i].token += 1;
        let now = q.now();
        match self.nodes[i].awaiting {
            Awaiting::SlotReply => {
                self.meter_idle(i, self.cfg.ack_timeout_us);
                // Retry in place if the rest of the exchange still fits
                // inside the slot.
                let node = &self.nodes[i];
                let slot_end_local =
                    node.frame_start_local + node.slot_start_us + node.slot_len_us;
                let slot_end = node.clock.local_to_global(slot_end_local);
                let need = self.radio.airtime_us(4 + node.data_rate as u64)
                    + self.radio.t_switch_us
                    + self.radio.airtime_us(4);
                if now + need <= slot_end {
                    if self.armed {
                        self.nodes[i].stats.retried += 1;
                    }
                    self.trace(now, &Self::node_entity(i), "retry", String::new());
                    self.nodes[i].awaiting = Awaiting::None;
                    q.schedule(now, i as u32 + 1, Ev::SlotTx)
                        .expect("same-tick retry");
                } else {
                    self.trace(now, &Self::node_entity(i), "reply_timeout", String::new());
                    self.finish_cycle(q, i, 0);
                }
            }
            Awaiting::EmergencyAck | Awaiting::OdAck => {
                self.meter_idle(i, self.cfg.ack_timeout_us);
                let n = &mut self.nodes[i];
                n.awaiting = Awaiting::None;
                n.emergency = false;
                self.node_radio_off(i);
            }
            Awaiting::None => {
                // Join-grant window closed without a grant.
                if self.nodes[i].phase == Phase::AwaitJoinReply {
                    if self.nodes[i].tsr_attempts >= 8 {
                        let node = &mut self.nodes[i];
                        node.phase = Phase::Scan;
                        node.scan_channel = 0;
                        node.tsr_attempts = 0;
                        let token = node.token;
                        self.trace(now, &Self::node_entity(i), "rescan", "grant never came".into());
                        q.schedule(now, i as u32 + 1, Ev::ScanStep { token })
                            .expect("same-tick rescan");
                    } else {
                        self.join_retry_next_frame(q, i);
                    }
                }
            }
        }
    }

    /// Contention-window wake: join retry, poll listening, or an
    /// emergency report.
    fn on_cap_wake(&mut self, q: &mut EventQueue<Ev>, i: usize) {
        let now = q.now();
        match self.nodes[i].phase {
            Phase::JoinRequest => {
                let packet = Packet {
                    src: self.nodes[i].addr,
                    payload: Payload::TimeSlotRequest {
                        data_rate: self.nodes[i].data_rate,
                        requested_slot_us: self.nodes[i].requested_slot_us,
                    },
                };
                self.cap_begin(q, Actor::Node(i), packet, Purpose::JoinRequest { node: i });
            }
            Phase::Joined if self.nodes[i].odt => {
                // Poll listening wins over a same-frame emergency.
                self.meter_switch(i);
                let n = &mut self.nodes[i];
                n.odt = false;
                n.emergency = false;
                n.od_listening = true;
                n.od_listen_start = now + self.radio.t_switch_us;
                let token = n.token;
                let end = n.od_listen_end;
                q.schedule(end.max(now), i as u32 + 1, Ev::OdListenEnd { token })
                    .expect("listen close is ahead");
            }
            Phase::Joined if self.nodes[i].emergency => {
                self.meter_switch(i);
                let packet = Packet {
                    src: self.nodes[i].addr,
                    payload: Payload::Data {
                        body: vec![0; self.nodes[i].data_rate as usize],
                    },
                };
                self.cap_begin(
                    q,
                    Actor::Node(i),
                    packet,
                    Purpose::EmergencyData { node: i },
                );
            }
            _ => {}
        }
    }

    fn on_node_wake(&mut self, q: &mut EventQueue<Ev>, i: usize) {
        if self.nodes[i].phase != Phase::Joined {
            return;
        }
        self.meter_switch(i);
        let node = &self.nodes[i];
        let tx_at = node
            .clock
            .local_to_global(node.frame_start_local + node.slot_start_us);
        let jitter = if self.cfg.jitter_us > 0 {
            self.rng_jitter.gen_range(0..=self.cfg.jitter_us)
        } else {
            0
        };
        q.schedule(tx_at.max(q.now()) + jitter, i as u32 + 1, Ev::SlotTx)
            .expect("slot start is ahead of the wake");
        if jitter > 0 {
            self.meter_idle(i, jitter);
        }
    }

    fn on_slot_tx(&mut self, q: &mut EventQueue<Ev>, i: usize) {
        let node = &self.nodes[i];
        let packet = Packet {
            src: node.addr,
            payload: Payload::Data {
                body: vec![0; node.data_rate as usize],
            },
        };
        self.meter_tx(i, packet.encoded_len() as u64);
        self.transmit(q, i as u32 + 1, packet, Purpose::SlotData { node: i });
    }
}

impl Handler for World {
    type Kind = Ev;

    fn handle(&mut self, ev: Event<Ev>, q: &mut EventQueue<Ev>) {
        match ev.kind {
            Ev::FrameStart { k } => self.on_frame_start(q, k),
            Ev::AdvertTx => {
                let packet = Packet {
                    src: Address::BROADCAST,
                    payload: Payload::Channel {
                        cn_address: self.hub.addr,
                        channel_id: self.hub.channel as u8,
                    },
                };
                self.transmit(q, HUB, packet, Purpose::Advert);
            }
            Ev::TxEnd {
                tx,
                packet,
                purpose,
            } => self.on_tx_end(q, packet, tx, purpose),
            Ev::ScanStep { token } => self.on_scan_step(q, (ev.target - 1) as usize, token),
            Ev::CcaEnd { actor } => self.on_cca_end(q, actor),
            Ev::NodeWake => self.on_node_wake(q, (ev.target - 1) as usize),
            Ev::SlotTx => self.on_slot_tx(q, (ev.target - 1) as usize),
            Ev::WaitTimeout { token } => {
                self.on_wait_timeout(q, (ev.target - 1) as usize, token)
            }
            Ev::CapWake => self.on_cap_wake(q, (ev.target - 1) as usize),
            Ev::HubReplyTx { packet, purpose } => {
                self.transmit(q, HUB, packet, purpose);
            }
            Ev::OdDataTx { token } => {
                let i = (ev.target - 1) as usize;
                if self.nodes[i].token != token {
                    return;
                }
                self.meter_idle(i, self.radio.t_switch_us);
                let bytes = self
                    .hub
                    .od_active
                    .filter(|j| j.node == i)
                    .map(|j| j.bytes)
                    .unwrap_or(0) as usize;
                let packet = Packet {
                    src: self.nodes[i].addr,
                    payload: Payload::Data {
                        body: vec![0; bytes],
                    },
                };
                self.meter_tx(i, packet.encoded_len() as u64);
                self.transmit(q, i as u32 + 1, packet, Purpose::OdData { node: i });
            }
            Ev::OdListenEnd { token } => {
                let i = (ev.target - 1) as usize;
                if self.nodes[i].token != token {
                    return;
                }
                let listened = q.now() - self.nodes[i].od_listen_start;
                self.meter_listen(i, listened);
                self.nodes[i].od_listening = false;
                self.node_radio_off(i);
            }
        }
    }
}

/// Everything one finished run hands back, beyond the public cell
/// result.
pub struct RunOutput {
    pub cell: CellResult,
    /// Event trace (when requested), one `time, entity, event, detail`
    /// line per record.
    pub trace: Vec<String>,
    /// Final CFP schedule as placed by the hub.
    pub schedule: Schedule,
}

/// Run one cell to completion.
pub fn run(cfg: &ArmacConfig) -> RunOutput {
    let mut world = World::new(cfg);
    let mut q: EventQueue<Ev> = EventQueue::new();
    q.schedule(0, HUB, Ev::FrameStart { k: 0 })
        .expect("first frame at time zero");
    for i in 0..cfg.n_nodes {
        q.schedule(0, i as u32 + 1, Ev::ScanStep { token: 0 })
            .expect("scan starts at time zero");
    }
    let t_frame = cfg.layout.t_frame_us;
    let horizon = (cfg.max_join_frames as u64 + cfg.n_cycles as u64 + 2) * t_frame;
    let mut end = t_frame;
    while !world.done && world.aborted.is_none() && end <= horizon {
        run_until(&mut world, &mut q, end);
        if q.is_empty() {
            break;
        }
        end += t_frame;
    }
    if !world.done && world.aborted.is_none() {
        world.aborted = Some("simulation horizon reached before the measurement window closed".into());
    }
    let cell = CellResult {
        protocol: Protocol::Armac,
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
        cfp_collisions: world.cfp_collisions,
        cap_collisions: world.cap_collisions,
        aborted: world.aborted.clone(),
    };
    RunOutput {
        cell,
        trace: world.trace.unwrap_or_default(),
        schedule: world.hub.schedule,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::closed_form_cycle;

    #[test]
    fn a_lossless_network_joins_and_meters_exactly() {
        let cfg = ArmacConfig::uniform(10, 50);
        let out = run(&cfg);
        assert!(out.cell.aborted.is_none());
        let pred = closed_form_cycle(&cfg.radio, 1_000_000, 35, 4, 0, 864).unwrap();
        for (i, node) in out.cell.nodes.iter().enumerate() {
            assert_eq!(node.ledger.cycles_counted, 50, "node {i} cycles");
            assert_eq!(node.ledger.e_switch, 50 * pred.e_switch, "node {i} switch");
            assert_eq!(node.ledger.e_trans, 50 * pred.e_trans, "node {i} trans");
            assert_eq!(node.ledger.e_rec, 50 * pred.e_rec, "node {i} rec");
            assert_eq!(node.ledger.e_tout, 50 * pred.e_tout, "node {i} wait");
            assert_eq!(node.ledger.e_sleep, 50 * pred.e_sleep, "node {i} sleep");
            assert_eq!(node.stats.sent, 50);
            assert_eq!(node.stats.delivered, 50);
            assert_eq!(node.stats.collided, 0);
            assert_eq!(node.stats.sync_acks, 0);
            assert!(node.stats.join_latency_frames >= 1);
        }
        assert_eq!(out.cell.cfp_collisions, 0);
    }

    #[test]
    fn a_lossy_channel_degrades_delivery_but_not_the_join() {
        let mut cfg = ArmacConfig::uniform(5, 200);
        cfg.per_percent = 20.0;
        cfg.seed = 3;
        let out = run(&cfg);
        assert!(out.cell.aborted.is_none());
        for node in &out.cell.nodes {
            assert_eq!(node.stats.sent, 200, "one attempt per frame fits");
            assert!(node.stats.delivered < 200);
            assert!(node.stats.delivered > 100);
            assert_eq!(node.stats.retried, 0, "default slots have no retry room");
        }
    }

    #[test]
    fn a_fast_clock_is_reined_in_by_corrections() {
        let mut cfg = ArmacConfig::uniform(3, 300);
        cfg.skew_ppm = vec![100; 3];
        cfg.trace = true;
        let out = run(&cfg);
        assert!(out.cell.aborted.is_none());
        assert_eq!(out.cell.cfp_collisions, 0, "guard bands must absorb drift");
        for node in &out.cell.nodes {
            assert_eq!(node.stats.sent, 300);
            assert_eq!(node.stats.delivered, 300);
            assert!(
                node.stats.sync_acks > 0,
                "a drifting node needs corrections"
            );
            // 100 µs/frame drift against a 158 µs tolerance: roughly
            // every other frame, never more than ~2/3 of frames.
            assert!(node.stats.sync_acks <= 200);
        }
        assert!(out.trace.iter().any(|l| l.contains("sync_ack")));
    }

    #[test]
    fn retries_run_when_the_slot_has_room() {
        let mut cfg = ArmacConfig::uniform(2, 300);
        cfg.per_percent = 20.0;
        // A slot floor big enough for a second full exchange.
        cfg.requested_slot_us = vec![4_000; 2];
        let out = run(&cfg);
        assert!(out.cell.aborted.is_none());
        let sched = &out.schedule;
        assert!(sched.slots.iter().all(|s| s.len_us >= 4_000));
        let total_retried: u64 = out.cell.nodes.iter().map(|n| n.stats.retried).sum();
        assert!(total_retried > 0, "losses must trigger in-slot retries");
        for node in &out.cell.nodes {
            assert!(node.stats.sent > 300, "retries add attempts");
            // One retry recovers most single losses: delivery well above
            // the single-attempt expectation of ~80%.
            assert!(node.stats.delivered > 270);
        }
    }

    #[test]
    fn emergency_reports_ride_the_contention_window() {
        let mut cfg = ArmacConfig::uniform(3, 100);
        cfg.emergency_rate = 0.7;
        cfg.seed = 9;
        let out = run(&cfg);
        assert!(out.cell.aborted.is_none());
        let extra: u64 = out
            .cell
            .nodes
            .iter()
            .map(|n| n.stats.sent.saturating_sub(100))
            .sum();
        assert!(extra > 50, "≈3·100·(1−e⁻⁰·⁷) emergency frames expected");
        for node in &out.cell.nodes {
            assert!(node.stats.delivered >= 100, "slot traffic is unaffected");
        }
    }

    #[test]
    fn a_poll_is_flagged_served_and_acknowledged_in_one_frame() {
        let mut cfg = ArmacConfig::uniform(2, 20);
        cfg.on_demand = vec![OnDemandPoll {
            frame: 3,
            node: 1,
            bytes: 40,
        }];
        cfg.trace = true;
        let out = run(&cfg);
        assert!(out.cell.aborted.is_none());
        assert!(out.trace.iter().any(|l| l.contains("od_complete")));
        let polled = &out.cell.nodes[1];
        assert_eq!(polled.stats.od_abandoned, 0);
        assert_eq!(polled.stats.sent, 21, "20 slot frames plus the poll reply");
        assert_eq!(polled.stats.delivered, 21);
        // The other node never listened.
        assert_eq!(out.cell.nodes[0].stats.sent, 20);
    }

    #[test]
    fn an_unanswerable_poll_is_abandoned_after_three_frames() {
        let mut cfg = ArmacConfig::uniform(2, 20);
        cfg.per_percent = 100.0;
        // Everything but the poll itself is loss-exempt, so the network
        // joins and runs normally while every poll goes up in smoke.
        cfg.per_exempt_kinds = vec![
            PacketKind::Channel,
            PacketKind::TimeSlotRequest,
            PacketKind::TimeSlotRequestReply,
            PacketKind::SyncAck,
            PacketKind::Ack,
            PacketKind::Data,
        ];
        cfg.on_demand = vec![OnDemandPoll {
            frame: 2,
            node: 0,
            bytes: 10,
        }];
        let out = run(&cfg);
        assert!(out.cell.aborted.is_none());
        assert_eq!(out.cell.nodes[0].stats.od_abandoned, 1);
        assert_eq!(out.cell.nodes[0].stats.delivered, 20, "slot data exempt");
    }

    #[test]
    fn a_dead_channel_aborts_the_cell_at_the_join_deadline() {
        let mut cfg = ArmacConfig::uniform(2, 10);
        cfg.per_percent = 100.0;
        cfg.max_join_frames = 5;
        let out = run(&cfg);
        let reason = out.cell.aborted.expect("join can never complete");
        assert!(reason.contains("join incomplete"), "got: {reason}");
        assert!(out.cell.nodes.iter().all(|n| n.ledger.total() == 0));
    }

    #[test]
    fn scanning_skips_foreign_channels_and_finds_the_hub() {
        let mut cfg = ArmacConfig::uniform(2, 10);
        cfg.rf_busy = [true, false, false]; // hub settles on channel 1
        let out = run(&cfg);
        assert!(out.cell.aborted.is_none());
        for node in &out.cell.nodes {
            // One full dwell on the jammed channel costs a frame.
            assert!(node.stats.join_latency_frames >= 2);
        }
    }

    #[test]
    fn identical_configs_reproduce_identical_results() {
        let mut cfg = ArmacConfig::uniform(4, 60);
        cfg.per_percent = 10.0;
        cfg.seed = 42;
        let a = run(&cfg);
        let b = run(&cfg);
        for (x, y) in a.cell.nodes.iter().zip(&b.cell.nodes) {
            assert_eq!(x.ledger, y.ledger);
            assert_eq!(x.stats, y.stats);
        }
        assert_eq!(a.cell.cfp_collisions, b.cell.cfp_collisions);
        assert_eq!(a.cell.cap_collisions, b.cell.cap_collisions);
    }
}
