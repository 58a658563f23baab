//! Frame layout and contention-free slot scheduling.
//!
//! The hub divides each frame into a contention-free period (CFP) of
//! per-node time slots, a contention access period (CAP), and a reserved
//! tail. Slots are laid out in request order and fenced by adaptive guard
//! bands that scale with slot length: the band in front of the first slot
//! is `F`% of that slot, the band between two slots is `F`% of their mean,
//! and the band after the last slot is `F`% of it. The same factor also
//! yields the acceptable arrival delay `D` — `F`% of the shortest slot —
//! which is the drift tolerance the synchronisation layer enforces, so
//! clock error stays inside the guard bands by construction.
//!
//! All arithmetic is integer µs. Guard bands round half-up; `D` and the
//! in-slot margin round down, erring on the tolerant side for the bands
//! and on the strict side for the tolerance itself.

use crate::energy::RadioParams;
use crate::protocol::{Address, HEADER_LEN};
use thiserror::Error;

/// Octets of a payload-`p` data frame on the wire (header + length
/// prefix + payload).
fn data_frame_octets(p_data: u16) -> u64 {
    HEADER_LEN as u64 + 1 + p_data as u64
}

/// Octets of a plain acknowledgement frame on the wire.
pub const ACK_FRAME_OCTETS: u64 = HEADER_LEN as u64 + 1;

/// Largest per-frame payload a slot request may carry.
pub const MAX_P_DATA: u16 = 251;

/// Fixed split of one superframe, all lengths in µs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub t_frame_us: u64,
    /// Contention-free period holding the slot schedule.
    pub cfp_len_us: u64,
    /// Contention access period following the CFP.
    pub cap_len_us: u64,
    /// Reserved tail of the frame (kept silent).
    pub t_ms_us: u64,
}

impl FrameLayout {
    /// Build a layout from the frame period and the two trailing section
    /// lengths; whatever remains is the CFP.
    pub fn new(t_frame_us: u64, cap_len_us: u64, t_ms_us: u64) -> Result<Self, ScheduleError> {
        let tail = cap_len_us
            .checked_add(t_ms_us)
            .filter(|tail| *tail < t_frame_us);
        match tail {
            Some(tail) => Ok(FrameLayout {
                t_frame_us,
                cfp_len_us: t_frame_us - tail,
                cap_len_us,
                t_ms_us,
            }),
            None => Err(ScheduleError::InvalidLayout {
                t_frame_us,
                cap_len_us,
                t_ms_us,
            }),
        }
    }

    /// Frame offset where the CAP begins.
    pub fn cap_start_us(&self) -> u64 {
        self.cfp_len_us
    }

    /// Frame offset just past the CAP.
    pub fn cap_end_us(&self) -> u64 {
        self.cfp_len_us + self.cap_len_us
    }
}

/// One node's slot requirements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotRequest {
    pub node: Address,
    /// Payload octets shipped per frame.
    pub data_rate: u16,
    /// Explicit slot-duration floor in µs (0 = size from `data_rate`).
    pub requested_slot_us: u32,
}

/// One assigned slot, offsets within the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSlot {
    pub node: Address,
    pub start_us: u64,
    pub len_us: u64,
}

impl TimeSlot {
    pub fn end_us(&self) -> u64 {
        self.start_us + self.len_us
    }
}

/// A complete CFP schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// Slots in layout order (ascending start).
    pub slots: Vec<TimeSlot>,
    /// `slots.len() + 1` guard bands: before the first slot, between each
    /// pair, after the last. Empty for an empty schedule.
    pub guard_bands: Vec<u64>,
    pub f_percent: u32,
    /// Acceptable arrival delay `D`: the sync layer's drift tolerance.
    pub d_us: u64,
}

impl Schedule {
    /// Total CFP span: leading band through trailing band.
    pub fn span_us(&self) -> u64 {
        match self.slots.last() {
            Some(last) => last.end_us() + self.guard_bands[self.slots.len()],
            None => 0,
        }
    }

    /// Slot assigned to `node`, if any.
    pub fn slot_for(&self, node: Address) -> Option<&TimeSlot> {
        self.slots.iter().find(|s| s.node == node)
    }

    /// Human-readable table of the layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,start_us,len_us,preceding_gb_us\n");
        for (i, slot) in self.slots.iter().enumerate() {
            out.push_str(&format!(
                "{:#06x},{},{},{}\n",
                slot.node.0, slot.start_us, slot.len_us, self.guard_bands[i]
            ));
        }
        out
    }
}

/// Scheduling failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("CAP ({cap_len_us} µs) plus reserved tail ({t_ms_us} µs) leave no CFP in a {t_frame_us} µs frame")]
    InvalidLayout {
        t_frame_us: u64,
        cap_len_us: u64,
        t_ms_us: u64,
    },
    #[error("slots plus guard bands span {span_us} µs, beyond the {cfp_len_us} µs CFP")]
    CfpOverflow { span_us: u64, cfp_len_us: u64 },
    #[error("node {0} appears in more than one slot request")]
    DuplicateNode(Address),
    #[error("node {node} requests {data_rate} payload octets per frame, above the {MAX_P_DATA}-octet cap")]
    InvalidDataRate { node: Address, data_rate: u16 },
    #[error("cannot compute the acceptable delay of an empty schedule")]
    EmptySchedule,
}

/// `num / den` rounded to the nearest integer, ties up.
fn div_half_up(num: u128, den: u128) -> u64 {
    ((2 * num + den) / (2 * den)) as u64
}

/// Minimum slot duration for a request: data-frame airtime, the replying
/// radio's turnaround, the acknowledgement's airtime, and an explicit
/// in-slot margin.
pub fn slot_length(req: &SlotRequest, radio: &RadioParams, d_margin_us: u64) -> u64 {
    radio.airtime_us(data_frame_octets(req.data_rate))
        + radio.t_switch_us
        + radio.airtime_us(ACK_FRAME_OCTETS)
        + d_margin_us
}

/// Guard band between two adjacent slots: `F`% of their mean length,
/// rounded half-up.
pub fn interior_guard_band(ts_a_us: u64, ts_b_us: u64, f_percent: u32) -> u64 {
    div_half_up(f_percent as u128 * (ts_a_us as u128 + ts_b_us as u128), 200)
}

/// Guard bands at the CFP edges: `F`% of the first and of the last slot,
/// same rounding as the interior bands.
pub fn edge_guard_bands(ts_first_us: u64, ts_last_us: u64, f_percent: u32) -> (u64, u64) {
    (
        div_half_up(f_percent as u128 * ts_first_us as u128, 100),
        div_half_up(f_percent as u128 * ts_last_us as u128, 100),
    )
}

/// Acceptable arrival delay `D`: `F`% of the shortest slot, rounded down.
pub fn acceptable_delay(slots: &[TimeSlot], f_percent: u32) -> Result<u64, ScheduleError> {
    let min = slots
        .iter()
        .map(|s| s.len_us)
        .min()
        .ok_or(ScheduleError::EmptySchedule)?;
    Ok((min as u128 * f_percent as u128 / 100) as u64)
}

/// Lay out pre-sized slots in order: leading band, slots separated by
/// interior bands, trailing band. Fails if the span leaves the CFP.
pub fn place_slots(
    sized: &[(Address, u64)],
    layout: &FrameLayout,
    f_percent: u32,
) -> Result<Schedule, ScheduleError> {
    if sized.is_empty() {
        return Ok(Schedule {
            slots: Vec::new(),
            guard_bands: Vec::new(),
            f_percent,
            d_us: 0,
        });
    }
    let (gb_first, gb_last) =
        edge_guard_bands(sized[0].1, sized[sized.len() - 1].1, f_percent);

    let mut slots = Vec::with_capacity(sized.len());
    let mut guard_bands = Vec::with_capacity(sized.len() + 1);
    let mut cursor = 0u64;
    guard_bands.push(gb_first);
    cursor += gb_first;
    for (i, &(node, len_us)) in sized.iter().enumerate() {
        if i > 0 {
            let gb = interior_guard_band(sized[i - 1].1, len_us, f_percent);
            guard_bands.push(gb);
            cursor += gb;
        }
        slots.push(TimeSlot {
            node,
            start_us: cursor,
            len_us,
        });
        cursor += len_us;
    }
    guard_bands.push(gb_last);
    cursor += gb_last;

    if cursor > layout.cfp_len_us {
        return Err(ScheduleError::CfpOverflow {
            span_us: cursor,
            cfp_len_us: layout.cfp_len_us,
        });
    }
    let d_us = acceptable_delay(&slots, f_percent)?;
    Ok(Schedule {
        slots,
        guard_bands,
        f_percent,
        d_us,
    })
}

/// Size and place slots for a request list (kept in arrival order).
///
/// Each slot gets an in-slot margin of `F`% of its unpadded length — the
/// per-slot acceptable-delay allowance — computed once from the unpadded
/// length and then frozen rather than iterated to a fixed point. A
/// request's explicit `requested_slot_us` acts as a floor on the result.
pub fn build_schedule(
    requests: &[SlotRequest],
    layout: &FrameLayout,
    f_percent: u32,
    radio: &RadioParams,
) -> Result<Schedule, ScheduleError> {
    let mut seen = std::collections::BTreeSet::new();
    for req in requests {
        if req.data_rate > MAX_P_DATA {
            return Err(ScheduleError::InvalidDataRate {
                node: req.node,
                data_rate: req.data_rate,
            });
        }
        if !seen.insert(req.node) {
            return Err(ScheduleError::DuplicateNode(req.node));
        }
    }
    let sized: Vec<(Address, u64)> = requests
        .iter()
        .map(|req| {
            let unpadded = slot_length(req, radio, 0);
            let margin = (unpadded as u128 * f_percent as u128 / 100) as u64;
            (req.node, (unpadded + margin).max(req.requested_slot_us as u64))
        })
        .collect();
    place_slots(&sized, layout, f_percent)
}
