//! Shared-medium transmission model.
//!
//! One `Medium` stands for the RF channel the network operates on. A
//! transmission occupies it for its whole airtime; any two transmissions
//! whose airtimes overlap destroy each other (no capture). Independent of
//! collisions, every transmission consumes exactly one Bernoulli loss
//! draw from the channel's own RNG stream, taken at transmit start — a
//! fixed draw order that keeps runs reproducible no matter how outcomes
//! are consumed later.
//!
//! The medium also answers clear-channel-assessment queries over a recent
//! time window, which is what the contention procedures sample.

use super::SimTime;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// How far back a finished transmission stays visible to busy-window
/// queries. Generously above any CCA window.
const CCA_LOOKBACK_US: u64 = 4_096;

/// Handle for one in-flight transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TxId(u64);

/// Fate of a finished transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Delivered,
    /// Destroyed by the Bernoulli channel.
    LostToChannel,
    /// Destroyed by airtime overlap with another transmission.
    Collided,
}

#[derive(Debug, Clone, Copy)]
struct Flight {
    id: u64,
    start: SimTime,
    end: SimTime,
    lost: bool,
    collided: bool,
}

/// The shared channel.
pub struct Medium {
    loss_probability: f64,
    rng: ChaCha8Rng,
    /// Transmissions that may still be on air or are kept for CCA
    /// lookback; pruned lazily.
    flights: Vec<Flight>,
    next_id: u64,
}

impl Medium {
    /// `loss_probability` is the per-transmission Bernoulli loss chance
    /// in [0, 1]; `rng` should come from the channel stream of the run's
    /// master seed.
    pub fn new(loss_probability: f64, rng: ChaCha8Rng) -> Self {
        debug_assert!((0.0..=1.0).contains(&loss_probability));
        Medium {
            loss_probability,
            rng,
            flights: Vec::new(),
            next_id: 0,
        }
    }

    fn prune(&mut self, now: SimTime) {
        self.flights
            .retain(|f| f.end + CCA_LOOKBACK_US > now);
    }

    /// Start a transmission of `airtime_us` at `now`. Draws the loss
    /// lottery immediately (the draw happens even for loss-exempt frames,
    /// keeping the stream position independent of exemptions) and marks
    /// collisions against everything still on air.
    pub fn begin_tx(&mut self, now: SimTime, airtime_us: u64, exempt_from_loss: bool) -> TxId {
        self.prune(now);
        let drew_loss = self.rng.gen_bool(self.loss_probability);
        let mut flight = Flight {
            id: self.next_id,
            start: now,
            end: now + airtime_us,
            lost: drew_loss && !exempt_from_loss,
            collided: false,
        };
        self.next_id += 1;
        for other in &mut self.flights {
            if other.end > now {
                other.collided = true;
                flight.collided = true;
            }
        }
        self.flights.push(flight);
        TxId(flight.id)
    }

    /// Resolve a transmission at its end time. Collision trumps channel
    /// loss in the reported outcome.
    pub fn end_tx(&mut self, id: TxId) -> TxOutcome {
        let flight = self
            .flights
            .iter()
            .find(|f| f.id == id.0)
            .expect("end_tx for unknown transmission");
        if flight.collided {
            TxOutcome::Collided
        } else if flight.lost {
            TxOutcome::LostToChannel
        } else {
            TxOutcome::Delivered
        }
    }

    /// Was any transmission on air at some point within `[from, to)`?
    /// This is the clear-channel-assessment primitive.
    pub fn busy_window(&self, from: SimTime, to: SimTime) -> bool {
        debug_assert!(from <= to);
        self.flights.iter().any(|f| f.start < to && f.end > from)
    }
}
