//! Deterministic discrete-event simulator and protocol library for a
//! TDMA-based body-area-network MAC with adaptive guard bands, drift-value
//! time synchronisation, and per-term radio energy accounting, next to a
//! minimal slotted-CSMA baseline for comparison under identical radio
//! parameters and channel conditions.
//!
//! Module map:
//!
//! * [`protocol`] — wire format of the seven MAC frame kinds.
//! * [`schedule`] — superframe layout, slot sizing, adaptive guard bands.
//! * [`sync`] — drift-value computation and wake-offset correction.
//! * [`energy`] — scaled-integer radio energy model and per-node ledgers.
//! * [`engine`] — event queue, skewed clocks, lossy shared medium, seeded
//!   RNG streams.
//! * [`armac`] — the TDMA protocol's hub and node state machines.
//! * [`baseline`] — the slotted-CSMA comparison MAC.
//! * [`config`] — JSON scenario schema, validation, defaults.
//! * [`report`] — per-run statistics and CSV rendering.
//! * [`sweep`] — multi-cell experiment driver with deterministic output.

pub mod armac;
pub mod baseline;
pub mod config;
pub mod energy;
pub mod engine;
pub mod protocol;
pub mod report;
pub mod schedule;
pub mod sweep;
pub mod sync;
