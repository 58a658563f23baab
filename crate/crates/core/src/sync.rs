//! Drift-value time synchronisation.
//!
//! The hub never broadcasts beacons to resynchronise sleeping nodes.
//! Instead it timestamps each node's periodic data arrival, compares it
//! with the schedule's expected arrival, and — only when the error leaves
//! the acceptable-delay window `D` — returns the signed error as a drift
//! value inside the acknowledgement. The node shifts its wake offset by
//! that amount, which cancels the accumulated phase error; the residual
//! error per cycle is then one frame's worth of oscillator drift, well
//! inside `D` for sane crystals, so corrections stay rare.
//!
//! Sign convention: positive means the packet arrived *early* (expected
//! minus actual), so a positive drift value pushes the wake offset later.

/// Signed arrival error in µs: expected minus actual, positive ⇒ early.
pub fn delta_t(expected_arrival_us: u64, current_arrival_us: u64) -> i64 {
    expected_arrival_us as i64 - current_arrival_us as i64
}

/// Outcome of comparing an arrival error against the tolerance `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriftDecision {
    /// The observed arrival error.
    pub delta_t_us: i64,
    /// Correction to ship: the full error, or 0 inside the window.
    pub dv_us: i64,
    /// Whether the reply must be the correcting acknowledgement.
    pub send_sync_ack: bool,
}

/// Decide whether an arrival error warrants a correction. Errors strictly
/// beyond `D` echo back the whole error; anything inside the window —
/// boundary included — is tolerated.
pub fn drift_value(delta_t_us: i64, d_us: u64) -> DriftDecision {
    let outside = delta_t_us.unsigned_abs() > d_us;
    DriftDecision {
        delta_t_us,
        dv_us: if outside { delta_t_us } else { 0 },
        send_sync_ack: outside,
    }
}

/// Shift a wake offset by a received drift value, wrapped into the frame.
pub fn apply_drift(wake_offset_us: u64, dv_us: i64, t_frame_us: u64) -> u64 {
    debug_assert!(t_frame_us > 0);
    debug_assert!(wake_offset_us < t_frame_us);
    (wake_offset_us as i64 + dv_us).rem_euclid(t_frame_us as i64) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ClockModel;
    use proptest::prelude::*;

    #[test]
    fn delta_t_is_expected_minus_actual() {
        assert_eq!(delta_t(5_000, 5_400), -400);
        assert_eq!(delta_t(5_400, 5_000), 400);
        assert_eq!(delta_t(7, 7), 0);
    }

    #[test]
    fn errors_inside_the_window_are_tolerated() {
        let d = drift_value(-400, 1_000);
        assert_eq!(d.dv_us, 0);
        assert!(!d.send_sync_ack);
        assert_eq!(d.delta_t_us, -400);
    }

    #[test]
    fn errors_beyond_the_window_echo_back_whole() {
        let d = drift_value(-1_500, 1_000);
        assert_eq!(d.dv_us, -1_500);
        assert!(d.send_sync_ack);
        let d = drift_value(1_001, 1_000);
        assert_eq!(d.dv_us, 1_001);
        assert!(d.send_sync_ack);
    }

    #[test]
    fn boundary_error_counts_as_inside() {
        let d = drift_value(1_000, 1_000);
        assert_eq!(d.dv_us, 0);
        assert!(!d.send_sync_ack);
        let d = drift_value(-1_000, 1_000);
        assert!(!d.send_sync_ack);
    }

    #[test]
    fn applying_a_drift_shifts_the_wake_offset() {
        assert_eq!(apply_drift(2_000, -1_500, 1_000_000), 500);
        assert_eq!(apply_drift(2_000, 0, 1_000_000), 2_000);
        assert_eq!(apply_drift(2_000, 1_500, 1_000_000), 3_500);
        // Wrap both ways across the frame boundary.
        assert_eq!(apply_drift(100, -250, 1_000_000), 999_850);
        assert_eq!(apply_drift(999_900, 250, 1_000_000), 150);
    }

    /// Iterate the correction loop in closed form against a skewed clock:
    /// the error grows by one frame's drift per cycle, first leaves a
    /// D = 1000 µs window at cycle 11 for a 100 ppm clock and 1 s frames,
    /// and one applied correction knocks the next error back down to a
    /// single frame's drift.
    #[test]
    fn one_correction_cancels_the_accumulated_error() {
        let t_frame: u64 = 1_000_000;
        let d: u64 = 1_000;
        let clock = ClockModel {
            skew_ppm: 100,
            phase_offset_us: 0,
        };
        let wake_offset: u64 = 2_000;

        let mut first_correction = None;
        let mut offset = wake_offset;
        let mut post_correction_errors = Vec::new();
        for k in 1..=30u64 {
            let local_wake = k * t_frame + offset;
            let arrival = clock.local_to_global(local_wake);
            let expected = k * t_frame + wake_offset;
            let decision = drift_value(delta_t(expected, arrival), d);
            match first_correction {
                None => {
                    if decision.send_sync_ack {
                        first_correction = Some(k);
                        offset = apply_drift(offset, decision.dv_us, t_frame);
                    }
                }
                Some(_) => post_correction_errors.push(decision.delta_t_us),
            }
        }
        // 100 µs of drift per cycle crosses D = 1000 strictly at cycle 11.
        assert_eq!(first_correction, Some(11));
        // The cycle right after the correction shows one frame of fresh
        // drift (fast clock ⇒ early ⇒ positive), within rounding.
        let next = post_correction_errors[0];
        assert!((next - 100).abs() <= 2, "next error {next} µs");
        // Thereafter the error grows by one frame's drift per cycle again.
        let growth = post_correction_errors[1] - post_correction_errors[0];
        assert!((growth - 100).abs() <= 2, "per-cycle growth {growth} µs");
    }

    proptest! {
        /// The decision either tolerates (dv = 0) or echoes the error
        /// verbatim, and flags the correcting reply exactly when it
        /// echoes.
        #[test]
        fn decision_is_all_or_nothing(dt in -10_000i64..10_000, d in 0u64..5_000) {
            let decision = drift_value(dt, d);
            prop_assert!(decision.dv_us == 0 || decision.dv_us == dt);
            prop_assert_eq!(decision.send_sync_ack, dt.unsigned_abs() > d);
            prop_assert_eq!(decision.send_sync_ack, decision.dv_us != 0 || (dt == 0 && false));
            prop_assert_eq!(decision.delta_t_us, dt);
        }

        /// Offsets stay inside the frame after any correction.
        #[test]
        fn corrected_offsets_stay_in_frame(
            offset in 0u64..1_000_000,
            dv in -3_000_000i64..3_000_000,
        ) {
            let out = apply_drift(offset, dv, 1_000_000);
            prop_assert!(out < 1_000_000);
            // Zero correction is the identity.
            prop_assert_eq!(apply_drift(offset, 0, 1_000_000), offset);
        }
    }
}
