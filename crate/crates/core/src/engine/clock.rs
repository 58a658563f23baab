//! Per-node oscillator model.

/// Affine local clock: `local = global · (1 + skew_ppm·10⁻⁶) + phase`.
/// Positive skew means the crystal runs fast, so the node acts *early*
/// in global terms. Conversions round to the nearest tick and invert
/// each other within one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClockModel {
    /// Rate error in parts per million.
    pub skew_ppm: i32,
    /// Fixed offset of the local epoch, in local µs.
    pub phase_offset_us: i64,
}

const PPM: i128 = 1_000_000;

/// Nearest-integer division for positive divisors, ties away from zero.
fn div_round_nearest(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let half = den / 2;
    if num >= 0 {
        (num + half) / den
    } else {
        -((-num + half) / den)
    }
}

impl ClockModel {
    /// Map a local timestamp onto the global timeline.
    pub fn local_to_global(&self, local_us: u64) -> u64 {
        let num = (local_us as i128 - self.phase_offset_us as i128) * PPM;
        let den = PPM + self.skew_ppm as i128;
        div_round_nearest(num, den).max(0) as u64
    }

    /// Map a global timestamp into this node's local clock.
    pub fn global_to_local(&self, global_us: u64) -> u64 {
        let scaled = div_round_nearest(global_us as i128 * (PPM + self.skew_ppm as i128), PPM);
        (scaled + self.phase_offset_us as i128).max(0) as u64
    }
}
