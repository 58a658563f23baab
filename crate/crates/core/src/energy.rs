//! Per-node radio energy model.
//!
//! Everything is computed in scaled integers so that simulator ledgers can
//! be compared against closed-form predictions for exact equality: one
//! energy unit is a femtojoule, which falls out of multiplying microseconds
//! by microamps by millivolts (1e-6 s · 1e-6 A · 1e-3 V = 1e-15 J). Floats
//! only appear at the reporting boundary.
//!
//! A steady duty cycle charges five terms: sleep current over the idle
//! remainder of the frame, two mode switches (in and out of sleep),
//! transmit current over the data frame's airtime, receive current over
//! the acknowledgement's airtime, and idle current over the window spent
//! waiting for that acknowledgement. The active time of a cycle is
//! everything but sleep, and sleep time is defined as the frame period
//! minus active time.

use thiserror::Error;

/// Scaled energy unit: µs × µA × mV.
pub type Femtojoules = u128;

/// Fixed divisor between femtojoules and microjoules.
pub const FJ_PER_UJ: u128 = 1_000_000_000;

/// Transceiver current/timing profile.
///
/// Defaults are a MICAz-class 2.4 GHz transceiver: 3 V supply, ~20 mA in
/// any powered radio mode, 1 µA asleep, 32 µs per octet on air, 192 µs to
/// switch modes (also used as the rx/tx turnaround).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadioParams {
    /// Supply voltage in millivolts.
    pub v_mv: u64,
    /// Receive current in microamps.
    pub i_rx_ua: u64,
    /// Transmit current in microamps.
    pub i_tx_ua: u64,
    /// Idle-listening current in microamps (also charged while switching
    /// and while waiting out an acknowledgement timeout).
    pub i_idle_ua: u64,
    /// Sleep current in microamps.
    pub i_sleep_ua: u64,
    /// Airtime per octet in microseconds.
    pub t_byte_us: u64,
    /// Sleep/active mode-switch time in microseconds; doubles as the
    /// rx/tx turnaround a replying radio needs.
    pub t_switch_us: u64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            v_mv: 3_000,
            i_rx_ua: 19_700,
            i_tx_ua: 17_400,
            i_idle_ua: 20_000,
            i_sleep_ua: 1,
            t_byte_us: 32,
            t_switch_us: 192,
        }
    }
}

impl RadioParams {
    /// Airtime of an `octets`-long frame.
    pub fn airtime_us(&self, octets: u64) -> u64 {
        octets * self.t_byte_us
    }
}

fn charge(t_us: u64, i_ua: u64, v_mv: u64) -> Femtojoules {
    t_us as u128 * i_ua as u128 * v_mv as u128
}

/// Energy spent asleep for `t_sleep_us`.
pub fn e_sleep(t_sleep_us: u64, r: &RadioParams) -> Femtojoules {
    charge(t_sleep_us, r.i_sleep_ua, r.v_mv)
}

/// Energy of one sleep/active mode switch.
pub fn e_switch(r: &RadioParams) -> Femtojoules {
    charge(r.t_switch_us, r.i_idle_ua, r.v_mv)
}

/// Energy to transmit a frame of `frame_octets` on-wire octets.
pub fn e_trans(frame_octets: u64, r: &RadioParams) -> Femtojoules {
    charge(r.airtime_us(frame_octets), r.i_tx_ua, r.v_mv)
}

/// Energy to receive a frame of `frame_octets` on-wire octets.
pub fn e_rec(frame_octets: u64, r: &RadioParams) -> Femtojoules {
    charge(r.airtime_us(frame_octets), r.i_rx_ua, r.v_mv)
}

/// Energy of keeping the receiver powered for `t_listen_us`, whether or
/// not a frame arrives (open receive windows, clear-channel assessment).
pub fn e_listen(t_listen_us: u64, r: &RadioParams) -> Femtojoules {
    charge(t_listen_us, r.i_rx_ua, r.v_mv)
}

/// Energy spent idle-listening for `t_wait_us` between a transmission and
/// the (expected) acknowledgement.
pub fn e_timeout(t_wait_us: u64, r: &RadioParams) -> Femtojoules {
    charge(t_wait_us, r.i_idle_ua, r.v_mv)
}

/// Active energy of one cycle: two mode switches plus the given transmit,
/// receive, and wait terms.
pub fn e_active(
    e_switch: Femtojoules,
    e_trans: Femtojoules,
    e_rec: Femtojoules,
    e_timeout: Femtojoules,
) -> Femtojoules {
    2 * e_switch + e_trans + e_rec + e_timeout
}

/// Total energy over a run: sum of per-cycle (sleep, active) pairs.
pub fn total_energy<I>(cycles: I) -> Femtojoules
where
    I: IntoIterator<Item = (Femtojoules, Femtojoules)>,
{
    cycles.into_iter().map(|(sleep, active)| sleep + active).sum()
}

/// Closed-form prediction rejected because its timings cannot fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CycleError {
    /// Active time would exceed the frame period.
    #[error("active time {t_active_us} µs exceeds the {t_frame_us} µs frame")]
    InvalidTiming { t_active_us: u64, t_frame_us: u64 },
}

/// Closed-form prediction of one steady duty cycle. Field-for-field
/// comparable with a simulated [`EnergyLedger`] over one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CyclePrediction {
    pub t_active_us: u64,
    pub t_sleep_us: u64,
    pub e_sleep: Femtojoules,
    /// Both mode switches.
    pub e_switch: Femtojoules,
    pub e_trans: Femtojoules,
    pub e_rec: Femtojoules,
    pub e_tout: Femtojoules,
}

impl CyclePrediction {
    pub fn e_active(&self) -> Femtojoules {
        self.e_switch + self.e_trans + self.e_rec + self.e_tout
    }

    pub fn e_total(&self) -> Femtojoules {
        self.e_sleep + self.e_active()
    }
}

/// Predict one duty cycle analytically: the node switches on, transmits
/// its data frame (`retransmissions` extra attempts each waste a full
/// `ack_timeout_us` listening), waits one turnaround, receives the
/// acknowledgement, and switches off; the rest of the frame is sleep.
pub fn closed_form_cycle(
    r: &RadioParams,
    t_frame_us: u64,
    data_frame_octets: u64,
    ack_frame_octets: u64,
    retransmissions: u64,
    ack_timeout_us: u64,
) -> Result<CyclePrediction, CycleError> {
    let data_air = r.airtime_us(data_frame_octets);
    let ack_air = r.airtime_us(ack_frame_octets);
    let t_wait = retransmissions * ack_timeout_us + r.t_switch_us;
    let t_active =
        2 * r.t_switch_us + (retransmissions + 1) * data_air + t_wait + ack_air;
    if t_active > t_frame_us {
        return Err(CycleError::InvalidTiming {
            t_active_us: t_active,
            t_frame_us,
        });
    }
    let t_sleep = t_frame_us - t_active;
    Ok(CyclePrediction {
        t_active_us: t_active,
        t_sleep_us: t_sleep,
        e_sleep: e_sleep(t_sleep, r),
        e_switch: 2 * e_switch(r),
        e_trans: (retransmissions as u128 + 1) * e_trans(data_frame_octets, r),
        e_rec: e_rec(ack_frame_octets, r),
        e_tout: e_timeout(t_wait, r),
    })
}

/// Running per-node energy account, split by term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnergyLedger {
    pub e_sleep: Femtojoules,
    pub e_switch: Femtojoules,
    pub e_trans: Femtojoules,
    pub e_rec: Femtojoules,
    pub e_tout: Femtojoules,
    /// Completed duty cycles folded into the sleep term.
    pub cycles_counted: u64,
}

impl EnergyLedger {
    pub fn total(&self) -> Femtojoules {
        self.e_sleep + self.e_switch + self.e_trans + self.e_rec + self.e_tout
    }
}

/// Exact decimal microjoule rendering of a femtojoule amount (no float
/// round-trip): `11_520_000_000` → `"11.52"`.
pub fn microjoules_str(fj: Femtojoules) -> String {
    let whole = fj / FJ_PER_UJ;
    let frac = fj % FJ_PER_UJ;
    if frac == 0 {
        return whole.to_string();
    }
    let digits = format!("{frac:09}");
    format!("{whole}.{}", digits.trim_end_matches('0'))
}

/// Lossy float view in microjoules, for aggregate statistics.
pub fn microjoules(fj: Femtojoules) -> f64 {
    fj as f64 / FJ_PER_UJ as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    // Default profile, charges computed by hand from µs × µA × mV.
    const R: RadioParams = RadioParams {
        v_mv: 3_000,
        i_rx_ua: 19_700,
        i_tx_ua: 17_400,
        i_idle_ua: 20_000,
        i_sleep_ua: 1,
        t_byte_us: 32,
        t_switch_us: 192,
    };

    #[test]
    fn sleep_charge_is_time_by_sleep_current() {
        // 997 952 µs · 1 µA · 3000 mV.
        assert_eq!(e_sleep(997_952, &R), 2_993_856_000);
        assert_eq!(microjoules_str(e_sleep(997_952, &R)), "2.993856");
        assert_eq!(e_sleep(0, &R), 0);
    }

    #[test]
    fn switch_charge_uses_idle_current_over_switch_time() {
        assert_eq!(e_switch(&R), 11_520_000_000);
        assert_eq!(microjoules_str(e_switch(&R)), "11.52");
    }

    #[test]
    fn transmit_charge_scales_with_frame_octets() {
        // 35 octets · 32 µs · 17 400 µA · 3000 mV.
        assert_eq!(e_trans(35, &R), 58_464_000_000);
        assert_eq!(microjoules_str(e_trans(35, &R)), "58.464");
        assert_eq!(e_trans(0, &R), 0);
        assert_eq!(e_trans(70, &R), 2 * e_trans(35, &R));
    }

    #[test]
    fn receive_charge_scales_with_frame_octets() {
        assert_eq!(e_rec(4, &R), 7_564_800_000);
        assert_eq!(e_rec(11, &R), 20_803_200_000);
        assert_eq!(microjoules_str(e_rec(11, &R)), "20.8032");
    }

    #[test]
    fn listening_costs_the_same_as_receiving_for_equal_time() {
        // A 4-octet frame occupies the air for 128 µs.
        assert_eq!(e_listen(128, &R), e_rec(4, &R));
        assert_eq!(e_listen(0, &R), 0);
    }

    #[test]
    fn timeout_charge_uses_idle_current() {
        assert_eq!(e_timeout(192, &R), 11_520_000_000);
        assert_eq!(e_timeout(864, &R), 51_840_000_000);
    }

    #[test]
    fn active_charge_counts_the_switch_twice() {
        let active = e_active(
            e_switch(&R),
            e_trans(35, &R),
            e_rec(4, &R),
            e_timeout(192, &R),
        );
        assert_eq!(active, 100_588_800_000);
        assert_eq!(microjoules_str(active), "100.5888");
    }

    #[test]
    fn closed_form_cycle_matches_hand_derivation() {
        let cycle = closed_form_cycle(&R, 1_000_000, 35, 4, 0, 864).unwrap();
        // switch + tx + turnaround wait + ack + switch.
        assert_eq!(cycle.t_active_us, 2 * 192 + 1120 + 192 + 128);
        assert_eq!(cycle.t_active_us, 1_824);
        assert_eq!(cycle.t_sleep_us, 998_176);
        assert_eq!(cycle.e_sleep, 2_994_528_000);
        assert_eq!(cycle.e_switch, 23_040_000_000);
        assert_eq!(cycle.e_trans, 58_464_000_000);
        assert_eq!(cycle.e_rec, 7_564_800_000);
        assert_eq!(cycle.e_tout, 11_520_000_000);
        assert_eq!(cycle.e_total(), 103_583_328_000);
    }

    #[test]
    fn closed_form_cycle_rejects_active_time_beyond_the_frame() {
        let err = closed_form_cycle(&R, 1_800, 35, 4, 0, 864).unwrap_err();
        assert_eq!(
            err,
            CycleError::InvalidTiming {
                t_active_us: 1_824,
                t_frame_us: 1_800
            }
        );
    }

    #[test]
    fn one_retransmission_adds_a_transmit_and_a_timeout() {
        let base = closed_form_cycle(&R, 1_000_000, 35, 4, 0, 864).unwrap();
        let retry = closed_form_cycle(&R, 1_000_000, 35, 4, 1, 864).unwrap();
        assert_eq!(retry.e_trans, 2 * base.e_trans);
        assert_eq!(retry.e_tout - base.e_tout, e_timeout(864, &R));
        assert_eq!(retry.t_active_us, base.t_active_us + 1120 + 864);
    }

    #[test]
    fn run_total_sums_cycle_pairs() {
        let sleep = 2_993_856_000u128;
        let active = 100_588_800_000u128;
        let total = total_energy(std::iter::repeat((sleep, active)).take(1_000));
        assert_eq!(total, 103_582_656_000_000);
        // 103.582656 mJ, i.e. the figure usually quoted rounded: 103.583 mJ.
        assert!((microjoules(total) / 1_000.0 - 103.582656).abs() < 1e-9);
        assert_eq!(total_energy(std::iter::empty()), 0);
    }

    #[test]
    fn microjoule_strings_are_exact_decimals() {
        assert_eq!(microjoules_str(0), "0");
        assert_eq!(microjoules_str(3_000_000_000), "3");
        assert_eq!(microjoules_str(1), "0.000000001");
        assert_eq!(microjoules_str(51_840_000_000), "51.84");
    }

    #[test]
    fn ledger_total_is_the_term_sum() {
        let ledger = EnergyLedger {
            e_sleep: 1,
            e_switch: 2,
            e_trans: 3,
            e_rec: 4,
            e_tout: 5,
            cycles_counted: 9,
        };
        assert_eq!(ledger.total(), 15);
    }
}
