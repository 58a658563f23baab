//! JSON run configuration: one file describes a whole sweep.
//!
//! Every field has a default, so `{}` is a valid configuration (a
//! 10-node, 1000-frame sweep over both protocols, error rates 1–20% and
//! ten seeds). Scalars are accepted wherever a list is allowed:
//! `"data_rate": 31` fans out to every node, `"per_percent": 5` runs a
//! single error rate. Per-node lists must then match `n_nodes` exactly.
//!
//! Physical quantities use the units people write them in — volts,
//! milliamps, microseconds — and are converted once, on load, to the
//! integer millivolt/microamp domain the accounting runs in.
//!
//! [`SimConfig::from_json_str`] parses *and* validates; everything
//! downstream may assume a config that came out of it is coherent
//! (rates within the radio's frame budget, slots that fit the
//! contention-free period, node counts that match list lengths).

use serde::{Deserialize, Deserializer};
use thiserror::Error;

use crate::armac::{ArmacConfig, CapParams, OnDemandPoll};
use crate::baseline::{CsmaConfig, CsmaParams};
use crate::energy::RadioParams;
use crate::protocol::{Address, PacketKind, MAX_DATA_BODY};
use crate::report::Protocol;
use crate::schedule::{build_schedule, FrameLayout, SlotRequest};

/// Largest oscillator error the sweep accepts, in parts per million.
pub const MAX_SKEW_PPM: i32 = 500;

/// Configuration problems, each naming the offending field.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("configuration is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// A value that may be written as one scalar or as a full list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarOrVec<T>(pub Vec<T>);

impl<'de, T: Deserialize<'de>> Deserialize<'de> for ScalarOrVec<T> {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            One(T),
            Many(Vec<T>),
        }
        Ok(match Raw::deserialize(deserializer)? {
            Raw::One(x) => ScalarOrVec(vec![x]),
            Raw::Many(v) => ScalarOrVec(v),
        })
    }
}

impl<T: Clone> ScalarOrVec<T> {
    /// Fan a scalar out to `n` entries, or insist on exactly `n`.
    fn expand(&self, n: usize, field: &str) -> Result<Vec<T>, ConfigError> {
        match self.0.len() {
            1 => Ok(vec![self.0[0].clone(); n]),
            len if len == n => Ok(self.0.clone()),
            len => Err(invalid(
                field,
                format!("expected one value or {n} entries, got {len}"),
            )),
        }
    }
}

/// Which protocol(s) a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolChoice {
    Armac,
    Csma,
    Both,
}

impl ProtocolChoice {
    pub fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolChoice::Armac => vec![Protocol::Armac],
            ProtocolChoice::Csma => vec![Protocol::Csma],
            ProtocolChoice::Both => vec![Protocol::Armac, Protocol::Csma],
        }
    }
}

/// Transceiver profile in datasheet units (volts, milliamps).
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    /// Supply voltage in volts.
    pub v: f64,
    /// Receive current in milliamps.
    pub i_rx: f64,
    /// Transmit current in milliamps.
    pub i_tx: f64,
    /// Idle-listening current in milliamps.
    pub i_idle: f64,
    /// Sleep current in milliamps.
    pub i_sleep: f64,
    /// Airtime per octet in microseconds.
    pub t_byte_us: u64,
    /// Mode-switch / turnaround time in microseconds.
    pub t_switch_us: u64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            v: 3.0,
            i_rx: 19.7,
            i_tx: 17.4,
            i_idle: 20.0,
            i_sleep: 0.001,
            t_byte_us: 32,
            t_switch_us: 192,
        }
    }
}

/// Volts → millivolts (or mA → µA): scale by 1000 and round.
fn milli(x: f64) -> u64 {
    (x * 1000.0).round() as u64
}

impl RadioConfig {
    pub fn to_params(self) -> RadioParams {
        RadioParams {
            v_mv: milli(self.v),
            i_rx_ua: milli(self.i_rx),
            i_tx_ua: milli(self.i_tx),
            i_idle_ua: milli(self.i_idle),
            i_sleep_ua: milli(self.i_sleep),
            t_byte_us: self.t_byte_us,
            t_switch_us: self.t_switch_us,
        }
    }
}

/// Contended-access tuning (reservation protocol's contention window).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapTuning {
    pub cca_us: u64,
    pub backoff_unit_us: u64,
    pub initial_delay_div: u64,
    pub max_cca_failures: u8,
}

impl Default for CapTuning {
    fn default() -> Self {
        let p = CapParams::default();
        CapTuning {
            cca_us: p.cca_us,
            backoff_unit_us: p.backoff_unit_us,
            initial_delay_div: p.initial_delay_div,
            max_cca_failures: p.max_cca_failures,
        }
    }
}

impl CapTuning {
    fn to_params(self) -> CapParams {
        CapParams {
            cca_us: self.cca_us,
            backoff_unit_us: self.backoff_unit_us,
            initial_delay_div: self.initial_delay_div,
            max_cca_failures: self.max_cca_failures,
        }
    }
}

/// Backoff tuning for the contention-only baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsmaTuning {
    pub min_be: u8,
    pub max_be: u8,
    pub max_backoffs: u8,
    pub max_retries: u8,
    pub backoff_unit_us: u64,
    pub cca_us: u64,
}

impl Default for CsmaTuning {
    fn default() -> Self {
        let p = CsmaParams::default();
        CsmaTuning {
            min_be: p.min_be,
            max_be: p.max_be,
            max_backoffs: p.max_backoffs,
            max_retries: p.max_retries,
            backoff_unit_us: p.backoff_unit_us,
            cca_us: p.cca_us,
        }
    }
}

impl CsmaTuning {
    fn to_params(self) -> CsmaParams {
        CsmaParams {
            min_be: self.min_be,
            max_be: self.max_be,
            max_backoffs: self.max_backoffs,
            max_retries: self.max_retries,
            backoff_unit_us: self.backoff_unit_us,
            cca_us: self.cca_us,
        }
    }
}

/// One scheduled hub-initiated poll.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnDemandEntry {
    /// Measured frame index (0-based from the start of the window).
    pub frame: u32,
    /// Node index (0-based).
    pub node: usize,
    /// Octets to pull.
    pub bytes: u16,
}

/// The whole sweep description. See the module docs for semantics.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub protocol: ProtocolChoice,
    pub n_nodes: usize,
    pub n_cycles: u32,
    pub t_frame_us: u64,
    pub f_percent: u32,
    /// Packet error rates to sweep, percent.
    pub per_percent: ScalarOrVec<f64>,
    pub seeds: ScalarOrVec<u64>,
    pub radio: RadioConfig,
    /// Payload octets per node per frame.
    pub data_rate: ScalarOrVec<u16>,
    pub skew_ppm: ScalarOrVec<i32>,
    pub requested_slot_us: ScalarOrVec<u32>,
    pub jitter_us: u64,
    pub cap_len_us: u64,
    pub t_ms_us: u64,
    pub t_cp_us: u64,
    pub ack_timeout_us: u64,
    pub max_join_frames: u32,
    pub emergency_rate: f64,
    pub on_demand: Vec<OnDemandEntry>,
    /// Packet kind names exempt from random loss, e.g. `["ack"]`.
    pub per_exempt_kinds: Vec<String>,
    pub rf_busy: [bool; 3],
    pub cap: CapTuning,
    pub csma: CsmaTuning,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: ProtocolChoice::Both,
            n_nodes: 10,
            n_cycles: 1000,
            t_frame_us: 1_000_000,
            f_percent: 10,
            per_percent: ScalarOrVec((1..=20).map(f64::from).collect()),
            seeds: ScalarOrVec((1..=10).collect()),
            radio: RadioConfig::default(),
            data_rate: ScalarOrVec(vec![31]),
            skew_ppm: ScalarOrVec(vec![0]),
            requested_slot_us: ScalarOrVec(vec![0]),
            jitter_us: 0,
            cap_len_us: 50_000,
            t_ms_us: 50_000,
            t_cp_us: 1_000_000,
            ack_timeout_us: 864,
            max_join_frames: 200,
            emergency_rate: 0.0,
            on_demand: Vec::new(),
            per_exempt_kinds: Vec::new(),
            rf_busy: [false; 3],
            cap: CapTuning::default(),
            csma: CsmaTuning::default(),
        }
    }
}

/// Parse a packet-kind name as written in `per_exempt_kinds`.
pub fn parse_kind(name: &str) -> Option<PacketKind> {
    Some(match name {
        "channel" => PacketKind::Channel,
        "time_slot_request" => PacketKind::TimeSlotRequest,
        "time_slot_request_reply" => PacketKind::TimeSlotRequestReply,
        "sync_ack" => PacketKind::SyncAck,
        "data_request" => PacketKind::DataRequest,
        "ack" => PacketKind::Ack,
        "data" => PacketKind::Data,
        _ => return None,
    })
}

impl SimConfig {
    /// Parse and validate a JSON configuration.
    pub fn from_json_str(s: &str) -> Result<SimConfig, ConfigError> {
        let cfg: SimConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read, parse and validate a configuration file.
    pub fn load(path: &std::path::Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SimConfig::from_json_str(&text)
    }

    /// The frame geometry the timing fields describe.
    pub fn layout(&self) -> Result<FrameLayout, ConfigError> {
        FrameLayout::new(self.t_frame_us, self.cap_len_us, self.t_ms_us).map_err(|e| {
            invalid("t_frame_us/cap_len_us/t_ms_us", e.to_string())
        })
    }

    /// Check everything that can be checked before running.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_nodes == 0 {
            return Err(invalid("n_nodes", "at least one node is required"));
        }
        if self.n_nodes > u16::MAX as usize - 1 {
            return Err(invalid("n_nodes", "node addresses are 16-bit"));
        }
        if self.n_cycles == 0 {
            return Err(invalid("n_cycles", "at least one measured frame is required"));
        }
        if self.f_percent > 100 {
            return Err(invalid("f_percent", "guard factor is a percentage (0–100)"));
        }
        let layout = self.layout()?;
        if self.per_percent.0.is_empty() {
            return Err(invalid("per_percent", "at least one error rate is required"));
        }
        for (i, per) in self.per_percent.0.iter().enumerate() {
            if !per.is_finite() || !(0.0..=100.0).contains(per) {
                return Err(invalid(
                    format!("per_percent[{i}]"),
                    format!("error rate must be within 0–100%, got {per}"),
                ));
            }
        }
        if self.seeds.0.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let data_rate = self.data_rate.expand(self.n_nodes, "data_rate")?;
        for (i, &rate) in data_rate.iter().enumerate() {
            if rate == 0 || rate as usize > MAX_DATA_BODY {
                return Err(invalid(
                    format!("data_rate[{i}]"),
                    format!("payload must be 1–{MAX_DATA_BODY} octets, got {rate}"),
                ));
            }
        }
        let skew = self.skew_ppm.expand(self.n_nodes, "skew_ppm")?;
        for (i, &ppm) in skew.iter().enumerate() {
            if ppm.abs() > MAX_SKEW_PPM {
                return Err(invalid(
                    format!("skew_ppm[{i}]"),
                    format!("|skew| must be at most {MAX_SKEW_PPM} ppm, got {ppm}"),
                ));
            }
        }
        let requested = self
            .requested_slot_us
            .expand(self.n_nodes, "requested_slot_us")?;
        if !self.emergency_rate.is_finite() || self.emergency_rate < 0.0 {
            return Err(invalid(
                "emergency_rate",
                "per-frame arrival rate must be a finite non-negative number",
            ));
        }
        let radio = self.radio.to_params();
        if radio.v_mv == 0 || radio.i_rx_ua == 0 || radio.i_tx_ua == 0 || radio.i_idle_ua == 0
        {
            return Err(invalid("radio", "voltage and active currents must be positive"));
        }
        if radio.t_byte_us == 0 {
            return Err(invalid("radio.t_byte_us", "airtime per octet must be positive"));
        }
        let ack_floor = radio.t_switch_us + radio.airtime_us(4);
        if self.ack_timeout_us < ack_floor {
            return Err(invalid(
                "ack_timeout_us",
                format!(
                    "must cover the turnaround plus the acknowledgement airtime \
                     ({ack_floor} µs for this radio), got {}",
                    self.ack_timeout_us
                ),
            ));
        }
        if self.max_join_frames == 0 {
            return Err(invalid("max_join_frames", "the join deadline must be positive"));
        }
        if self.t_cp_us == 0 {
            return Err(invalid("t_cp_us", "the scan dwell must be positive"));
        }
        if self.cap.initial_delay_div == 0 {
            return Err(invalid("cap.initial_delay_div", "divisor must be positive"));
        }
        if self.cap.cca_us == 0 || self.cap.backoff_unit_us == 0 {
            return Err(invalid("cap", "assessment and backoff times must be positive"));
        }
        if self.csma.min_be > self.csma.max_be {
            return Err(invalid("csma.min_be", "must not exceed csma.max_be"));
        }
        if self.csma.max_be > 16 {
            return Err(invalid("csma.max_be", "backoff exponent is capped at 16"));
        }
        if self.csma.cca_us == 0 || self.csma.backoff_unit_us == 0 {
            return Err(invalid("csma", "assessment and backoff times must be positive"));
        }
        for (i, name) in self.per_exempt_kinds.iter().enumerate() {
            if parse_kind(name).is_none() {
                return Err(invalid(
                    format!("per_exempt_kinds[{i}]"),
                    format!(
                        "unknown packet kind {name:?}; expected one of channel, \
                         time_slot_request, time_slot_request_reply, sync_ack, \
                         data_request, ack, data"
                    ),
                ));
            }
        }
        for (i, entry) in self.on_demand.iter().enumerate() {
            if entry.node >= self.n_nodes {
                return Err(invalid(
                    format!("on_demand[{i}].node"),
                    format!("node index {} is out of range (n_nodes = {})", entry.node, self.n_nodes),
                ));
            }
            if entry.bytes == 0 || entry.bytes as usize > MAX_DATA_BODY {
                return Err(invalid(
                    format!("on_demand[{i}].bytes"),
                    format!("poll size must be 1–{MAX_DATA_BODY} octets, got {}", entry.bytes),
                ));
            }
            if entry.frame >= self.n_cycles {
                return Err(invalid(
                    format!("on_demand[{i}].frame"),
                    format!(
                        "frame {} lies outside the measurement window (n_cycles = {})",
                        entry.frame, self.n_cycles
                    ),
                ));
            }
        }
        // Do all requested slots actually fit the contention-free period?
        let requests: Vec<SlotRequest> = (0..self.n_nodes)
            .map(|i| SlotRequest {
                node: Address(i as u16 + 1),
                data_rate: data_rate[i],
                requested_slot_us: requested[i],
            })
            .collect();
        build_schedule(&requests, &layout, self.f_percent, &radio).map_err(|e| {
            invalid(
                "n_nodes/data_rate/requested_slot_us",
                format!("the contention-free period cannot hold this network: {e}"),
            )
        })?;
        Ok(())
    }

    /// Error rates to sweep, ascending and deduplicated.
    pub fn pers(&self) -> Vec<f64> {
        let mut pers = self.per_percent.0.clone();
        pers.sort_by(f64::total_cmp);
        pers.dedup();
        pers
    }

    /// Seeds to sweep, ascending and deduplicated.
    pub fn seed_list(&self) -> Vec<u64> {
        let mut seeds = self.seeds.0.clone();
        seeds.sort_unstable();
        seeds.dedup();
        seeds
    }

    /// Every (protocol, error rate, seed) cell of the sweep, in run
    /// order.
    pub fn cells(&self) -> Vec<(Protocol, f64, u64)> {
        let mut cells = Vec::new();
        for protocol in self.protocol.protocols() {
            for &per in &self.pers() {
                for &seed in &self.seed_list() {
                    cells.push((protocol, per, seed));
                }
            }
        }
        cells
    }

    fn exempt_kinds(&self) -> Vec<PacketKind> {
        self.per_exempt_kinds
            .iter()
            .map(|name| parse_kind(name).expect("validated config"))
            .collect()
    }

    /// Build the reservation-protocol cell for one (per, seed) pair.
    ///
    /// The config must have passed [`SimConfig::validate`].
    pub fn armac_cell(&self, per_percent: f64, seed: u64, trace: bool) -> ArmacConfig {
        let n = self.n_nodes;
        ArmacConfig {
            n_nodes: n,
            n_cycles: self.n_cycles,
            layout: self.layout().expect("validated config"),
            f_percent: self.f_percent,
            per_percent,
            seed,
            radio: self.radio.to_params(),
            data_rate: self.data_rate.expand(n, "data_rate").expect("validated config"),
            skew_ppm: self.skew_ppm.expand(n, "skew_ppm").expect("validated config"),
            requested_slot_us: self
                .requested_slot_us
                .expand(n, "requested_slot_us")
                .expect("validated config"),
            jitter_us: self.jitter_us,
            cap: self.cap.to_params(),
            ack_timeout_us: self.ack_timeout_us,
            t_cp_us: self.t_cp_us,
            max_join_frames: self.max_join_frames,
            emergency_rate: self.emergency_rate,
            on_demand: self
                .on_demand
                .iter()
                .map(|e| OnDemandPoll {
                    frame: e.frame,
                    node: e.node,
                    bytes: e.bytes,
                })
                .collect(),
            per_exempt_kinds: self.exempt_kinds(),
            rf_busy: self.rf_busy,
            trace,
        }
    }

    /// Build the baseline cell for one (per, seed) pair.
    ///
    /// The config must have passed [`SimConfig::validate`].
    pub fn csma_cell(&self, per_percent: f64, seed: u64, trace: bool) -> CsmaConfig {
        let n = self.n_nodes;
        CsmaConfig {
            n_nodes: n,
            n_cycles: self.n_cycles,
            t_frame_us: self.t_frame_us,
            per_percent,
            seed,
            radio: self.radio.to_params(),
            data_rate: self.data_rate.expand(n, "data_rate").expect("validated config"),
            skew_ppm: self.skew_ppm.expand(n, "skew_ppm").expect("validated config"),
            ack_timeout_us: self.ack_timeout_us,
            csma: self.csma.to_params(),
            per_exempt_kinds: self.exempt_kinds(),
            trace,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn an_empty_object_is_the_default_sweep() {
        let cfg = SimConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg.n_nodes, 10);
        assert_eq!(cfg.n_cycles, 1000);
        assert_eq!(cfg.protocol, ProtocolChoice::Both);
        assert_eq!(cfg.pers().len(), 20);
        assert_eq!(cfg.seed_list().len(), 10);
        assert_eq!(cfg.cells().len(), 2 * 20 * 10);
        let radio = cfg.radio.to_params();
        assert_eq!(radio.v_mv, 3_000);
        assert_eq!(radio.i_rx_ua, 19_700);
        assert_eq!(radio.i_tx_ua, 17_400);
        assert_eq!(radio.i_idle_ua, 20_000);
        assert_eq!(radio.i_sleep_ua, 1);
    }

    #[test]
    fn scalars_fan_out_and_lists_must_match() {
        let cfg = SimConfig::from_json_str(
            r#"{"n_nodes": 3, "data_rate": 40, "skew_ppm": [-50, 0, 50]}"#,
        )
        .unwrap();
        let cell = cfg.armac_cell(1.0, 1, false);
        assert_eq!(cell.data_rate, vec![40, 40, 40]);
        assert_eq!(cell.skew_ppm, vec![-50, 0, 50]);

        let err = SimConfig::from_json_str(r#"{"n_nodes": 3, "data_rate": [31, 31]}"#)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("data_rate"), "got: {msg}");
        assert!(msg.contains("3"), "got: {msg}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = SimConfig::from_json_str(r#"{"n_noodles": 4}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Json(_)));
    }

    #[test]
    fn out_of_range_values_name_their_field() {
        for (json, needle) in [
            (r#"{"n_nodes": 0}"#, "n_nodes"),
            (r#"{"data_rate": 124}"#, "data_rate[0]"),
            (r#"{"data_rate": 0}"#, "data_rate[0]"),
            (r#"{"skew_ppm": 501}"#, "skew_ppm[0]"),
            (r#"{"per_percent": 101}"#, "per_percent[0]"),
            (r#"{"per_percent": []}"#, "per_percent"),
            (r#"{"emergency_rate": -1}"#, "emergency_rate"),
            (r#"{"ack_timeout_us": 100}"#, "ack_timeout_us"),
            (r#"{"csma": {"min_be": 6}}"#, "csma.min_be"),
            (r#"{"per_exempt_kinds": ["akc"]}"#, "per_exempt_kinds[0]"),
            (
                r#"{"on_demand": [{"frame": 0, "node": 10, "bytes": 5}]}"#,
                "on_demand[0].node",
            ),
            (
                r#"{"n_cycles": 5, "on_demand": [{"frame": 7, "node": 0, "bytes": 5}]}"#,
                "on_demand[0].frame",
            ),
        ] {
            let err = SimConfig::from_json_str(json).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(needle), "{json} should blame {needle}, got: {msg}");
        }
    }

    #[test]
    fn an_overfull_contention_free_period_is_caught_upfront() {
        let err = SimConfig::from_json_str(r#"{"n_nodes": 300, "data_rate": 123}"#)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("contention-free period"), "got: {msg}");
    }

    #[test]
    fn cells_enumerate_protocol_then_rate_then_seed() {
        let cfg = SimConfig::from_json_str(
            r#"{"protocol": "both", "per_percent": [5, 1], "seeds": [2, 1]}"#,
        )
        .unwrap();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[0], (Protocol::Armac, 1.0, 1));
        assert_eq!(cells[1], (Protocol::Armac, 1.0, 2));
        assert_eq!(cells[2], (Protocol::Armac, 5.0, 1));
        assert_eq!(cells[4], (Protocol::Csma, 1.0, 1));
        assert_eq!(cells[7], (Protocol::Csma, 5.0, 2));
    }

    #[test]
    fn cell_builders_carry_every_knob_across() {
        let cfg = SimConfig::from_json_str(
            r#"{
                "protocol": "armac",
                "n_nodes": 2,
                "n_cycles": 40,
                "jitter_us": 7,
                "emergency_rate": 0.25,
                "per_exempt_kinds": ["ack", "sync_ack"],
                "rf_busy": [true, false, false],
                "on_demand": [{"frame": 3, "node": 1, "bytes": 20}],
                "cap": {"max_cca_failures": 6},
                "csma": {"max_retries": 5}
            }"#,
        )
        .unwrap();
        let a = cfg.armac_cell(2.5, 9, true);
        assert_eq!(a.per_percent, 2.5);
        assert_eq!(a.seed, 9);
        assert_eq!(a.jitter_us, 7);
        assert_eq!(a.emergency_rate, 0.25);
        assert_eq!(a.cap.max_cca_failures, 6);
        assert_eq!(a.rf_busy, [true, false, false]);
        assert_eq!(
            a.per_exempt_kinds,
            vec![PacketKind::Ack, PacketKind::SyncAck]
        );
        assert_eq!(a.on_demand.len(), 1);
        assert!(a.trace);
        let c = cfg.csma_cell(2.5, 9, false);
        assert_eq!(c.csma.max_retries, 5);
        assert_eq!(c.per_exempt_kinds.len(), 2);
        assert!(!c.trace);
    }

    #[test]
    fn partial_nested_objects_keep_the_other_defaults() {
        let cfg = SimConfig::from_json_str(r#"{"radio": {"i_rx": 21.5}}"#).unwrap();
        let radio = cfg.radio.to_params();
        assert_eq!(radio.i_rx_ua, 21_500);
        assert_eq!(radio.i_tx_ua, 17_400, "unmentioned fields stay default");
        assert_eq!(radio.t_switch_us, 192);
    }
}
