//! Per-run result records and their CSV renderings.
//!
//! A sweep produces one [`CellResult`] per (protocol, loss rate, seed)
//! cell; each holds one [`NodeReport`] per sensor node. Two files are
//! rendered from a batch of cells:
//!
//! * `runs.csv` — one row per node per cell, energy terms as exact
//!   decimal microjoule strings plus the raw traffic counters;
//! * `summary.csv` — one row per (loss rate, protocol), mean and sample
//!   standard deviation of the cell and per-node energy in millijoules.
//!
//! Rendering is deliberately arithmetic-free on the energy side (the
//! ledgers are integers, formatted exactly), so identical runs produce
//! byte-identical files.

use crate::energy::{microjoules, microjoules_str, EnergyLedger, Femtojoules};

/// Which medium-access protocol produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Armac,
    Csma,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::Armac => "armac",
            Protocol::Csma => "csma",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Traffic counters for one node over the measurement window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeStats {
    /// Data transmissions attempted (scheduled, retried, emergency and
    /// polled traffic alike).
    pub sent: u64,
    /// Data deliveries registered by the hub (duplicates from lost
    /// acknowledgements are not re-counted).
    pub delivered: u64,
    /// Transmission attempts destroyed by a collision.
    pub collided: u64,
    /// Extra in-slot attempts after a missing acknowledgement.
    pub retried: u64,
    /// Correcting acknowledgements the hub sent this node.
    pub sync_acks: u64,
    /// Frames elapsed from power-on until the node held a slot.
    pub join_latency_frames: u32,
    /// Hub-initiated polls that were given up after their retry budget.
    pub od_abandoned: u32,
}

/// One node's complete outcome for a cell.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeReport {
    pub ledger: EnergyLedger,
    pub stats: NodeStats,
}

/// Everything one simulation cell produced.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub protocol: Protocol,
    /// Packet-error rate of the cell, in percent (as configured).
    pub per_percent: f64,
    pub seed: u64,
    pub nodes: Vec<NodeReport>,
    /// Collisions observed inside the contention-free period.
    pub cfp_collisions: u64,
    /// Collisions observed during contention access.
    pub cap_collisions: u64,
    /// Set when the cell never reached its measurement window.
    pub aborted: Option<String>,
}

impl CellResult {
    /// Total measured energy across all nodes.
    pub fn total_fj(&self) -> Femtojoules {
        self.nodes.iter().map(|n| n.ledger.total()).sum()
    }
}

/// Fixed column order of `runs.csv`.
pub const RUNS_HEADER: &str = "protocol,per_percent,seed,node,e_sleep_uj,e_switch_uj,\
e_trans_uj,e_rec_uj,e_tout_uj,e_total_uj,sent,delivered,collided,retried,sync_acks,\
join_latency_frames,od_abandoned";

/// Fixed column order of `summary.csv`.
pub const SUMMARY_HEADER: &str = "per_percent,protocol,mean_total_energy_mj,\
stddev_total_energy_mj,mean_per_node_energy_mj,stddev_per_node_energy_mj";

/// Sort cells into canonical reporting order: protocol, then loss rate,
/// then seed. Rendering assumes this order.
pub fn sort_cells(cells: &mut [CellResult]) {
    cells.sort_by(|a, b| {
        a.protocol
            .cmp(&b.protocol)
            .then(a.per_percent.total_cmp(&b.per_percent))
            .then(a.seed.cmp(&b.seed))
    });
}

fn millijoules(fj: Femtojoules) -> f64 {
    microjoules(fj) / 1_000.0
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for a single
/// sample).
fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Render `runs.csv` from cells already in canonical order. Aborted cells
/// carry no measurements and are skipped.
pub fn render_runs_csv(cells: &[CellResult]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for cell in cells.iter().filter(|c| c.aborted.is_none()) {
        for (idx, node) in cell.nodes.iter().enumerate() {
            let l = &node.ledger;
            let s = &node.stats;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                cell.protocol,
                cell.per_percent,
                cell.seed,
                idx,
                microjoules_str(l.e_sleep),
                microjoules_str(l.e_switch),
                microjoules_str(l.e_trans),
                microjoules_str(l.e_rec),
                microjoules_str(l.e_tout),
                microjoules_str(l.total()),
                s.sent,
                s.delivered,
                s.collided,
                s.retried,
                s.sync_acks,
                s.join_latency_frames,
                s.od_abandoned,
            ));
        }
    }
    out
}

/// Render `summary.csv`: one row per (loss rate, protocol) aggregated
/// over seeds (cell totals) and over seeds × nodes (per-node totals).
/// Rows are ordered by loss rate, then protocol.
pub fn render_summary_csv(cells: &[CellResult]) -> String {
    let mut keys: Vec<(f64, Protocol)> = Vec::new();
    for cell in cells.iter().filter(|c| c.aborted.is_none()) {
        let key = (cell.per_percent, cell.protocol);
        if !keys
            .iter()
            .any(|k| k.0.total_cmp(&key.0).is_eq() && k.1 == key.1)
        {
            keys.push(key);
        }
    }
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (per, proto) in keys {
        let group: Vec<&CellResult> = cells
            .iter()
            .filter(|c| {
                c.aborted.is_none() && c.protocol == proto && c.per_percent.total_cmp(&per).is_eq()
            })
            .collect();
        let cell_totals: Vec<f64> = group.iter().map(|c| millijoules(c.total_fj())).collect();
        let node_totals: Vec<f64> = group
            .iter()
            .flat_map(|c| c.nodes.iter().map(|n| millijoules(n.ledger.total())))
            .collect();
        let (mean_cell, sd_cell) = mean_stddev(&cell_totals);
        let (mean_node, sd_node) = mean_stddev(&node_totals);
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            per, proto, mean_cell, sd_cell, mean_node, sd_node
        ));
    }
    out
}
