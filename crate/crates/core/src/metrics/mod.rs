//! Throughput timelines, traffic matrices, run summaries and normalization.

mod export;

use serde::{Deserialize, Serialize};

use crate::simkernel::LinkCounters;
use crate::time::SimTime;

pub use export::{export_run, read_summary, traffic_dot, write_oplog_csv, write_summary_json, write_timeline_csv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficClass {
    Request,
    Response,
    Replication,
    Gossip,
    Bulk,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 5] = [
        TrafficClass::Request,
        TrafficClass::Response,
        TrafficClass::Replication,
        TrafficClass::Gossip,
        TrafficClass::Bulk,
    ];

    fn idx(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputTimeline {
    pub bucket_ms: u64,
    pub counts: Vec<u64>,
}

impl ThroughputTimeline {
    pub fn new(bucket_ms: u64) -> Self {
        ThroughputTimeline {
            bucket_ms: bucket_ms.max(1),
            counts: Vec::new(),
        }
    }

    fn bucket(&self, t: SimTime) -> usize {
        (t.as_micros() / (self.bucket_ms * 1_000)) as usize
    }

    pub fn record(&mut self, t: SimTime) {
        let b = self.bucket(t);
        if self.counts.len() <= b {
            self.counts.resize(b + 1, 0);
        }
        self.counts[b] += 1;
    }

    /// Pads with empty buckets so the timeline covers `[0, end)`.
    pub fn extend_to(&mut self, end: SimTime) {
        let n = (end.as_micros().div_ceil(self.bucket_ms * 1_000)) as usize;
        if self.counts.len() < n {
            self.counts.resize(n, 0);
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Maximal runs of empty buckets lasting at least `threshold`, counted
    /// only inside `[active_from, active_to)` when operations were pending.
    pub fn unresponsive_windows(&self, threshold: SimTime, active_from: SimTime, active_to: SimTime) -> Vec<Window> {
        let lo = self.bucket(active_from);
        let hi = self.bucket(active_to).min(self.counts.len());
        let mut out = Vec::new();
        let mut run_start: Option<usize> = None;
        for b in lo..=hi {
            let empty = b < hi && self.counts.get(b).copied().unwrap_or(0) == 0;
            match (empty, run_start) {
                (true, None) => run_start = Some(b),
                (false, Some(s)) => {
                    let len_ms = (b - s) as u64 * self.bucket_ms;
                    if len_ms * 1_000 >= threshold.as_micros() {
                        out.push(Window {
                            start_ms: s as u64 * self.bucket_ms,
                            len_ms,
                        });
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start_ms: u64,
    pub len_ms: u64,
}

impl Window {
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.len_ms
    }
}

/// Bytes between nodes: per traversal (what a NIC would count) and end to
/// end per message, plus the per-link breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficMatrix {
    pub nodes: Vec<String>,
    /// `hop_bytes[src][dst]`, one entry per link traversal.
    pub hop_bytes: Vec<Vec<u64>>,
    /// `flow_bytes[src][dst]`, message source to final destination.
    pub flow_bytes: Vec<Vec<u64>>,
    /// Received end-to-end bytes per node, by traffic class.
    pub received_by_class: Vec<[u64; 5]>,
    /// Received synchronous request bytes of write operations, per node.
    pub write_request_bytes: Vec<u64>,
    pub links: Vec<LinkTraffic>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkTraffic {
    pub link: String,
    pub a: String,
    pub b: String,
    #[serde(flatten)]
    pub counters: LinkCounters,
}

impl TrafficMatrix {
    pub fn new(nodes: Vec<String>) -> Self {
        let n = nodes.len();
        TrafficMatrix {
            nodes,
            hop_bytes: vec![vec![0; n]; n],
            flow_bytes: vec![vec![0; n]; n],
            received_by_class: vec![[0; 5]; n],
            write_request_bytes: vec![0; n],
            links: Vec::new(),
        }
    }

    pub fn record_flow(&mut self, src: usize, dst: usize, bytes: u64, class: TrafficClass, write: bool) {
        self.flow_bytes[src][dst] += bytes;
        self.received_by_class[dst][class.idx()] += bytes;
        if write && class == TrafficClass::Request {
            self.write_request_bytes[dst] += bytes;
        }
    }

    pub fn received(&self, node: usize) -> u64 {
        self.received_by_class[node].iter().sum()
    }

    pub fn hop_total(&self) -> u64 {
        self.hop_bytes.iter().flatten().sum()
    }

    pub fn link_delivered_total(&self) -> u64 {
        self.links.iter().map(|l| l.counters.bytes_delivered).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.links.iter().map(|l| l.counters.bytes_sent).sum()
    }
}

/// Coefficient of variation (population standard deviation over mean).
pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettleEvent {
    pub node: String,
    pub kind: String,
    pub start_ms: f64,
    pub duration_ms: f64,
    pub bulk_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub ops: u64,
    pub start_ms: f64,
    pub end_ms: f64,
    pub throughput_ops_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub engine: String,
    pub workload: String,
    pub lsf: f64,
    pub seed: u64,
    pub total_ops: u64,
    pub ok_ops: u64,
    pub failed_ops: u64,
    pub timed_out_ops: u64,
    pub wall_virtual_ms: f64,
    pub throughput_ops_s: f64,
    #[serde(rename = "total_MB_transferred")]
    pub total_mb_transferred: f64,
    pub settle_events: Vec<SettleEvent>,
    pub unresponsive_windows: Vec<Window>,
    pub batches: Vec<BatchSummary>,
    pub events_processed: u64,
    pub trace_hash: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("sweep has no run at LSF 1.0 (5X) to normalize against")]
    MissingBaseline,
    #[error("baseline value at 5X is zero")]
    ZeroBaseline,
}

fn normalize(points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, MetricsError> {
    let base = points
        .iter()
        .find(|(lsf, _)| (*lsf - 1.0).abs() < 1e-9)
        .map(|p| p.1)
        .ok_or(MetricsError::MissingBaseline)?;
    if base == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(points.iter().map(|&(lsf, v)| (lsf, v / base)).collect())
}

/// Throughput at each LSF over throughput at 5X.
pub fn normalized_throughput(sweep: &[RunSummary]) -> Result<Vec<(f64, f64)>, MetricsError> {
    normalize(&sweep.iter().map(|s| (s.lsf, s.throughput_ops_s)).collect::<Vec<_>>())
}

/// Transferred data at each LSF over transferred data at 5X.
pub fn normalized_transferred(sweep: &[RunSummary]) -> Result<Vec<(f64, f64)>, MetricsError> {
    normalize(&sweep.iter().map(|s| (s.lsf, s.total_mb_transferred)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(lsf: f64, tp: f64) -> RunSummary {
        RunSummary {
            engine: "x".into(),
            workload: "A".into(),
            lsf,
            seed: 0,
            total_ops: 1,
            ok_ops: 1,
            failed_ops: 0,
            timed_out_ops: 0,
            wall_virtual_ms: 1.0,
            throughput_ops_s: tp,
            total_mb_transferred: tp * 2.0,
            settle_events: vec![],
            unresponsive_windows: vec![],
            batches: vec![],
            events_processed: 0,
            trace_hash: String::new(),
        }
    }

    #[test]
    fn normalization() {
        let sweep = [summary(0.2, 150.0), summary(1.0, 50.0)];
        let r = normalized_throughput(&sweep).unwrap();
        assert_eq!(r, [(0.2, 3.0), (1.0, 1.0)]);
        assert_eq!(normalized_transferred(&sweep).unwrap()[1].1, 1.0);
        assert_eq!(normalized_throughput(&sweep[..1]), Err(MetricsError::MissingBaseline));
        assert_eq!(
            normalized_throughput(&[summary(1.0, 0.0)]),
            Err(MetricsError::ZeroBaseline)
        );
    }

    #[test]
    fn timeline_buckets_and_windows() {
        let mut tl = ThroughputTimeline::new(1000);
        for s in [0u64, 1, 2, 9, 10] {
            tl.record(SimTime::from_millis(s * 1000 + 500));
        }
        tl.extend_to(SimTime::from_secs(12));
        assert_eq!(tl.counts.len(), 12);
        assert_eq!(tl.total(), 5);
        let w = tl.unresponsive_windows(SimTime::from_secs(5), SimTime::ZERO, SimTime::from_secs(12));
        assert_eq!(w, [Window { start_ms: 3000, len_ms: 6000 }]);
        // Trailing idle time outside the active span is not a window.
        let w = tl.unresponsive_windows(SimTime::from_secs(1), SimTime::ZERO, SimTime::from_secs(11));
        assert_eq!(w.len(), 1);
        let w = tl.unresponsive_windows(SimTime::from_secs(7), SimTime::ZERO, SimTime::from_secs(12));
        assert!(w.is_empty());
    }

    #[test]
    fn cv() {
        assert_eq!(coefficient_of_variation(&[2.0, 2.0, 2.0]), 0.0);
        let c = coefficient_of_variation(&[1.0, 3.0]);
        assert!((c - 0.5).abs() < 1e-12);
    }
}
