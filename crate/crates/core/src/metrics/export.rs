use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::{RunSummary, ThroughputTimeline, TrafficMatrix};
use crate::workload::Operation;

pub fn write_timeline_csv(path: &Path, tl: &ThroughputTimeline) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bucket_start_ms", "ops"])?;
    for (i, c) in tl.counts.iter().enumerate() {
        w.write_record([(i as u64 * tl.bucket_ms).to_string(), c.to_string()])?;
    }
    w.flush()
}

pub fn write_summary_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn read_summary(path: &Path) -> io::Result<RunSummary> {
    serde_json::from_slice(&fs::read(path)?).map_err(io::Error::other)
}

pub fn write_oplog_csv(path: &Path, ops: &[Operation]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["op_id", "kind", "key", "issued_ms", "completed_ms", "outcome", "bytes_moved"])?;
    for op in ops {
        w.write_record([
            op.id.to_string(),
            op.kind.as_str().to_string(),
            op.key.to_string(),
            format!("{:.3}", op.issued_at.as_ms()),
            op.completed_at.map(|t| format!("{:.3}", t.as_ms())).unwrap_or_default(),
            op.outcome.map(|o| o.as_str()).unwrap_or("pending").to_string(),
            op.bytes_moved.to_string(),
        ])?;
    }
    w.flush()
}

/// Undirected graph of per-traversal bytes; edge weight is KB, line width
/// grows with it.
pub fn traffic_dot(m: &TrafficMatrix) -> String {
    let n = m.nodes.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let bytes = m.hop_bytes[i][j] + m.hop_bytes[j][i];
            if bytes > 0 {
                edges.push((i, j, bytes as f64 / 1024.0));
            }
        }
    }
    let max = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let mut out = String::from("graph traffic {\n");
    for name in &m.nodes {
        let _ = writeln!(out, "  \"{name}\";");
    }
    for (i, j, kb) in edges {
        let width = if max > 0.0 { 1.0 + 7.0 * kb / max } else { 1.0 };
        let _ = writeln!(
            out,
            "  \"{}\" -- \"{}\" [weight={kb:.1}, label=\"{kb:.1} KB\", penwidth={width:.2}];",
            m.nodes[i], m.nodes[j]
        );
    }
    out.push_str("}\n");
    out
}

/// Writes timeline.csv, summary.json, traffic.dot and (optionally) oplog.csv.
pub fn export_run(
    dir: &Path,
    summary: &RunSummary,
    timeline: &ThroughputTimeline,
    traffic: &TrafficMatrix,
    oplog: Option<&[Operation]>,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_timeline_csv(&dir.join("timeline.csv"), timeline)?;
    write_summary_json(&dir.join("summary.json"), summary)?;
    fs::write(dir.join("traffic.dot"), traffic_dot(traffic))?;
    if let Some(ops) = oplog {
        write_oplog_csv(&dir.join("oplog.csv"), ops)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_structure() {
        let mut m = TrafficMatrix::new(vec!["a".into(), "b".into(), "c".into()]);
        m.hop_bytes[0][1] = 2048;
        m.hop_bytes[1][2] = 1024;
        m.hop_bytes[2][1] = 1024;
        let dot = traffic_dot(&m);
        assert!(dot.starts_with("graph traffic {"));
        assert_eq!(dot.matches(" -- ").count(), 2);
        assert_eq!(dot.lines().filter(|l| l.trim_end().ends_with("\";")).count(), 3);
        assert!(dot.contains("weight=2.0"));
    }

    #[test]
    fn timeline_rows_match_duration() {
        let dir = tempfile::tempdir().unwrap();
        let mut tl = ThroughputTimeline::new(1000);
        tl.extend_to(crate::time::SimTime::from_secs(42));
        let p = dir.path().join("t.csv");
        write_timeline_csv(&p, &tl).unwrap();
        let rows = csv::Reader::from_path(&p).unwrap().records().count();
        assert_eq!(rows, 42);
    }
}
