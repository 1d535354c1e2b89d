use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::Xxh3;

use super::EventKind;
use crate::time::SimTime;

/// One processed event. `a`, `b`, `c` carry kind-specific detail
/// (message id, node, link, thread, ...).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub t_us: u64,
    pub seq: u64,
    pub kind: EventKind,
    pub a: u64,
    pub b: u64,
    pub c: u64,
}

impl TraceRecord {
    pub fn new(t: SimTime, seq: u64, kind: EventKind, a: u64, b: u64, c: u64) -> Self {
        TraceRecord {
            t: t.as_ms(),
            t_us: t.as_micros(),
            seq,
            kind,
            a,
            b,
            c,
        }
    }

    fn feed(&self, h: &mut Xxh3) {
        let mut buf = [0u8; 41];
        buf[0..8].copy_from_slice(&self.t_us.to_le_bytes());
        buf[8..16].copy_from_slice(&self.seq.to_le_bytes());
        buf[16] = self.kind.code();
        buf[17..25].copy_from_slice(&self.a.to_le_bytes());
        buf[25..33].copy_from_slice(&self.b.to_le_bytes());
        buf[33..41].copy_from_slice(&self.c.to_le_bytes());
        h.update(&buf);
    }
}

/// Streams records into a running hash and, optionally, an NDJSON file.
pub struct TraceRecorder {
    hasher: Xxh3,
    count: u64,
    sink: Option<BufWriter<File>>,
}

impl Default for TraceRecorder {
    fn default() -> Self {
        TraceRecorder {
            hasher: Xxh3::new(),
            count: 0,
            sink: None,
        }
    }
}

impl TraceRecorder {
    pub fn with_file(path: &Path) -> io::Result<Self> {
        Ok(TraceRecorder {
            sink: Some(BufWriter::new(File::create(path)?)),
            ..Default::default()
        })
    }

    pub fn record(&mut self, rec: TraceRecord) -> io::Result<()> {
        rec.feed(&mut self.hasher);
        self.count += 1;
        if let Some(w) = &mut self.sink {
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn hash(&self) -> String {
        format!("{:032x}", self.hasher.digest128())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match &mut self.sink {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }
}

/// Recomputes the hash of an NDJSON trace, returning it with the record count.
pub fn trace_hash_of_file(path: &Path) -> io::Result<(String, u64)> {
    let mut rec = TraceRecorder::default();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TraceRecord = serde_json::from_str(&line).map_err(io::Error::other)?;
        rec.record(r)?;
    }
    Ok((rec.hash(), rec.count()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_replay_matches_live_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ndjson");
        let mut live = TraceRecorder::with_file(&p).unwrap();
        for i in 0..50 {
            live.record(TraceRecord::new(SimTime::from_micros(i * 7), i, EventKind::Timer, i, 2, 3))
                .unwrap();
        }
        live.flush().unwrap();
        let (h, n) = trace_hash_of_file(&p).unwrap();
        assert_eq!(h, live.hash());
        assert_eq!(n, 50);
        assert_ne!(h, TraceRecorder::default().hash());
    }
}
