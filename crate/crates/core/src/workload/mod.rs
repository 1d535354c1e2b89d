//! YCSB-style workloads: presets A-F and a deterministic operation stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Read,
    Update,
    Insert,
    Scan,
    #[serde(rename = "rmw")]
    ReadModifyWrite,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [
        OpKind::Read,
        OpKind::Update,
        OpKind::Insert,
        OpKind::Scan,
        OpKind::ReadModifyWrite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Read => "read",
            OpKind::Update => "update",
            OpKind::Insert => "insert",
            OpKind::Scan => "scan",
            OpKind::ReadModifyWrite => "rmw",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpMix {
    #[serde(default)]
    pub read: f64,
    #[serde(default)]
    pub update: f64,
    #[serde(default)]
    pub insert: f64,
    #[serde(default)]
    pub scan: f64,
    #[serde(default)]
    pub rmw: f64,
}

impl OpMix {
    pub fn weight(&self, kind: OpKind) -> f64 {
        match kind {
            OpKind::Read => self.read,
            OpKind::Update => self.update,
            OpKind::Insert => self.insert,
            OpKind::Scan => self.scan,
            OpKind::ReadModifyWrite => self.rmw,
        }
    }

    pub fn sum(&self) -> f64 {
        OpKind::ALL.iter().map(|&k| self.weight(k)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KeyDistribution {
    Zipfian {
        #[serde(default = "default_theta")]
        theta: f64,
    },
    /// Zipfian over recency: the newest key is the most popular.
    Latest {
        #[serde(default = "default_theta")]
        theta: f64,
    },
    Uniform,
}

fn default_theta() -> f64 {
    0.99
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub name: String,
    pub proportions: OpMix,
    pub record_count: u64,
    pub operation_count: u64,
    pub key_distribution: KeyDistribution,
    pub max_scan_len: u32,
    pub threads: u32,
    /// The operation count is issued as this many back-to-back batches.
    pub batches: u32,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("unknown workload preset `{0}` (expected A-F)")]
    UnknownPreset(String),
    #[error("workload `{name}`: {reason}")]
    Invalid { name: String, reason: String },
}

pub const PRESETS: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

pub fn preset(name: &str) -> Result<WorkloadSpec, WorkloadError> {
    let zipf = KeyDistribution::Zipfian { theta: 0.99 };
    let (mix, dist, ops) = match name.to_ascii_uppercase().as_str() {
        "A" => (OpMix { read: 0.5, update: 0.5, ..OpMix::default() }, zipf, 100_000),
        "B" => (OpMix { read: 0.95, update: 0.05, ..OpMix::default() }, zipf, 100_000),
        "C" => (OpMix { read: 1.0, ..OpMix::default() }, zipf, 100_000),
        "D" => (
            OpMix { read: 0.95, insert: 0.05, ..OpMix::default() },
            KeyDistribution::Latest { theta: 0.99 },
            100_000,
        ),
        "E" => (OpMix { scan: 0.95, insert: 0.05, ..OpMix::default() }, zipf, 10_000),
        "F" => (OpMix { read: 0.5, rmw: 0.5, ..OpMix::default() }, zipf, 100_000),
        _ => return Err(WorkloadError::UnknownPreset(name.to_string())),
    };
    Ok(WorkloadSpec {
        name: name.to_ascii_uppercase(),
        proportions: mix,
        record_count: 10_000,
        operation_count: ops,
        key_distribution: dist,
        max_scan_len: 100,
        threads: 4,
        batches: 10,
        rng_seed: 0,
    })
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |reason: String| {
            Err(WorkloadError::Invalid {
                name: self.name.clone(),
                reason,
            })
        };
        let p = &self.proportions;
        if OpKind::ALL.iter().any(|&k| !(p.weight(k) >= 0.0)) {
            return bad("proportions must be non-negative".into());
        }
        if (p.sum() - 1.0).abs() > 1e-9 {
            return bad(format!("proportions sum to {}, expected 1", p.sum()));
        }
        if self.record_count == 0 || self.operation_count == 0 || self.threads == 0 {
            return bad("record_count, operation_count and threads must be > 0".into());
        }
        if self.batches == 0 || u64::from(self.batches) > self.operation_count {
            return bad("batches must be in 1..=operation_count".into());
        }
        if p.scan > 0.0 && self.max_scan_len == 0 {
            return bad("max_scan_len must be > 0 when scans are issued".into());
        }
        match self.key_distribution {
            KeyDistribution::Zipfian { theta } | KeyDistribution::Latest { theta } if !(theta > 0.0) => {
                bad("zipfian theta must be > 0".into())
            }
            _ => Ok(()),
        }
    }

    /// Sizes of the sequential batches; they sum to `operation_count`.
    pub fn batch_sizes(&self) -> Vec<u64> {
        let b = u64::from(self.batches.max(1));
        let base = self.operation_count / b;
        let extra = self.operation_count % b;
        (0..b).map(|i| base + u64::from(i < extra)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Failed,
    TimedOut,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ok => "ok",
            Outcome::Failed => "failed",
            Outcome::TimedOut => "timed_out",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub id: u64,
    pub thread: u32,
    pub kind: OpKind,
    pub key: u64,
    pub scan_len: u32,
    pub issued_at: SimTime,
    pub completed_at: Option<SimTime>,
    pub outcome: Option<Outcome>,
    pub bytes_moved: u64,
}

/// Draws operations from a spec. The stream depends only on the spec and
/// seed, never on timing.
pub struct OpGenerator {
    mix: [(OpKind, f64); 5],
    dist: KeyDistribution,
    max_scan_len: u32,
    key_count: u64,
    zipf: Option<(u64, Zipf<f64>)>,
    rng: ChaCha8Rng,
}

impl OpGenerator {
    pub fn new(spec: &WorkloadSpec) -> Self {
        let mut acc = 0.0;
        let mix = OpKind::ALL.map(|k| {
            acc += spec.proportions.weight(k);
            (k, acc)
        });
        OpGenerator {
            mix,
            dist: spec.key_distribution,
            max_scan_len: spec.max_scan_len.max(1),
            key_count: spec.record_count,
            zipf: None,
            rng: ChaCha8Rng::seed_from_u64(spec.rng_seed),
        }
    }

    pub fn key_count(&self) -> u64 {
        self.key_count
    }

    /// Returns `(kind, key, scan_len)`; inserts take the next fresh key.
    pub fn next_op(&mut self) -> (OpKind, u64, u32) {
        let u: f64 = self.rng.random();
        let kind = self
            .mix
            .iter()
            .find(|(k, c)| u < *c && self.weight_nonzero(*k))
            .or_else(|| self.mix.iter().rev().find(|(k, _)| self.weight_nonzero(*k)))
            .map(|(k, _)| *k)
            .unwrap_or(OpKind::Read);
        match kind {
            OpKind::Insert => {
                let key = self.key_count;
                self.key_count += 1;
                (kind, key, 0)
            }
            OpKind::Scan => {
                let key = self.existing_key();
                let len = self.rng.random_range(1..=self.max_scan_len);
                (kind, key, len)
            }
            _ => (kind, self.existing_key(), 0),
        }
    }

    fn weight_nonzero(&self, kind: OpKind) -> bool {
        let i = OpKind::ALL.iter().position(|&k| k == kind).expect("known kind");
        let prev = if i == 0 { 0.0 } else { self.mix[i - 1].1 };
        self.mix[i].1 > prev
    }

    fn rank(&mut self, theta: f64) -> u64 {
        let n = self.key_count;
        if self.zipf.as_ref().is_none_or(|(m, _)| *m != n) {
            let z = Zipf::new(n as f64, theta).expect("n >= 1 and theta > 0");
            self.zipf = Some((n, z));
        }
        let z = &self.zipf.as_ref().expect("just set").1;
        (z.sample(&mut self.rng) as u64).clamp(1, n)
    }

    fn existing_key(&mut self) -> u64 {
        let n = self.key_count;
        match self.dist {
            KeyDistribution::Uniform => self.rng.random_range(0..n),
            // Popular ranks are scattered over the key space.
            KeyDistribution::Zipfian { theta } => {
                let r = self.rank(theta);
                xxhash_rust::xxh3::xxh3_64(&r.to_le_bytes()) % n
            }
            KeyDistribution::Latest { theta } => n - self.rank(theta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_core_workloads() {
        assert_eq!(preset("C").unwrap().proportions.read, 1.0);
        let a = preset("A").unwrap().proportions;
        assert_eq!((a.read, a.update), (0.5, 0.5));
        assert_eq!(preset("E").unwrap().operation_count, 10_000);
        assert_eq!(preset("d").unwrap().key_distribution, KeyDistribution::Latest { theta: 0.99 });
        assert!(matches!(preset("G"), Err(WorkloadError::UnknownPreset(_))));
        for p in PRESETS {
            preset(p).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn mix_within_one_percent() {
        for p in PRESETS {
            let spec = preset(p).unwrap();
            let mut g = OpGenerator::new(&spec);
            let n = 20_000;
            let mut counts = [0u32; 5];
            for _ in 0..n {
                let (k, _, _) = g.next_op();
                counts[OpKind::ALL.iter().position(|&x| x == k).unwrap()] += 1;
            }
            for (i, &k) in OpKind::ALL.iter().enumerate() {
                let got = f64::from(counts[i]) / f64::from(n);
                assert!((got - spec.proportions.weight(k)).abs() <= 0.01, "{p} {k:?} {got}");
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let spec = preset("A").unwrap();
        let mut a = OpGenerator::new(&spec);
        let mut b = OpGenerator::new(&spec);
        for _ in 0..1000 {
            assert_eq!(a.next_op(), b.next_op());
        }
        let mut c = OpGenerator::new(&WorkloadSpec { rng_seed: 9, ..spec });
        assert!((0..100).any(|_| a.next_op() != c.next_op()));
    }

    #[test]
    fn latest_prefers_new_keys() {
        let spec = preset("D").unwrap();
        let mut g = OpGenerator::new(&spec);
        let (mut recent, mut reads) = (0, 0);
        for _ in 0..20_000 {
            let before = g.key_count();
            let (k, key, _) = g.next_op();
            if k == OpKind::Read {
                reads += 1;
                assert!(key < before);
                if key + 100 >= before {
                    recent += 1;
                }
            }
        }
        // 100 of 10K+ keys draw well over half of all reads.
        assert!(recent * 2 > reads, "{recent}/{reads}");
    }

    #[test]
    fn keys_stay_in_range_and_batches_sum() {
        let spec = preset("E").unwrap();
        assert_eq!(spec.batch_sizes(), vec![1000; 10]);
        let odd = WorkloadSpec { operation_count: 25, batches: 10, ..spec.clone() };
        assert_eq!(odd.batch_sizes().iter().sum::<u64>(), 25);
        let mut g = OpGenerator::new(&spec);
        for _ in 0..5000 {
            let (k, key, len) = g.next_op();
            assert!(key < g.key_count());
            if k == OpKind::Scan {
                assert!((1..=100).contains(&len));
            }
        }
    }

    #[test]
    fn validation() {
        let mut s = preset("A").unwrap();
        s.proportions.read = 0.6;
        assert!(s.validate().is_err());
        let s = WorkloadSpec { threads: 0, ..preset("A").unwrap() };
        assert!(s.validate().is_err());
    }
}
