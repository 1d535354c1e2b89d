//! The built-in 8-datacenter latency/bandwidth matrix.

use serde::{Deserialize, Serialize};

pub const REGIONS: [&str; 8] = [
    "Melbourne",
    "Sydney",
    "Canberra",
    "Pune",
    "Singapore",
    "Seoul",
    "Dubai",
    "Virginia",
];

// Row i holds the one-way latency (ms) to regions 0..i.
const LATENCY_LOWER: [&[f64]; 8] = [
    &[],
    &[189.0],
    &[181.0, 142.0],
    &[223.0, 81.0, 64.0],
    &[195.0, 35.0, 109.0, 49.0],
    &[207.0, 172.0, 156.0, 93.0, 153.0],
    &[208.0, 168.0, 152.0, 149.0, 147.0, 7.0],
    &[219.0, 165.0, 148.0, 109.0, 142.0, 12.0, 14.0],
];

// Row i holds the download bandwidth (Mb/s) to regions i+1..8.
const BANDWIDTH_UPPER: [&[f64]; 8] = [
    &[948.0, 990.0, 171.0, 192.0, 164.0, 151.0, 114.0],
    &[995.0, 167.0, 206.0, 163.0, 140.0, 121.0],
    &[173.0, 255.0, 157.0, 138.0, 117.0],
    &[489.0, 220.0, 625.0, 119.0],
    &[372.0, 271.0, 111.0],
    &[174.0, 127.0],
    &[128.0],
    &[],
];

/// Observed range of upload bandwidth between the datacenters.
pub const UPLOAD_RANGE_MBPS: (f64, f64) = (97.0, 992.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReference {
    pub latency_ms: f64,
    pub down_bw_mbps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMatrix {
    pub regions: Vec<String>,
    /// Symmetric; zero diagonal.
    pub latency_ms: Vec<Vec<f64>>,
    /// Symmetric; the diagonal is unused and stored as zero.
    pub down_bw_mbps: Vec<Vec<f64>>,
}

impl ReferenceMatrix {
    pub fn index_of(&self, region: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.eq_ignore_ascii_case(region))
    }

    pub fn lookup(&self, a: &str, b: &str) -> Option<PairReference> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        Some(PairReference {
            latency_ms: self.latency_ms[i][j],
            down_bw_mbps: self.down_bw_mbps[i][j],
        })
    }

    /// Unordered region pairs `(i, j)` with `i < j`, in row order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.regions.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }
}

pub fn builtin_reference_matrix() -> ReferenceMatrix {
    let n = REGIONS.len();
    let mut latency = vec![vec![0.0; n]; n];
    let mut bw = vec![vec![0.0; n]; n];
    for (i, row) in LATENCY_LOWER.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            latency[i][j] = v;
            latency[j][i] = v;
        }
    }
    for (i, row) in BANDWIDTH_UPPER.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            bw[i][j] = v;
            bw[j][i] = v;
        }
    }
    ReferenceMatrix {
        regions: REGIONS.iter().map(|s| s.to_string()).collect(),
        latency_ms: latency,
        down_bw_mbps: bw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_entries() {
        let m = builtin_reference_matrix();
        assert_eq!(m.lookup("Sydney", "Melbourne").unwrap().latency_ms, 189.0);
        assert_eq!(m.lookup("Melbourne", "Sydney").unwrap().down_bw_mbps, 948.0);
        assert_eq!(m.lookup("Melbourne", "Melbourne").unwrap().latency_ms, 0.0);
        assert_eq!(m.lookup("Dubai", "Virginia").unwrap().down_bw_mbps, 128.0);
        assert_eq!(m.lookup("Seoul", "Dubai").unwrap().latency_ms, 7.0);
        assert!(m.lookup("Atlantis", "Sydney").is_none());
    }

    #[test]
    fn shape() {
        let m = builtin_reference_matrix();
        let lat: Vec<f64> = m.pairs().map(|(i, j)| m.latency_ms[i][j]).collect();
        assert_eq!(lat.len(), 28);
        assert!(lat.iter().all(|&l| (7.0..=223.0).contains(&l)));
        assert_eq!(lat.iter().cloned().fold(f64::MAX, f64::min), 7.0);
        assert_eq!(lat.iter().cloned().fold(0.0, f64::max), 223.0);
        for i in 0..8 {
            assert_eq!(m.latency_ms[i][i], 0.0);
            for j in 0..8 {
                assert_eq!(m.latency_ms[i][j], m.latency_ms[j][i]);
                assert_eq!(m.down_bw_mbps[i][j], m.down_bw_mbps[j][i]);
                if i != j {
                    assert!(m.down_bw_mbps[i][j] > 0.0);
                }
            }
        }
    }
}
