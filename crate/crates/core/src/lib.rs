//! Deterministic discrete-event emulator of a fragmented hybrid cloud:
//! geo-distributed nodes joined by links with their own latency and
//! bandwidth, a tinc-like rerouting mesh, and analytic models of four
//! distributed databases driven by YCSB-style workloads.
//!
//! Runnable examples live in `examples/`:
//! `reference_matrix`, `tinc_failover`, `redis_slots`, `lsf_sweep`,
//! `traffic_distribution`, `resize`, `link_churn`, `trace_replay`.

pub mod cli;
pub mod config;
pub mod dbmodels;
pub mod metrics;
pub mod router;
pub mod scenarios;
pub mod sim;
pub mod simkernel;
pub mod time;
pub mod topology;
pub mod workload;

pub use time::SimTime;
