//! Throughput and traffic across latency scale factors for one engine.
//!
//! `cargo run --release --example lsf_sweep -- mongodb B`

use fragsim::dbmodels::{Engine, EngineConfig};
use fragsim::scenarios::{run_lsf_sweep, sweep_series, ScenarioSpec};
use fragsim::sim::SimSettings;
use fragsim::topology::reference_topology;
use fragsim::workload::preset;

fn main() {
    let mut args = std::env::args().skip(1);
    let engine: Engine = args.next().unwrap_or_else(|| "cassandra".into()).parse().unwrap();
    let workload = preset(&args.next().unwrap_or_else(|| "A".into())).unwrap();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let runs = run_lsf_sweep(
        &reference_topology(),
        &EngineConfig::new(engine),
        &[workload],
        &ScenarioSpec::default(),
        &SimSettings::default(),
        threads,
    )
    .unwrap();
    for r in &runs {
        let s = &r.outcome.summary;
        println!("lsf {:.1}: {:8.2} ops/s {:8.1} MB", r.lsf, s.throughput_ops_s, s.total_mb_transferred);
    }
    let summaries: Vec<_> = runs.iter().map(|r| r.outcome.summary.clone()).collect();
    let series = sweep_series(engine, &runs[0].workload, &summaries).unwrap();
    println!("{}", serde_json::to_string_pretty(&series).unwrap());
}
