//! Shrink a cluster node by node, grow it back, then run the full-size
//! baseline.

use fragsim::dbmodels::{Engine, EngineConfig};
use fragsim::scenarios::{run_resize, ScenarioKind, ScenarioSpec};
use fragsim::sim::SimSettings;
use fragsim::topology::reference_topology;
use fragsim::workload::preset;

fn main() {
    let engine: Engine = std::env::args().nth(1).unwrap_or_else(|| "cassandra".into()).parse().unwrap();
    let spec = ScenarioSpec {
        kind: ScenarioKind::Resize,
        ..ScenarioSpec::default()
    };
    let runs = run_resize(
        &reference_topology(),
        &EngineConfig::new(engine),
        &preset("A").unwrap(),
        &spec,
        &SimSettings::default(),
    )
    .unwrap();
    for r in &runs {
        let s = &r.outcome.summary;
        println!("{}: {:.2} ops/s, ends with {:?}", r.scenario, s.throughput_ops_s, r.outcome.final_members);
        for e in &s.settle_events {
            println!(
                "  {} {} at {:.0}s settles in {:.1}s moving {} KB",
                e.kind,
                e.node,
                e.start_ms / 1000.0,
                e.duration_ms / 1000.0,
                e.bulk_bytes / 1024
            );
        }
    }
}
