//! Record an event trace, then recompute its hash from the file.

use fragsim::dbmodels::{Engine, EngineConfig};
use fragsim::sim::{SimSettings, Simulation, StopRule};
use fragsim::simkernel::trace_hash_of_file;
use fragsim::topology::reference_topology;
use fragsim::workload::preset;

fn main() {
    let dir = std::env::temp_dir().join("fragsim-trace-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("redis-C.ndjson");
    let topo = reference_topology();
    let members = topo.data_nodes();
    let settings = SimSettings {
        trace_path: Some(path.clone()),
        ..SimSettings::default()
    };
    let sim = Simulation::new(
        topo,
        EngineConfig::new(Engine::Redis),
        &members,
        preset("C").unwrap(),
        StopRule::Operations,
        settings,
        1.0,
    )
    .unwrap();
    let out = sim.run().unwrap();
    let (hash, events) = trace_hash_of_file(&path).unwrap();
    println!("{}: {events} events", path.display());
    println!("run hash    {}", out.summary.trace_hash);
    println!("replay hash {hash}");
    assert_eq!(hash, out.summary.trace_hash);
}
