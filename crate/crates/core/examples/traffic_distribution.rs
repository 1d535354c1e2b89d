//! Bytes received per datacenter for each engine at the reference latencies.

use fragsim::dbmodels::{Engine, EngineConfig};
use fragsim::metrics::{coefficient_of_variation, traffic_dot};
use fragsim::sim::{SimSettings, Simulation, StopRule};
use fragsim::topology::reference_topology;
use fragsim::workload::preset;

fn main() {
    let topo = reference_topology();
    let data = topo.data_nodes();
    for e in Engine::ALL {
        let sim = Simulation::new(
            topo.clone(),
            EngineConfig::new(e),
            &data,
            preset("A").unwrap(),
            StopRule::Operations,
            SimSettings::default(),
            1.0,
        )
        .unwrap();
        let out = sim.run().unwrap();
        let received: Vec<f64> = data.iter().map(|n| out.traffic.received(n.idx()) as f64).collect();
        println!("{} (CV {:.3})", e.as_str(), coefficient_of_variation(&received));
        for (n, bytes) in data.iter().zip(&received) {
            println!("  {:<10} {:>10.1} KB", topo.node_name(*n), bytes / 1024.0);
        }
        if e == Engine::Mongodb {
            println!("{}", traffic_dot(&out.traffic));
        }
    }
}
