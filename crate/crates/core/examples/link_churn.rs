//! Remove mesh links one at a time and report how each engine copes.

use fragsim::dbmodels::{Engine, EngineConfig};
use fragsim::scenarios::{run_link_churn, ScenarioKind, ScenarioSpec};
use fragsim::sim::SimSettings;
use fragsim::workload::preset;

fn main() {
    let spec = ScenarioSpec {
        kind: ScenarioKind::LinkChurn,
        ..ScenarioSpec::default()
    };
    for e in Engine::ALL {
        let r = run_link_churn(&EngineConfig::new(e), &preset("A").unwrap(), &spec, &SimSettings::default()).unwrap();
        let s = &r.run.outcome.summary;
        let routed: Vec<_> = r.removals.iter().filter(|x| x.routed).collect();
        let worst = routed.iter().filter_map(|x| x.recovery_ms).fold(0.0, f64::max);
        println!(
            "{:<9} ok {:>6} failed {:>4} unresponsive windows {:>2}, {} routed removals, slowest recovery {:.1}s",
            e.as_str(),
            s.ok_ops,
            s.failed_ops,
            s.unresponsive_windows.len(),
            routed.len(),
            worst / 1000.0
        );
    }
}
