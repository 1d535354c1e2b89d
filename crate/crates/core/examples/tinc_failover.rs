//! Three VMs joined by four links; watch the route between vm0 and vm2
//! move as links fail and come back.

use std::collections::BTreeSet;

use fragsim::router::{RerouteConfig, RouteTable};
use fragsim::topology::{ClusterTopology, LinkState, NodeId, NodeSpec};
use fragsim::SimTime;

fn main() {
    let nodes = (0..3)
        .map(|i| NodeSpec {
            id: NodeId(i),
            name: format!("vm{i}"),
            region: format!("dc{i}"),
            roles: BTreeSet::new(),
        })
        .collect();
    let mut topo = ClusterTopology::new(nodes, Vec::new()).unwrap();
    let a = topo.add_link("a", NodeId(0), NodeId(2), 0, 210.0, 100.0, 100.0).unwrap();
    let b = topo.add_link("b", NodeId(0), NodeId(2), 1, 140.0, 100.0, 100.0).unwrap();
    topo.add_link("c", NodeId(0), NodeId(1), 0, 40.0, 100.0, 100.0).unwrap();
    topo.add_link("d", NodeId(1), NodeId(2), 0, 50.0, 100.0, 100.0).unwrap();

    let mut rt = RouteTable::new(&topo, RerouteConfig::default(), SimTime::ZERO);
    let show = |rt: &RouteTable, topo: &ClusterTopology, t: SimTime| {
        let route = match rt.lookup(topo, NodeId(0), NodeId(2)) {
            Ok(p) => p.path.iter().map(|l| topo.link(*l).name.clone()).collect::<Vec<_>>().join(","),
            Err(e) => e.to_string(),
        };
        println!("t={t}: vm0 -> vm2 via [{route}]");
    };
    show(&rt, &topo, SimTime::ZERO);

    let mut t = SimTime::from_secs(10);
    for (link, state) in [(b, LinkState::Down), (a, LinkState::Down), (b, LinkState::Up)] {
        topo.set_link_state(link, state, t).unwrap();
        println!("t={t}: link {} {state:?}", topo.link(link).name);
        if let Some(ready) = rt.on_link_state_change(&topo, link, state, t) {
            show(&rt, &topo, t);
            rt.recompute_due(&topo, ready);
            show(&rt, &topo, ready);
            t = ready;
        }
        t = t + SimTime::from_secs(10);
    }
}
