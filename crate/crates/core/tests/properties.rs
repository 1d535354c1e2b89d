use std::collections::BTreeMap;

use fragsim::dbmodels::{Engine, EngineConfig};
use fragsim::sim::{SimSettings, Simulation, StopRule};
use fragsim::simkernel::{serialization, Network};
use fragsim::topology::{reference_topology, ClusterTopology, LinkId, NodeId, NodeSpec};
use fragsim::workload::{preset, Outcome};
use fragsim::SimTime;
use proptest::prelude::*;

fn chain() -> ClusterTopology {
    let nodes = (0..4)
        .map(|i| NodeSpec {
            id: NodeId(i),
            name: format!("n{i}"),
            region: format!("r{i}"),
            roles: Default::default(),
        })
        .collect();
    let mut t = ClusterTopology::new(nodes, Vec::new()).unwrap();
    t.add_link("l0", NodeId(0), NodeId(1), 0, 12.5, 100.0, 50.0).unwrap();
    t.add_link("l1", NodeId(1), NodeId(2), 0, 7.0, 250.0, 1000.0).unwrap();
    t.add_link("l2", NodeId(2), NodeId(3), 0, 33.3, 97.0, 992.0).unwrap();
    t
}

/// Links along the chain between two distinct nodes.
fn chain_path(src: u16, dst: u16) -> Vec<LinkId> {
    if src < dst {
        (src..dst).map(|l| LinkId(u32::from(l))).collect()
    } else {
        (dst..src).rev().map(|l| LinkId(u32::from(l))).collect()
    }
}

fn message() -> impl Strategy<Value = (u16, u16, u64, u64)> {
    (0u16..4, 1u16..4, 0u64..200_000, 0u64..50_000).prop_map(|(s, off, bytes, gap)| (s, (s + off) % 4, bytes, gap))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn link_directions_serve_messages_in_order(msgs in prop::collection::vec(message(), 1..40)) {
        let topo = chain();
        let mut net = Network::new(&topo);
        let mut t = 0;
        let mut ids = Vec::new();
        for (s, d, bytes, gap) in msgs {
            t += gap;
            let (id, _) = net
                .transmit(&topo, NodeId(s), NodeId(d), bytes, &chain_path(s, d), SimTime::from_micros(t))
                .unwrap();
            ids.push((id, bytes));
        }
        // Per direction, in enqueue order: (start, serialization)
        let mut lanes: BTreeMap<(LinkId, NodeId), Vec<(SimTime, SimTime)>> = BTreeMap::new();
        for &(id, bytes) in &ids {
            let hops = net.hops_of(id).unwrap().to_vec();
            for w in hops.windows(2) {
                prop_assert!(w[1].start >= w[0].exit);
            }
            for h in hops {
                let link = topo.link(h.link);
                let bw = if h.from == link.a { link.down_bw_mbps } else { link.up_bw_mbps };
                lanes.entry((h.link, h.from)).or_default().push((h.start, serialization(bytes, bw)));
            }
        }
        for lane in lanes.values() {
            for w in lane.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 + w[0].1, "overlapping transmissions {:?}", w);
            }
        }
    }

    #[test]
    fn bytes_are_conserved_across_failures(
        msgs in prop::collection::vec(message(), 1..30),
        fail in 0u32..3,
        fail_at in 0u64..400_000,
    ) {
        let mut topo = chain();
        let mut net = Network::new(&topo);
        let mut t = 0;
        let mut pending = Vec::new();
        for (s, d, bytes, gap) in msgs {
            t += gap;
            let (id, at) = net
                .transmit(&topo, NodeId(s), NodeId(d), bytes, &chain_path(s, d), SimTime::from_micros(t))
                .unwrap();
            pending.push((at, id));
        }
        let fail_at = SimTime::from_micros(fail_at);
        pending.sort();
        for &(at, id) in &pending {
            if at < fail_at {
                net.complete(id);
            }
        }
        topo.set_link_state(LinkId(fail), fragsim::topology::LinkState::Down, fail_at).unwrap();
        let lost = net.fail_link(LinkId(fail), fail_at);
        for &(_, id) in &pending {
            net.complete(id);
        }
        prop_assert_eq!(net.in_flight(), 0);
        let sent: u64 = net.counters().iter().map(|c| c.bytes_sent).sum();
        let settled: u64 = net.counters().iter().map(|c| c.bytes_delivered + c.bytes_lost).sum();
        prop_assert_eq!(sent, settled);
        for c in net.counters() {
            prop_assert_eq!(c.bytes_sent, c.bytes_delivered + c.bytes_lost);
        }
        for l in &lost {
            prop_assert!(l.message.path.contains(&LinkId(fail)));
        }
    }
}

fn engine() -> impl Strategy<Value = Engine> {
    prop::sample::select(Engine::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn simulation_accounting_holds(
        e in engine(),
        w in prop::sample::select(fragsim::workload::PRESETS.to_vec()),
        threads in 1u32..12,
        ops in 50u64..400,
        lsf in prop::sample::select(vec![0.2, 0.4, 0.6, 0.8, 1.0]),
        seed in any::<u64>(),
    ) {
        let mut topo = reference_topology();
        topo.scale_latency(lsf);
        let members = topo.data_nodes();
        let mut spec = preset(w).unwrap();
        spec.threads = threads;
        spec.operation_count = ops;
        spec.record_count = 2000;
        spec.rng_seed = seed;
        let settings = SimSettings { seed, ..SimSettings::default() };
        let sim = Simulation::new(topo, EngineConfig::new(e), &members, spec, StopRule::Operations, settings, lsf).unwrap();
        let out = sim.run().unwrap();
        let s = &out.summary;

        prop_assert_eq!(out.oplog.len() as u64, ops);
        prop_assert_eq!(s.total_ops, ops);
        prop_assert_eq!(s.ok_ops + s.failed_ops, s.total_ops);
        prop_assert_eq!(out.timeline.total(), s.ok_ops);
        prop_assert_eq!(
            out.oplog.iter().filter(|o| o.outcome == Some(Outcome::Ok)).count() as u64,
            s.ok_ops
        );

        // Closed loop: a thread never has two operations outstanding.
        let mut by_thread: BTreeMap<u32, Vec<_>> = BTreeMap::new();
        for op in &out.oplog {
            prop_assert!(op.thread < threads);
            by_thread.entry(op.thread).or_default().push(op);
        }
        for list in by_thread.values_mut() {
            list.sort_by_key(|o| (o.issued_at, o.id));
            for w in list.windows(2) {
                let done = w[0].completed_at.expect("every operation completes");
                prop_assert!(w[1].issued_at >= done);
            }
        }

        prop_assert_eq!(out.traffic.hop_total(), out.traffic.link_delivered_total());
        prop_assert!(out.traffic.link_delivered_total() <= out.traffic.total_bytes());
    }
}
