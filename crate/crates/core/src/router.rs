//! Overlay routing: min-hop paths with delayed recomputation after link
//! state changes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::simkernel::{KernelError, MessageId, Network};
use crate::time::SimTime;
use crate::topology::{ClusterTopology, LinkId, LinkState, NodeId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub path: Vec<LinkId>,
    pub hop_count: usize,
    /// Sum of effective link latencies when the plan was computed.
    pub total_latency: SimTime,
    pub computed_at: SimTime,
}

impl RoutePlan {
    pub fn total_latency_ms(&self) -> f64 {
        self.total_latency.as_ms()
    }

    pub fn is_viable(&self, topo: &ClusterTopology) -> bool {
        self.path.iter().all(|&l| topo.link(l).is_up())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RouteError {
    #[error("source and destination are the same node")]
    SameEndpoints,
    #[error("no route from {src} to {dst}")]
    Unreachable { src: NodeId, dst: NodeId },
    #[error("no route (rerouting) from {src} to {dst} until {ready_at}")]
    Rerouting { src: NodeId, dst: NodeId, ready_at: SimTime },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Path over up links minimizing hop count, then total latency at `t`, then
/// the link-id sequence.
pub fn shortest_path(topo: &ClusterTopology, src: NodeId, dst: NodeId, t: SimTime) -> Result<RoutePlan, RouteError> {
    if src == dst {
        return Err(RouteError::SameEndpoints);
    }
    let n = topo.nodes().len();
    // Label: (hops, latency, path). Lexicographic order on the tuple is
    // preserved under extension by a common edge, so Dijkstra applies.
    let mut best: Vec<Option<(usize, SimTime, Vec<LinkId>)>> = vec![None; n];
    let mut done = vec![false; n];
    best[src.idx()] = Some((0, SimTime::ZERO, Vec::new()));
    loop {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if done[v] || best[v].is_none() {
                continue;
            }
            if pick.is_none_or(|p| best[v] < best[p]) {
                pick = Some(v);
            }
        }
        let Some(u) = pick else { break };
        done[u] = true;
        if u == dst.idx() {
            break;
        }
        let (hops, lat, path) = best[u].clone().expect("picked");
        for &l in topo.adjacent(NodeId(u as u16)) {
            let link = topo.link(l);
            if !link.is_up() {
                continue;
            }
            let v = link.other(NodeId(u as u16)).expect("adjacent").idx();
            if done[v] {
                continue;
            }
            let q = topo.effective_qos(l, t).expect("link is up");
            let mut p = path.clone();
            p.push(l);
            let cand = (hops + 1, lat + q.latency, p);
            if best[v].as_ref().is_none_or(|b| cand < *b) {
                best[v] = Some(cand);
            }
        }
    }
    match best[dst.idx()].take() {
        Some((hop_count, total_latency, path)) => Ok(RoutePlan {
            path,
            hop_count,
            total_latency,
            computed_at: t,
        }),
        None => Err(RouteError::Unreachable { src, dst }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerouteConfig {
    pub delay: SimTime,
    /// When set, each recompute waits a uniform draw from `[delay, jitter_max]`.
    pub jitter_max: Option<SimTime>,
    pub seed: u64,
}

impl Default for RerouteConfig {
    fn default() -> Self {
        RerouteConfig {
            delay: SimTime::from_secs(30),
            jitter_max: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Entry {
    plan: Option<RoutePlan>,
    pending: Option<SimTime>,
}

/// Route status between two nodes as seen by the database models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PathStatus {
    Local,
    Usable { latency: SimTime },
    Rerouting { ready_at: SimTime },
    Unreachable,
}

impl PathStatus {
    pub fn is_usable(&self) -> bool {
        matches!(self, PathStatus::Local | PathStatus::Usable { .. })
    }

    pub fn latency(&self) -> Option<SimTime> {
        match self {
            PathStatus::Local => Some(SimTime::ZERO),
            PathStatus::Usable { latency } => Some(*latency),
            _ => None,
        }
    }
}

pub struct RouteTable {
    n: usize,
    entries: Vec<Entry>,
    config: RerouteConfig,
    rng: ChaCha8Rng,
}

impl RouteTable {
    pub fn new(topo: &ClusterTopology, config: RerouteConfig, t: SimTime) -> Self {
        let n = topo.nodes().len();
        let mut rt = RouteTable {
            n,
            entries: vec![Entry::default(); n * n],
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        for s in 0..n {
            for d in 0..n {
                if s != d {
                    rt.entries[s * n + d].plan = shortest_path(topo, NodeId(s as u16), NodeId(d as u16), t).ok();
                }
            }
        }
        rt
    }

    pub fn config(&self) -> &RerouteConfig {
        &self.config
    }

    /// Marks affected pairs stale. `topo` must already reflect the change.
    /// Returns when the recomputation is due, if any pair was affected.
    pub fn on_link_state_change(
        &mut self,
        topo: &ClusterTopology,
        link: LinkId,
        state: LinkState,
        t: SimTime,
    ) -> Option<SimTime> {
        let ready = t + self.draw_delay();
        let mut any = false;
        for s in 0..self.n {
            for d in 0..self.n {
                if s == d {
                    continue;
                }
                let i = s * self.n + d;
                let affected = match state {
                    LinkState::Down => self.entries[i].plan.as_ref().is_some_and(|p| p.path.contains(&link)),
                    // Anything already waiting is pushed back too, so no
                    // recompute picks up the restored link early.
                    LinkState::Up => {
                        self.entries[i].pending.is_some() || {
                            let cand = shortest_path(topo, NodeId(s as u16), NodeId(d as u16), t).ok();
                            cand.map(|c| c.path) != self.entries[i].plan.as_ref().map(|p| p.path.clone())
                        }
                    }
                };
                if affected {
                    let e = &mut self.entries[i];
                    e.pending = Some(e.pending.map_or(ready, |p| p.max(ready)));
                    any = true;
                }
            }
        }
        any.then_some(ready)
    }

    fn draw_delay(&mut self) -> SimTime {
        match self.config.jitter_max {
            Some(hi) if hi > self.config.delay => {
                SimTime::from_micros(self.rng.random_range(self.config.delay.as_micros()..=hi.as_micros()))
            }
            _ => self.config.delay,
        }
    }

    /// Recomputes every pair whose window has elapsed. Returns the pairs
    /// whose path changed.
    pub fn recompute_due(&mut self, topo: &ClusterTopology, t: SimTime) -> Vec<(NodeId, NodeId)> {
        let mut changed = Vec::new();
        for s in 0..self.n {
            for d in 0..self.n {
                let i = s * self.n + d;
                if self.entries[i].pending.is_none_or(|p| p > t) {
                    continue;
                }
                let (src, dst) = (NodeId(s as u16), NodeId(d as u16));
                let plan = shortest_path(topo, src, dst, t).ok();
                let e = &mut self.entries[i];
                if plan.as_ref().map(|p| &p.path) != e.plan.as_ref().map(|p| &p.path) {
                    changed.push((src, dst));
                }
                e.plan = plan;
                e.pending = None;
            }
        }
        changed
    }

    pub fn next_pending(&self) -> Option<SimTime> {
        self.entries.iter().filter_map(|e| e.pending).min()
    }

    pub fn lookup(&self, topo: &ClusterTopology, src: NodeId, dst: NodeId) -> Result<&RoutePlan, RouteError> {
        if src == dst {
            return Err(RouteError::SameEndpoints);
        }
        let e = &self.entries[src.idx() * self.n + dst.idx()];
        match (&e.plan, e.pending) {
            (Some(p), None) => Ok(p),
            (Some(p), Some(_)) if p.is_viable(topo) => Ok(p),
            (_, Some(ready_at)) => Err(RouteError::Rerouting { src, dst, ready_at }),
            (None, None) => Err(RouteError::Unreachable { src, dst }),
        }
    }

    pub fn status(&self, topo: &ClusterTopology, src: NodeId, dst: NodeId) -> PathStatus {
        if src == dst {
            return PathStatus::Local;
        }
        match self.lookup(topo, src, dst) {
            Ok(p) => PathStatus::Usable { latency: p.total_latency },
            Err(RouteError::Rerouting { ready_at, .. }) => PathStatus::Rerouting { ready_at },
            Err(_) => PathStatus::Unreachable,
        }
    }

    /// Smallest effective bandwidth along the current route, in Mb/s.
    pub fn bottleneck_mbps(&self, topo: &ClusterTopology, src: NodeId, dst: NodeId, t: SimTime) -> Option<f64> {
        let plan = self.lookup(topo, src, dst).ok()?;
        let mut at = src;
        let mut bw = f64::INFINITY;
        for &l in &plan.path {
            let link = topo.link(l);
            let q = topo.effective_qos(l, t).ok()?;
            bw = bw.min(q.bw_from(link, at));
            at = link.other(at)?;
        }
        Some(bw)
    }

    /// Mean current route latency over ordered pairs of `nodes` that have a
    /// usable route, with the number of pairs lacking one.
    pub fn mean_latency_ms(&self, topo: &ClusterTopology, nodes: &[NodeId]) -> (f64, usize) {
        let (mut sum, mut count, mut missing) = (0.0, 0usize, 0usize);
        for &s in nodes {
            for &d in nodes {
                if s == d {
                    continue;
                }
                match self.lookup(topo, s, d) {
                    Ok(p) => {
                        sum += p.total_latency_ms();
                        count += 1;
                    }
                    Err(_) => missing += 1,
                }
            }
        }
        (if count > 0 { sum / count as f64 } else { 0.0 }, missing)
    }
}

/// Resolves the route and hands the message to the network.
pub fn route_and_transmit(
    net: &mut Network,
    routes: &RouteTable,
    topo: &ClusterTopology,
    src: NodeId,
    dst: NodeId,
    size_bytes: u64,
    t: SimTime,
) -> Result<(MessageId, SimTime), RouteError> {
    let plan = routes.lookup(topo, src, dst)?;
    Ok(net.transmit(topo, src, dst, size_bytes, &plan.path, t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeSpec;
    use std::collections::BTreeSet;

    fn fig2() -> ClusterTopology {
        let nodes = (0..3)
            .map(|i| NodeSpec {
                id: NodeId(i),
                name: format!("vm{i}"),
                region: format!("r{i}"),
                roles: BTreeSet::new(),
            })
            .collect();
        let mut t = ClusterTopology::new(nodes, Vec::new()).unwrap();
        t.add_link("a", NodeId(0), NodeId(2), 0, 210.0, 100.0, 100.0).unwrap();
        t.add_link("b", NodeId(0), NodeId(2), 1, 140.0, 100.0, 100.0).unwrap();
        t.add_link("c", NodeId(0), NodeId(1), 0, 40.0, 100.0, 100.0).unwrap();
        t.add_link("d", NodeId(1), NodeId(2), 0, 50.0, 100.0, 100.0).unwrap();
        t
    }

    const A: LinkId = LinkId(0);
    const B: LinkId = LinkId(1);

    #[test]
    fn static_choices() {
        let mut topo = fig2();
        let (v0, v2) = (NodeId(0), NodeId(2));
        assert_eq!(shortest_path(&topo, v0, v2, SimTime::ZERO).unwrap().path, [B]);
        topo.set_link_state(B, LinkState::Down, SimTime::ZERO).unwrap();
        assert_eq!(shortest_path(&topo, v0, v2, SimTime::ZERO).unwrap().path, [A]);
        topo.set_link_state(A, LinkState::Down, SimTime::ZERO).unwrap();
        let p = shortest_path(&topo, v0, v2, SimTime::ZERO).unwrap();
        assert_eq!(p.path, [LinkId(2), LinkId(3)]);
        assert_eq!(p.total_latency, SimTime::from_millis(90));
        assert_eq!(shortest_path(&topo, v0, v0, SimTime::ZERO), Err(RouteError::SameEndpoints));
    }

    #[test]
    fn stale_window_and_grace() {
        let mut topo = fig2();
        let (v0, v2) = (NodeId(0), NodeId(2));
        let mut rt = RouteTable::new(&topo, RerouteConfig::default(), SimTime::ZERO);
        let t1 = SimTime::from_secs(10);
        topo.set_link_state(B, LinkState::Down, t1).unwrap();
        let ready = rt.on_link_state_change(&topo, B, LinkState::Down, t1).unwrap();
        assert_eq!(ready, t1 + SimTime::from_secs(30));
        assert_eq!(
            rt.lookup(&topo, v0, v2),
            Err(RouteError::Rerouting { src: v0, dst: v2, ready_at: ready })
        );
        // vm0 -> vm1 never used b.
        assert!(rt.lookup(&topo, v0, NodeId(1)).is_ok());
        rt.recompute_due(&topo, ready);
        assert_eq!(rt.lookup(&topo, v0, v2).unwrap().path, [A]);

        // Restoring b keeps traffic on a (still up) until the window ends.
        let t2 = SimTime::from_secs(100);
        topo.set_link_state(B, LinkState::Up, t2).unwrap();
        let ready = rt.on_link_state_change(&topo, B, LinkState::Up, t2).unwrap();
        rt.recompute_due(&topo, ready - SimTime::from_micros(1));
        assert_eq!(rt.lookup(&topo, v0, v2).unwrap().path, [A]);
        rt.recompute_due(&topo, ready);
        assert_eq!(rt.lookup(&topo, v0, v2).unwrap().path, [B]);
    }

    #[test]
    fn unrelated_down_link_changes_nothing() {
        let mut topo = fig2();
        let mut rt = RouteTable::new(&topo, RerouteConfig::default(), SimTime::ZERO);
        topo.set_link_state(A, LinkState::Down, SimTime::ZERO).unwrap();
        // Only the pairs routed over a would be touched; none are.
        assert!(rt.on_link_state_change(&topo, A, LinkState::Down, SimTime::ZERO).is_none());
    }

    #[test]
    fn partition_is_unreachable_after_recompute() {
        let mut topo = fig2();
        let mut rt = RouteTable::new(&topo, RerouteConfig::default(), SimTime::ZERO);
        for l in [A, B, LinkId(3)] {
            topo.set_link_state(l, LinkState::Down, SimTime::ZERO).unwrap();
            rt.on_link_state_change(&topo, l, LinkState::Down, SimTime::ZERO);
        }
        rt.recompute_due(&topo, SimTime::from_secs(30));
        assert!(matches!(
            rt.lookup(&topo, NodeId(0), NodeId(2)),
            Err(RouteError::Unreachable { .. })
        ));
        assert!(rt.lookup(&topo, NodeId(0), NodeId(1)).is_ok());
    }

    #[test]
    fn jitter_stays_in_band() {
        let mut topo = fig2();
        let cfg = RerouteConfig {
            delay: SimTime::from_secs(30),
            jitter_max: Some(SimTime::from_secs(40)),
            seed: 3,
        };
        let mut rt = RouteTable::new(&topo, cfg, SimTime::ZERO);
        topo.set_link_state(B, LinkState::Down, SimTime::ZERO).unwrap();
        let r = rt.on_link_state_change(&topo, B, LinkState::Down, SimTime::ZERO).unwrap();
        assert!(r >= SimTime::from_secs(30) && r <= SimTime::from_secs(40));
    }
}
