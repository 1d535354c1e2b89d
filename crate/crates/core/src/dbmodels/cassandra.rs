use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MemberState {
    Up,
    Drained,
    Joining,
}

/// Token ring with vnodes, SimpleStrategy placement and round-robin
/// coordinators.
pub struct CassandraModel {
    ctx: ModelCtx,
    seed_node: NodeId,
    rf: usize,
    cl: usize,
    vnodes: usize,
    token_seed: u64,
    ring: Vec<(u64, NodeId)>,
    states: BTreeMap<NodeId, MemberState>,
    key_count: u64,
    rr: usize,
    churning: bool,
}

impl CassandraModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        ctx: ModelCtx,
        members: &[NodeId],
        seed_node: NodeId,
        rf: usize,
        cl: usize,
        vnodes: usize,
        record_count: u64,
        token_seed: u64,
    ) -> Result<Self, ModelError> {
        if rf == 0 || cl == 0 || cl > rf || vnodes == 0 {
            return Err(ModelError::Invalid(format!("rf={rf} cl={cl} vnodes={vnodes}")));
        }
        if members.len() < rf {
            return Err(ModelError::InsufficientNodes {
                engine: "cassandra",
                need: rf,
                have: members.len(),
            });
        }
        let mut m = CassandraModel {
            ctx,
            seed_node,
            rf,
            cl,
            vnodes,
            token_seed,
            ring: Vec::new(),
            states: members.iter().map(|&n| (n, MemberState::Up)).collect(),
            key_count: record_count,
            rr: 0,
            churning: false,
        };
        m.ring = m.build_ring(|_| true);
        Ok(m)
    }

    fn tokens_of(&self, node: NodeId) -> impl Iterator<Item = u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.token_seed ^ (u64::from(node.0) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        (0..self.vnodes).map(move |_| rng.random())
    }

    fn build_ring(&self, include: impl Fn(NodeId) -> bool) -> Vec<(u64, NodeId)> {
        let mut ring: Vec<(u64, NodeId)> = self
            .states
            .iter()
            .filter(|(n, s)| **s != MemberState::Joining && include(**n))
            .flat_map(|(&n, _)| self.tokens_of(n).map(move |t| (t, n)))
            .collect();
        ring.sort_unstable();
        ring
    }

    fn replicas_in(ring: &[(u64, NodeId)], rf: usize, key: u64) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(rf);
        if ring.is_empty() {
            return out;
        }
        let h = key_hash(key);
        let start = ring.partition_point(|(t, _)| *t < h);
        for i in 0..ring.len() {
            let n = ring[(start + i) % ring.len()].1;
            if !out.contains(&n) {
                out.push(n);
                if out.len() == rf {
                    break;
                }
            }
        }
        out
    }

    /// Owners of `key` walking the current ring (up or drained members).
    pub fn replicas(&self, key: u64) -> Vec<NodeId> {
        Self::replicas_in(&self.ring, self.rf, key)
    }

    pub fn replication_factor(&self) -> usize {
        self.rf
    }

    fn serving(&self, n: NodeId) -> bool {
        self.states.get(&n) == Some(&MemberState::Up)
    }

    fn next_coordinator(&mut self) -> Result<NodeId, PlanError> {
        let up: Vec<NodeId> = self
            .states
            .iter()
            .filter(|(_, s)| **s == MemberState::Up)
            .map(|(n, _)| *n)
            .collect();
        if up.is_empty() {
            return Err(PlanError::NoOwner);
        }
        let c = up[self.rr % up.len()];
        self.rr = self.rr.wrapping_add(1);
        Ok(c)
    }

    fn legs_for(&self, key: u64, req: u64, resp: u64) -> Vec<Leg> {
        self.replicas(key)
            .into_iter()
            .filter(|n| self.serving(*n))
            .map(|to| Leg {
                to,
                request_bytes: req,
                response_bytes: resp,
                service: self.ctx.service.replica(),
            })
            .collect()
    }

    fn single(&mut self, kind: OpKind, key: u64, client: NodeId, net: &dyn NetView) -> Result<Vec<Stage>, PlanError> {
        let coord = self.next_coordinator()?;
        let write = kind != OpKind::Read;
        let (req, resp) = if write { (WRITE_REQUEST, ACK_BYTES) } else { (ENVELOPE_BYTES, READ_RESPONSE) };
        let legs = usable_legs(net, coord, self.legs_for(key, req, resp), self.cl)?;
        Ok(vec![
            hop(net, client, coord, req, TrafficClass::Request, self.ctx.service.coordinator())?,
            Stage::Gather {
                from: coord,
                legs,
                need: self.cl,
            },
            hop(net, coord, client, resp, TrafficClass::Response, SimTime::ZERO)?,
        ])
    }

    fn scan(&mut self, key: u64, len: u32, client: NodeId, net: &dyn NetView) -> Result<Vec<Stage>, PlanError> {
        let coord = self.next_coordinator()?;
        let end = (key + u64::from(len)).min(self.key_count.max(key + 1));
        let mut per_owner: BTreeMap<NodeId, u64> = BTreeMap::new();
        for k in key..end {
            // The first serving replica that the coordinator can reach.
            let owner = self
                .replicas(k)
                .into_iter()
                .filter(|n| self.serving(*n))
                .find(|n| net.status(coord, *n).is_usable() && net.status(*n, coord).is_usable())
                .or_else(|| self.replicas(k).into_iter().find(|n| self.serving(*n)))
                .ok_or(PlanError::NoOwner)?;
            *per_owner.entry(owner).or_default() += 1;
        }
        let legs: Vec<Leg> = per_owner
            .iter()
            .map(|(&to, &cnt)| Leg {
                to,
                request_bytes: ENVELOPE_BYTES,
                response_bytes: scan_response(cnt),
                service: self.ctx.service.replica(),
            })
            .collect();
        let need = legs.len();
        let legs = usable_legs(net, coord, legs, need)?;
        Ok(vec![
            hop(net, client, coord, ENVELOPE_BYTES, TrafficClass::Request, self.ctx.service.coordinator())?,
            Stage::Gather { from: coord, legs, need },
            hop(net, coord, client, scan_response(end - key), TrafficClass::Response, SimTime::ZERO)?,
        ])
    }

    /// Per-key ownership deltas between two rings, as (from, to) record moves.
    fn moves(&self, before: &[(u64, NodeId)], after: &[(u64, NodeId)]) -> BTreeMap<(NodeId, NodeId), u64> {
        let mut moves = BTreeMap::new();
        for k in 0..self.key_count {
            let b = Self::replicas_in(before, self.rf, k);
            let a = Self::replicas_in(after, self.rf, k);
            let gained: Vec<NodeId> = a.iter().copied().filter(|n| !b.contains(n)).collect();
            let lost: Vec<NodeId> = b.iter().copied().filter(|n| !a.contains(n)).collect();
            for (i, to) in gained.iter().enumerate() {
                let from = lost.get(i).copied().unwrap_or(b[0]);
                *moves.entry((from, *to)).or_insert(0) += RECORD_BYTES;
            }
        }
        moves
    }

    fn plan_from_moves(&self, node: NodeId, kind: ChurnKind, moves: BTreeMap<(NodeId, NodeId), u64>, net: &dyn NetView) -> ChurnPlan {
        let transfers: Vec<Transfer> = moves
            .into_iter()
            .map(|((from, to), bytes)| Transfer { from, to, bytes })
            .collect();
        let stream = transfers
            .iter()
            .map(|t| stream_time(t.bytes, net.rtt(t.from, t.to), net.bottleneck_mbps(t.from, t.to)))
            .max()
            .unwrap_or(SimTime::ZERO);
        ChurnPlan {
            node,
            kind,
            transfers,
            settle: RING_DELAY + stream,
        }
    }
}

impl DbModel for CassandraModel {
    fn engine(&self) -> Engine {
        Engine::Cassandra
    }

    fn members(&self) -> Vec<NodeId> {
        self.states
            .iter()
            .filter(|(_, s)| **s != MemberState::Joining)
            .map(|(n, _)| *n)
            .collect()
    }

    fn key_count(&self) -> u64 {
        self.key_count
    }

    fn placement(&self) -> Vec<(NodeId, u64)> {
        let mut counts: BTreeMap<NodeId, u64> = self.members().into_iter().map(|n| (n, 0)).collect();
        for k in 0..self.key_count {
            for n in self.replicas(k) {
                *counts.entry(n).or_default() += 1;
            }
        }
        counts.into_iter().collect()
    }

    fn plan_operation(&mut self, op: &OpRequest, client: NodeId, net: &dyn NetView) -> Result<FlowPlan, PlanError> {
        let stages = match op.kind {
            OpKind::Read | OpKind::Update | OpKind::Insert => self.single(op.kind, op.key, client, net)?,
            OpKind::Scan => self.scan(op.key, op.scan_len, client, net)?,
            OpKind::ReadModifyWrite => {
                let mut s = self.single(OpKind::Read, op.key, client, net)?;
                s.extend(self.single(OpKind::Update, op.key, client, net)?);
                s
            }
        };
        Ok(FlowPlan { stages })
    }

    fn record_inserted(&mut self, key: u64) {
        self.key_count = self.key_count.max(key + 1);
    }

    fn remove_node(&mut self, node: NodeId, net: &dyn NetView) -> Result<ChurnPlan, ChurnError> {
        if self.churning {
            return Err(ChurnError::Busy);
        }
        match self.states.get(&node) {
            Some(MemberState::Up) => {}
            _ => return Err(ChurnError::NotMember(self.ctx.name(node))),
        }
        if node == self.seed_node {
            return Err(self.ctx.not_removable(node, "the seed node is never removed"));
        }
        if self.ctx.protected.contains(&node) {
            return Err(self.ctx.not_removable(node, "node is protected"));
        }
        let remaining = self.members().len() - 1;
        if remaining < self.rf {
            return Err(self.ctx.not_removable(
                node,
                &format!("{remaining} nodes would remain, replication factor is {}", self.rf),
            ));
        }
        let after = self.build_ring(|n| n != node);
        let moves = self.moves(&self.ring, &after);
        self.states.insert(node, MemberState::Drained);
        self.churning = true;
        Ok(self.plan_from_moves(node, ChurnKind::Remove, moves, net))
    }

    fn add_node(&mut self, node: NodeId, net: &dyn NetView) -> Result<ChurnPlan, ChurnError> {
        if self.churning {
            return Err(ChurnError::Busy);
        }
        if self.states.contains_key(&node) {
            return Err(ChurnError::AlreadyMember(self.ctx.name(node)));
        }
        self.states.insert(node, MemberState::Up);
        let after = self.build_ring(|_| true);
        self.states.insert(node, MemberState::Joining);
        let moves = self.moves(&self.ring, &after);
        self.churning = true;
        Ok(self.plan_from_moves(node, ChurnKind::Add, moves, net))
    }

    fn finish_churn(&mut self, plan: &ChurnPlan) {
        match plan.kind {
            ChurnKind::Remove => {
                self.states.remove(&plan.node);
            }
            ChurnKind::Add => {
                self.states.insert(plan.node, MemberState::Up);
            }
        }
        self.ring = self.build_ring(|_| true);
        self.churning = false;
    }
}

#[cfg(test)]
mod tests {
    use super::super::testnet::FlatNet;
    use super::*;

    const CLIENT: NodeId = NodeId(8);

    fn model(rf: usize) -> CassandraModel {
        let members: Vec<NodeId> = (0..8).map(NodeId).collect();
        CassandraModel::new(ModelCtx::for_tests(9, CLIENT), &members, NodeId(0), rf, 1, 256, 10_000, 42).unwrap()
    }

    /// Independent oracle: sort all (token, node) pairs and walk.
    fn brute_replicas(m: &CassandraModel, key: u64) -> Vec<NodeId> {
        let mut all: Vec<(u64, NodeId)> = Vec::new();
        for n in m.members() {
            all.extend(m.tokens_of(n).map(|t| (t, n)));
        }
        all.sort();
        let h = key_hash(key);
        let mut order: Vec<NodeId> = all.iter().filter(|(t, _)| *t >= h).map(|x| x.1).collect();
        order.extend(all.iter().filter(|(t, _)| *t < h).map(|x| x.1));
        let mut out = Vec::new();
        for n in order {
            if !out.contains(&n) {
                out.push(n);
            }
        }
        out.truncate(m.rf);
        out
    }

    #[test]
    fn replica_sets_are_rf_distinct_nodes() {
        let m = model(3);
        for k in 0..10_000 {
            let r = m.replicas(k);
            assert_eq!(r.len(), 3);
            assert_eq!(r, brute_replicas(&m, k), "key {k}");
        }
    }

    #[test]
    fn placement_is_roughly_even() {
        let m = model(3);
        let p = m.placement();
        assert_eq!(p.iter().map(|x| x.1).sum::<u64>(), 30_000);
        for (_, c) in p {
            assert!((2_500..=5_000).contains(&c), "{c}");
        }
    }

    #[test]
    fn read_flow_shape() {
        let mut m = model(3);
        let net = FlatNet::new(10);
        let plan = m
            .plan_operation(&OpRequest { kind: OpKind::Read, key: 5, scan_len: 0 }, CLIENT, &net)
            .unwrap();
        assert_eq!(plan.stages.len(), 3);
        let Stage::Gather { legs, need, from } = &plan.stages[1] else { panic!() };
        assert_eq!(*need, 1);
        assert_eq!(legs.len(), 3);
        assert_eq!(*from, NodeId(0));
        // Round-robin coordinators.
        let next = m
            .plan_operation(&OpRequest { kind: OpKind::Read, key: 5, scan_len: 0 }, CLIENT, &net)
            .unwrap();
        assert!(matches!(next.stages[0], Stage::Hop { to: NodeId(1), .. }));
    }

    #[test]
    fn seed_and_rf_constraints() {
        let net = FlatNet::new(10);
        let mut m = model(3);
        assert!(matches!(m.remove_node(NodeId(0), &net), Err(ChurnError::NotRemovable { .. })));
        let members: Vec<NodeId> = (0..3).map(NodeId).collect();
        let mut small =
            CassandraModel::new(ModelCtx::for_tests(9, CLIENT), &members, NodeId(0), 3, 1, 16, 100, 1).unwrap();
        assert!(matches!(small.remove_node(NodeId(1), &net), Err(ChurnError::NotRemovable { .. })));
    }

    #[test]
    fn removal_streams_exactly_the_share() {
        let net = FlatNet::new(10);
        let mut m = model(3);
        let victim = NodeId(4);
        let share = m.placement().into_iter().find(|(n, _)| *n == victim).unwrap().1 * RECORD_BYTES;
        let plan = m.remove_node(victim, &net).unwrap();
        assert_eq!(plan.bulk_bytes(), share);
        assert!(plan.transfers.iter().all(|t| t.from == victim && t.to != victim));
        assert!(plan.settle >= RING_DELAY);
        assert!(matches!(m.remove_node(NodeId(5), &net), Err(ChurnError::Busy)));
        m.finish_churn(&plan);
        let received: u64 = plan.transfers.iter().map(|t| t.bytes).sum();
        assert_eq!(received, share);
        assert!(m.members().iter().all(|n| *n != victim));
        for k in 0..1000 {
            assert_eq!(m.replicas(k).len(), 3);
        }
    }

    #[test]
    fn add_streams_into_newcomer_and_slows_with_latency() {
        let members: Vec<NodeId> = (0..7).map(NodeId).collect();
        let fresh = || {
            CassandraModel::new(ModelCtx::for_tests(9, CLIENT), &members, NodeId(0), 3, 1, 256, 10_000, 42).unwrap()
        };
        let mut near = fresh();
        let mut far = fresh();
        let p1 = near.add_node(NodeId(7), &FlatNet::new(10)).unwrap();
        let p2 = far.add_node(NodeId(7), &FlatNet::new(200)).unwrap();
        assert!(p1.transfers.iter().all(|t| t.to == NodeId(7)));
        assert_eq!(p1.bulk_bytes(), p2.bulk_bytes());
        assert!(p2.settle > p1.settle);
        near.finish_churn(&p1);
        let share = near.placement().into_iter().find(|(n, _)| *n == NodeId(7)).unwrap().1;
        assert_eq!(share * RECORD_BYTES, p1.bulk_bytes());
    }
}
