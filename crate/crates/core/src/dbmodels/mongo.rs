use std::collections::BTreeSet;

use super::*;

/// Replica set: every member holds everything, writes go to the primary and
/// reach secondaries through the oplog.
pub struct MongoModel {
    ctx: ModelCtx,
    primary: NodeId,
    secondaries: BTreeSet<NodeId>,
    non_voting: BTreeSet<NodeId>,
    leaving: Option<NodeId>,
    joining: Option<NodeId>,
    read_preference: ReadPreference,
    key_count: u64,
}

impl MongoModel {
    pub(crate) fn new(
        ctx: ModelCtx,
        members: &[NodeId],
        primary: NodeId,
        non_voting: BTreeSet<NodeId>,
        read_preference: ReadPreference,
        record_count: u64,
    ) -> Result<Self, ModelError> {
        if members.is_empty() {
            return Err(ModelError::InsufficientNodes {
                engine: "mongodb",
                need: 1,
                have: 0,
            });
        }
        let secondaries = members
            .iter()
            .copied()
            .filter(|n| *n != primary && !non_voting.contains(n))
            .collect();
        Ok(MongoModel {
            ctx,
            primary,
            secondaries,
            non_voting,
            leaving: None,
            joining: None,
            read_preference,
            key_count: record_count,
        })
    }

    pub fn primary(&self) -> NodeId {
        self.primary
    }

    /// Non-primary members currently serving reads and receiving the oplog.
    fn readable_secondaries(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.secondaries
            .iter()
            .chain(&self.non_voting)
            .copied()
            .filter(move |n| Some(*n) != self.leaving)
    }

    fn read_target(&self, client: NodeId, net: &dyn NetView) -> Result<NodeId, PlanError> {
        match self.read_preference {
            ReadPreference::Primary => Ok(self.primary),
            ReadPreference::NearestSecondary => {
                let mut best: Option<(SimTime, NodeId)> = None;
                let mut stalled: Option<SimTime> = None;
                for n in self.readable_secondaries() {
                    match (net.status(client, n), net.status(n, client)) {
                        (a, b) if a.is_usable() && b.is_usable() => {
                            let cand = (a.latency().unwrap_or_default() + b.latency().unwrap_or_default(), n);
                            if best.is_none_or(|b| cand < b) {
                                best = Some(cand);
                            }
                        }
                        (PathStatus::Rerouting { ready_at }, _) | (_, PathStatus::Rerouting { ready_at }) => {
                            stalled = Some(stalled.map_or(ready_at, |s| s.min(ready_at)));
                        }
                        _ => {}
                    }
                }
                match (best, stalled) {
                    (Some((_, n)), _) => Ok(n),
                    (None, Some(ready_at)) => Err(PlanError::Stalled { ready_at }),
                    // A primary-only replica set still answers reads.
                    (None, None) if self.readable_secondaries().next().is_none() => Ok(self.primary),
                    (None, None) => Err(PlanError::NoOwner),
                }
            }
        }
    }

    fn single(&self, kind: OpKind, client: NodeId, net: &dyn NetView) -> Result<Vec<Stage>, PlanError> {
        let svc = self.ctx.service.replica();
        if kind == OpKind::Read {
            let target = self.read_target(client, net)?;
            return Ok(vec![
                hop(net, client, target, ENVELOPE_BYTES, TrafficClass::Request, svc)?,
                hop(net, target, client, READ_RESPONSE, TrafficClass::Response, SimTime::ZERO)?,
            ]);
        }
        Ok(vec![
            hop(net, client, self.primary, WRITE_REQUEST, TrafficClass::Request, svc)?,
            Stage::Async {
                from: self.primary,
                targets: self.readable_secondaries().collect(),
                bytes: WRITE_REQUEST,
                class: TrafficClass::Replication,
            },
            hop(net, self.primary, client, ACK_BYTES, TrafficClass::Response, SimTime::ZERO)?,
        ])
    }

    /// Replication delay of one oplog entry to `secondary`.
    pub fn oplog_lag(&self, secondary: NodeId, net: &dyn NetView) -> Option<SimTime> {
        net.status(self.primary, secondary).latency()
    }
}

impl DbModel for MongoModel {
    fn engine(&self) -> Engine {
        Engine::Mongodb
    }

    fn members(&self) -> Vec<NodeId> {
        let mut m: Vec<NodeId> = std::iter::once(self.primary)
            .chain(self.secondaries.iter().copied())
            .chain(self.non_voting.iter().copied())
            .filter(|n| Some(*n) != self.joining)
            .collect();
        m.sort();
        m
    }

    fn key_count(&self) -> u64 {
        self.key_count
    }

    fn placement(&self) -> Vec<(NodeId, u64)> {
        self.members().into_iter().map(|n| (n, self.key_count)).collect()
    }

    fn plan_operation(&mut self, op: &OpRequest, client: NodeId, net: &dyn NetView) -> Result<FlowPlan, PlanError> {
        let stages = match op.kind {
            OpKind::Read | OpKind::Update | OpKind::Insert => self.single(op.kind, client, net)?,
            OpKind::Scan => {
                let target = self.read_target(client, net)?;
                let n = (op.key + u64::from(op.scan_len)).min(self.key_count.max(op.key + 1)) - op.key;
                vec![
                    hop(net, client, target, ENVELOPE_BYTES, TrafficClass::Request, self.ctx.service.replica())?,
                    hop(net, target, client, scan_response(n), TrafficClass::Response, SimTime::ZERO)?,
                ]
            }
            OpKind::ReadModifyWrite => {
                let mut s = self.single(OpKind::Read, client, net)?;
                s.extend(self.single(OpKind::Update, client, net)?);
                s
            }
        };
        Ok(FlowPlan { stages })
    }

    fn record_inserted(&mut self, key: u64) {
        self.key_count = self.key_count.max(key + 1);
    }

    fn remove_node(&mut self, node: NodeId, net: &dyn NetView) -> Result<ChurnPlan, ChurnError> {
        if self.leaving.is_some() || self.joining.is_some() {
            return Err(ChurnError::Busy);
        }
        if node == self.primary {
            return Err(self.ctx.not_removable(node, "the primary is never removed"));
        }
        if self.non_voting.contains(&node) {
            return Err(self.ctx.not_removable(node, "the non-voting member is never removed"));
        }
        if self.ctx.protected.contains(&node) {
            return Err(self.ctx.not_removable(node, "node is protected"));
        }
        if !self.secondaries.contains(&node) {
            return Err(ChurnError::NotMember(self.ctx.name(node)));
        }
        self.leaving = Some(node);
        Ok(ChurnPlan {
            node,
            kind: ChurnKind::Remove,
            transfers: Vec::new(),
            settle: net.rtt(self.ctx.client, self.primary) + net.rtt(self.primary, node),
        })
    }

    fn add_node(&mut self, node: NodeId, net: &dyn NetView) -> Result<ChurnPlan, ChurnError> {
        if self.leaving.is_some() || self.joining.is_some() {
            return Err(ChurnError::Busy);
        }
        if self.members().contains(&node) {
            return Err(ChurnError::AlreadyMember(self.ctx.name(node)));
        }
        let bytes = self.key_count * RECORD_BYTES;
        let sync = stream_time(bytes, net.rtt(self.primary, node), net.bottleneck_mbps(self.primary, node));
        self.secondaries.insert(node);
        self.joining = Some(node);
        Ok(ChurnPlan {
            node,
            kind: ChurnKind::Add,
            transfers: vec![Transfer {
                from: self.primary,
                to: node,
                bytes,
            }],
            settle: net.rtt(self.ctx.client, self.primary) + sync,
        })
    }

    fn finish_churn(&mut self, plan: &ChurnPlan) {
        match plan.kind {
            ChurnKind::Remove => {
                self.secondaries.remove(&plan.node);
                self.leaving = None;
            }
            ChurnKind::Add => self.joining = None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testnet::FlatNet;
    use super::*;

    const CLIENT: NodeId = NodeId(8);

    fn model(pref: ReadPreference) -> MongoModel {
        let members: Vec<NodeId> = (0..8).map(NodeId).collect();
        MongoModel::new(ModelCtx::for_tests(9, CLIENT), &members, NodeId(0), BTreeSet::from([NodeId(7)]), pref, 10_000)
            .unwrap()
    }

    #[test]
    fn full_replication() {
        let m = model(ReadPreference::Primary);
        assert_eq!(m.placement().len(), 8);
        assert!(m.placement().iter().all(|(_, c)| *c == 10_000));
    }

    #[test]
    fn write_goes_to_primary_then_oplog() {
        let mut m = model(ReadPreference::NearestSecondary);
        let net = FlatNet::new(10);
        let plan = m
            .plan_operation(&OpRequest { kind: OpKind::Update, key: 1, scan_len: 0 }, CLIENT, &net)
            .unwrap();
        assert!(matches!(plan.stages[0], Stage::Hop { to: NodeId(0), class: TrafficClass::Request, .. }));
        let Stage::Async { targets, class, .. } = &plan.stages[1] else { panic!() };
        assert_eq!(targets.len(), 7);
        assert_eq!(*class, TrafficClass::Replication);
        // Only one synchronous request, and it is to the primary.
        let sync_to_secondary = plan.stages.iter().any(|s| matches!(s, Stage::Hop { to, .. } if *to != NodeId(0) && *to != CLIENT));
        assert!(!sync_to_secondary);
    }

    #[test]
    fn nearest_secondary_read_avoids_primary() {
        let mut m = model(ReadPreference::NearestSecondary);
        let mut net = FlatNet::new(50);
        net.overrides.push(((CLIENT, NodeId(3)), PathStatus::Usable { latency: SimTime::from_millis(1) }));
        let plan = m
            .plan_operation(&OpRequest { kind: OpKind::Read, key: 1, scan_len: 0 }, CLIENT, &net)
            .unwrap();
        assert!(matches!(plan.stages[0], Stage::Hop { to: NodeId(3), .. }));
        let mut p = model(ReadPreference::Primary);
        let plan = p
            .plan_operation(&OpRequest { kind: OpKind::Read, key: 1, scan_len: 0 }, CLIENT, &net)
            .unwrap();
        assert!(matches!(plan.stages[0], Stage::Hop { to: NodeId(0), .. }));
    }

    #[test]
    fn churn_rules() {
        let net = FlatNet::new(10);
        let mut m = model(ReadPreference::Primary);
        assert!(m.remove_node(NodeId(0), &net).is_err());
        assert!(m.remove_node(NodeId(7), &net).is_err());
        let plan = m.remove_node(NodeId(4), &net).unwrap();
        assert_eq!(plan.bulk_bytes(), 0);
        assert_eq!(plan.settle, SimTime::from_millis(40));
        m.finish_churn(&plan);
        assert!(!m.members().contains(&NodeId(4)));
        let plan = m.add_node(NodeId(4), &net).unwrap();
        assert_eq!(plan.bulk_bytes(), 10_000 * RECORD_BYTES);
        m.finish_churn(&plan);
        assert!(m.members().contains(&NodeId(4)));
        assert!(matches!(m.add_node(NodeId(4), &net), Err(ChurnError::AlreadyMember(_))));
    }
}
