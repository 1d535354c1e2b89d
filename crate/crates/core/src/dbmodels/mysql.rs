use std::collections::BTreeMap;

use super::*;

/// NDB-style cluster: data nodes form node groups of `replicas_per_shard`,
/// each shard lives on every node of one group, clients go through the SQL
/// node.
pub struct MySqlModel {
    ctx: ModelCtx,
    groups: Vec<Vec<NodeId>>,
    sql_node: NodeId,
    mgmt_node: NodeId,
    key_count: u64,
}

impl MySqlModel {
    pub(crate) fn new(
        ctx: ModelCtx,
        members: &[NodeId],
        sql_node: NodeId,
        mgmt_node: NodeId,
        replicas_per_shard: usize,
        record_count: u64,
    ) -> Result<Self, ModelError> {
        if replicas_per_shard == 0 || members.is_empty() || members.len() % replicas_per_shard != 0 {
            return Err(ModelError::BadGroups {
                nodes: members.len(),
                replicas: replicas_per_shard,
            });
        }
        let mut sorted = members.to_vec();
        sorted.sort();
        let groups = sorted.chunks(replicas_per_shard).map(|c| c.to_vec()).collect();
        Ok(MySqlModel {
            ctx,
            groups,
            sql_node,
            mgmt_node,
            key_count: record_count,
        })
    }

    pub fn node_groups(&self) -> &[Vec<NodeId>] {
        &self.groups
    }

    pub fn sql_node(&self) -> NodeId {
        self.sql_node
    }

    pub fn mgmt_node(&self) -> NodeId {
        self.mgmt_node
    }

    fn group_of(&self, key: u64) -> usize {
        (key_hash(key) % self.groups.len() as u64) as usize
    }

    fn leg(&self, to: NodeId, req: u64, resp: u64) -> Leg {
        Leg {
            to,
            request_bytes: req,
            response_bytes: resp,
            service: self.ctx.service.replica(),
        }
    }

    /// The group member with the shortest usable round trip from the SQL node.
    fn nearest(&self, group: usize, net: &dyn NetView, resp: u64) -> Result<Leg, PlanError> {
        let legs: Vec<Leg> = self.groups[group]
            .iter()
            .map(|&n| self.leg(n, ENVELOPE_BYTES, resp))
            .collect();
        let ok = usable_legs(net, self.sql_node, legs, 1)?;
        Ok(*ok
            .iter()
            .min_by_key(|l| (net.rtt(self.sql_node, l.to), l.to))
            .expect("at least one usable leg"))
    }

    fn single(&self, kind: OpKind, key: u64, client: NodeId, net: &dyn NetView) -> Result<Vec<Stage>, PlanError> {
        let g = self.group_of(key);
        let sql = self.sql_node;
        let front = self.ctx.service.coordinator();
        if kind == OpKind::Read {
            return Ok(vec![
                hop(net, client, sql, ENVELOPE_BYTES, TrafficClass::Request, front)?,
                Stage::Gather {
                    from: sql,
                    legs: vec![self.nearest(g, net, READ_RESPONSE)?],
                    need: 1,
                },
                hop(net, sql, client, READ_RESPONSE, TrafficClass::Response, SimTime::ZERO)?,
            ]);
        }
        // Two-phase commit over the reachable replicas of the group.
        let prepare: Vec<Leg> = self.groups[g]
            .iter()
            .map(|&n| self.leg(n, WRITE_REQUEST, ACK_BYTES))
            .collect();
        let prepare = usable_legs(net, sql, prepare, 1)?;
        let commit: Vec<Leg> = prepare
            .iter()
            .map(|l| self.leg(l.to, ENVELOPE_BYTES, ACK_BYTES))
            .collect();
        Ok(vec![
            hop(net, client, sql, WRITE_REQUEST, TrafficClass::Request, front)?,
            Stage::Gather {
                from: sql,
                need: prepare.len(),
                legs: prepare,
            },
            Stage::Gather {
                from: sql,
                need: commit.len(),
                legs: commit,
            },
            hop(net, sql, client, ACK_BYTES, TrafficClass::Response, SimTime::ZERO)?,
        ])
    }
}

impl DbModel for MySqlModel {
    fn engine(&self) -> Engine {
        Engine::Mysql
    }

    fn members(&self) -> Vec<NodeId> {
        let mut m: Vec<NodeId> = self.groups.iter().flatten().copied().collect();
        m.sort();
        m
    }

    fn key_count(&self) -> u64 {
        self.key_count
    }

    fn placement(&self) -> Vec<(NodeId, u64)> {
        let mut per_group = vec![0u64; self.groups.len()];
        for k in 0..self.key_count {
            per_group[self.group_of(k)] += 1;
        }
        let mut out: Vec<(NodeId, u64)> = self
            .groups
            .iter()
            .zip(per_group)
            .flat_map(|(g, c)| g.iter().map(move |n| (*n, c)))
            .collect();
        out.sort();
        out
    }

    fn plan_operation(&mut self, op: &OpRequest, client: NodeId, net: &dyn NetView) -> Result<FlowPlan, PlanError> {
        let stages = match op.kind {
            OpKind::Read | OpKind::Update | OpKind::Insert => self.single(op.kind, op.key, client, net)?,
            OpKind::Scan => {
                let end = (op.key + u64::from(op.scan_len)).min(self.key_count.max(op.key + 1));
                let mut per_group: BTreeMap<usize, u64> = BTreeMap::new();
                for k in op.key..end {
                    *per_group.entry(self.group_of(k)).or_default() += 1;
                }
                let mut legs = Vec::with_capacity(per_group.len());
                for (g, cnt) in per_group {
                    legs.push(self.nearest(g, net, scan_response(cnt))?);
                }
                vec![
                    hop(net, client, self.sql_node, ENVELOPE_BYTES, TrafficClass::Request, self.ctx.service.coordinator())?,
                    Stage::Gather {
                        from: self.sql_node,
                        need: legs.len(),
                        legs,
                    },
                    hop(net, self.sql_node, client, scan_response(end - op.key), TrafficClass::Response, SimTime::ZERO)?,
                ]
            }
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

    fn remove_node(&mut self, _: NodeId, _: &dyn NetView) -> Result<ChurnPlan, ChurnError> {
        Err(ChurnError::Unsupported("MySQL node group"))
    }

    fn add_node(&mut self, _: NodeId, _: &dyn NetView) -> Result<ChurnPlan, ChurnError> {
        Err(ChurnError::Unsupported("MySQL node group"))
    }

    fn finish_churn(&mut self, _: &ChurnPlan) {}
}

#[cfg(test)]
mod tests {
    use super::super::testnet::FlatNet;
    use super::*;

    fn model(n: u16) -> MySqlModel {
        let members: Vec<NodeId> = (0..n).map(NodeId).collect();
        MySqlModel::new(ModelCtx::for_tests(9, NodeId(8)), &members, NodeId(0), NodeId(1), 2, 10_000).unwrap()
    }

    #[test]
    fn group_count() {
        assert_eq!(model(6).node_groups().len(), 3);
        let members: Vec<NodeId> = (0..5).map(NodeId).collect();
        assert!(MySqlModel::new(ModelCtx::for_tests(9, NodeId(8)), &members, NodeId(0), NodeId(0), 2, 1).is_err());
    }

    #[test]
    fn shard_on_every_group_member() {
        let m = model(8);
        let p = m.placement();
        assert_eq!(p.iter().map(|x| x.1).sum::<u64>(), 20_000);
        for g in m.node_groups() {
            let c: Vec<u64> = g.iter().map(|n| p.iter().find(|x| x.0 == *n).unwrap().1).collect();
            assert!(c.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn read_one_replica_write_all() {
        let mut m = model(8);
        let net = FlatNet::new(5);
        let r = m
            .plan_operation(&OpRequest { kind: OpKind::Read, key: 3, scan_len: 0 }, NodeId(8), &net)
            .unwrap();
        let Stage::Gather { legs, .. } = &r.stages[1] else { panic!() };
        assert_eq!(legs.len(), 1);
        let w = m
            .plan_operation(&OpRequest { kind: OpKind::Update, key: 3, scan_len: 0 }, NodeId(8), &net)
            .unwrap();
        let Stage::Gather { legs, need, .. } = &w.stages[1] else { panic!() };
        assert_eq!((legs.len(), *need), (2, 2));
    }

    #[test]
    fn churn_is_out_of_scope() {
        let mut m = model(8);
        let err = m.remove_node(NodeId(3), &FlatNet::new(5)).unwrap_err();
        assert!(err.to_string().contains("unsupported per scope"));
        assert!(m.add_node(NodeId(9), &FlatNet::new(5)).is_err());
    }
}
