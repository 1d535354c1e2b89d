use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::*;

pub const SLOT_COUNT: u16 = 16384;

const CRC16: crc::Crc<u16> = crc::Crc::<u16>::new(&crc::CRC_16_XMODEM);

/// Keys moved per MIGRATE round trip during resharding.
const MIGRATE_BATCH: u64 = 10;

pub fn key_slot(key: &[u8]) -> u16 {
    CRC16.checksum(key) % SLOT_COUNT
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRange {
    pub start: u16,
    /// Inclusive.
    pub end: u16,
    pub owner: NodeId,
}

impl SlotRange {
    pub fn len(&self) -> u32 {
        u32::from(self.end - self.start) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMove {
    pub slot: u16,
    pub from: NodeId,
    pub to: NodeId,
}

/// Ownership of all 16384 slots as sorted, contiguous, gap-free ranges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMap {
    ranges: Vec<SlotRange>,
}

impl SlotMap {
    /// Initial layout: boundaries on multiples of 100 when that splits the
    /// slots sensibly (three masters get 0-5500, 5501-11000, 11001-16383),
    /// otherwise an even split.
    pub fn initial(nodes: &[NodeId]) -> Self {
        assert!(!nodes.is_empty(), "slot map needs at least one node");
        let n = nodes.len() as u32;
        let total = u32::from(SLOT_COUNT);
        let step = ((f64::from(total / n) / 100.0).round() as u32) * 100;
        let aligned = n > 1 && step > 0 && (n - 1) * step + 1 < total - 1;
        let mut ranges = Vec::with_capacity(nodes.len());
        for (i, &owner) in nodes.iter().enumerate() {
            let i = i as u32;
            let (start, end) = if aligned {
                let start = if i == 0 { 0 } else { i * step + 1 };
                let end = if i == n - 1 { total - 1 } else { (i + 1) * step };
                (start, end)
            } else {
                (i * total / n, (i + 1) * total / n - 1)
            };
            ranges.push(SlotRange {
                start: start as u16,
                end: end as u16,
                owner,
            });
        }
        SlotMap { ranges }
    }

    fn from_owners(owners: &[NodeId]) -> Self {
        let mut ranges: Vec<SlotRange> = Vec::new();
        for (s, &o) in owners.iter().enumerate() {
            match ranges.last_mut() {
                Some(r) if r.owner == o => r.end = s as u16,
                _ => ranges.push(SlotRange {
                    start: s as u16,
                    end: s as u16,
                    owner: o,
                }),
            }
        }
        SlotMap { ranges }
    }

    fn owners(&self) -> Vec<NodeId> {
        let mut v = Vec::with_capacity(usize::from(SLOT_COUNT));
        for r in &self.ranges {
            v.extend(std::iter::repeat_n(r.owner, r.len() as usize));
        }
        v
    }

    pub fn ranges(&self) -> &[SlotRange] {
        &self.ranges
    }

    pub fn owner(&self, slot: u16) -> NodeId {
        let i = self.ranges.partition_point(|r| r.end < slot);
        self.ranges[i].owner
    }

    pub fn counts(&self) -> BTreeMap<NodeId, u32> {
        let mut c = BTreeMap::new();
        for r in &self.ranges {
            *c.entry(r.owner).or_insert(0) += r.len();
        }
        c
    }

    /// Moves every slot of `from` to `to`.
    pub fn reshard_all(&mut self, from: NodeId, to: NodeId) -> Vec<SlotMove> {
        let mut owners = self.owners();
        let mut moves = Vec::new();
        for (s, o) in owners.iter_mut().enumerate() {
            if *o == from {
                *o = to;
                moves.push(SlotMove { slot: s as u16, from, to });
            }
        }
        *self = SlotMap::from_owners(&owners);
        moves
    }

    /// Equalizes slot counts across `members` (within one slot), moving the
    /// lowest-numbered surplus slots first. Slots of non-members are drained.
    pub fn rebalance(&mut self, members: &[NodeId]) -> Vec<SlotMove> {
        let members: Vec<NodeId> = members.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        assert!(!members.is_empty(), "rebalance needs at least one member");
        let counts = self.counts();
        let m = members.len() as u32;
        let total = u32::from(SLOT_COUNT);
        let (base, extra) = (total / m, total % m);
        // The nodes already holding the most keep the spare slots.
        let mut by_size = members.clone();
        by_size.sort_by_key(|n| (std::cmp::Reverse(counts.get(n).copied().unwrap_or(0)), *n));
        let mut target: BTreeMap<NodeId, u32> = BTreeMap::new();
        for (i, n) in by_size.iter().enumerate() {
            target.insert(*n, base + u32::from((i as u32) < extra));
        }
        let mut surplus: BTreeMap<NodeId, u32> = BTreeMap::new();
        for (n, c) in &counts {
            let t = target.get(n).copied().unwrap_or(0);
            if *c > t {
                surplus.insert(*n, c - t);
            }
        }
        let mut deficit: Vec<(NodeId, u32)> = members
            .iter()
            .map(|n| (*n, target[n].saturating_sub(counts.get(n).copied().unwrap_or(0))))
            .filter(|(_, d)| *d > 0)
            .collect();
        let mut owners = self.owners();
        let mut moves = Vec::new();
        for (s, o) in owners.iter_mut().enumerate() {
            let Some(left) = surplus.get_mut(o) else { continue };
            if *left == 0 {
                continue;
            }
            let Some(recv) = deficit.iter_mut().find(|(_, d)| *d > 0) else { break };
            moves.push(SlotMove {
                slot: s as u16,
                from: *o,
                to: recv.0,
            });
            *left -= 1;
            recv.1 -= 1;
            *o = recv.0;
        }
        *self = SlotMap::from_owners(&owners);
        moves
    }

    /// Structural check: sorted, gap-free cover of all slots.
    pub fn is_complete(&self) -> bool {
        let mut next = 0u32;
        for r in &self.ranges {
            if u32::from(r.start) != next || r.end < r.start {
                return false;
            }
            next = u32::from(r.end) + 1;
        }
        next == u32::from(SLOT_COUNT)
    }
}

/// Masters only; each key lives on the owner of its hash slot.
pub struct RedisModel {
    ctx: ModelCtx,
    members: BTreeSet<NodeId>,
    slots: SlotMap,
    records_per_slot: Vec<u32>,
    key_count: u64,
    leaving: Option<NodeId>,
    busy: bool,
}

impl RedisModel {
    pub(crate) fn new(ctx: ModelCtx, members: &[NodeId], record_count: u64) -> Result<Self, ModelError> {
        if members.is_empty() {
            return Err(ModelError::InsufficientNodes {
                engine: "redis",
                need: 1,
                have: 0,
            });
        }
        let mut records_per_slot = vec![0u32; usize::from(SLOT_COUNT)];
        for k in 0..record_count {
            records_per_slot[usize::from(slot_of(k))] += 1;
        }
        Ok(RedisModel {
            ctx,
            members: members.iter().copied().collect(),
            slots: SlotMap::initial(members),
            records_per_slot,
            key_count: record_count,
            leaving: None,
            busy: false,
        })
    }

    pub fn slot_map(&self) -> &SlotMap {
        &self.slots
    }

    fn owner_of(&self, key: u64) -> NodeId {
        self.slots.owner(slot_of(key))
    }

    /// Turns slot moves into per-pair transfers and the time redis-cli needs
    /// to migrate them one slot at a time.
    fn migration(&self, node: NodeId, kind: ChurnKind, moves: &[SlotMove], net: &dyn NetView) -> ChurnPlan {
        let cli = self.ctx.client;
        let mut per_pair: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
        let mut settle = SimTime::ZERO;
        for mv in moves {
            let keys = u64::from(self.records_per_slot[usize::from(mv.slot)]);
            let bytes = keys * RECORD_BYTES;
            if bytes > 0 {
                *per_pair.entry((mv.from, mv.to)).or_default() += bytes;
            }
            let (cli_src, cli_dst) = (net.rtt(cli, mv.from), net.rtt(cli, mv.to));
            // SETSLOT importing/migrating, then SETSLOT node on both sides.
            settle += cli_src + cli_src + cli_dst + cli_dst;
            let batches = keys.div_ceil(MIGRATE_BATCH).max(1);
            settle += cli_src.mul_f64(batches as f64);
            if keys > 0 {
                let bw = net.bottleneck_mbps(mv.from, mv.to);
                let wire = bw.map_or(SimTime::ZERO, |bw| SimTime::from_micros((bytes as f64 * 8.0 / bw).round() as u64));
                settle += net.rtt(mv.from, mv.to).mul_f64(batches as f64) + wire;
            }
        }
        ChurnPlan {
            node,
            kind,
            transfers: per_pair
                .into_iter()
                .map(|((from, to), bytes)| Transfer { from, to, bytes })
                .collect(),
            settle,
        }
    }

    fn single(&self, kind: OpKind, key: u64, client: NodeId, net: &dyn NetView) -> Result<Vec<Stage>, PlanError> {
        let owner = self.owner_of(key);
        let (req, resp) = if kind == OpKind::Read { (ENVELOPE_BYTES, READ_RESPONSE) } else { (WRITE_REQUEST, ACK_BYTES) };
        Ok(vec![
            hop(net, client, owner, req, TrafficClass::Request, self.ctx.service.replica())?,
            hop(net, owner, client, resp, TrafficClass::Response, SimTime::ZERO)?,
        ])
    }
}

fn slot_of(key: u64) -> u16 {
    key_slot(KeyName::new(key).as_bytes())
}

impl DbModel for RedisModel {
    fn engine(&self) -> Engine {
        Engine::Redis
    }

    fn members(&self) -> Vec<NodeId> {
        self.members.iter().copied().collect()
    }

    fn key_count(&self) -> u64 {
        self.key_count
    }

    fn placement(&self) -> Vec<(NodeId, u64)> {
        let mut c: BTreeMap<NodeId, u64> = self.members.iter().map(|n| (*n, 0)).collect();
        for r in self.slots.ranges() {
            let n: u64 = (r.start..=r.end)
                .map(|s| u64::from(self.records_per_slot[usize::from(s)]))
                .sum();
            *c.entry(r.owner).or_default() += n;
        }
        c.into_iter().collect()
    }

    fn plan_operation(&mut self, op: &OpRequest, client: NodeId, net: &dyn NetView) -> Result<FlowPlan, PlanError> {
        let stages = match op.kind {
            OpKind::Read | OpKind::Update | OpKind::Insert => self.single(op.kind, op.key, client, net)?,
            OpKind::Scan => {
                let end = (op.key + u64::from(op.scan_len)).min(self.key_count.max(op.key + 1));
                let mut per_owner: BTreeMap<NodeId, u64> = BTreeMap::new();
                for k in op.key..end {
                    *per_owner.entry(self.owner_of(k)).or_default() += 1;
                }
                let legs: Vec<Leg> = per_owner
                    .into_iter()
                    .map(|(to, cnt)| Leg {
                        to,
                        request_bytes: ENVELOPE_BYTES,
                        response_bytes: scan_response(cnt),
                        service: self.ctx.service.replica(),
                    })
                    .collect();
                let need = legs.len();
                vec![Stage::Gather {
                    from: client,
                    legs: usable_legs(net, client, legs, need)?,
                    need,
                }]
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
        if key >= self.key_count {
            self.records_per_slot[usize::from(slot_of(key))] += 1;
            self.key_count = key + 1;
        }
    }

    fn remove_node(&mut self, node: NodeId, net: &dyn NetView) -> Result<ChurnPlan, ChurnError> {
        if self.busy {
            return Err(ChurnError::Busy);
        }
        if !self.members.contains(&node) {
            return Err(ChurnError::NotMember(self.ctx.name(node)));
        }
        if self.ctx.protected.contains(&node) {
            return Err(self.ctx.not_removable(node, "node is protected"));
        }
        if self.members.len() < 3 {
            return Err(self.ctx.not_removable(node, "a cluster keeps at least 2 masters"));
        }
        let rest: Vec<NodeId> = self.members.iter().copied().filter(|n| *n != node).collect();
        let counts = self.slots.counts();
        let sink = *rest
            .iter()
            .min_by_key(|n| (counts.get(n).copied().unwrap_or(0), **n))
            .expect("at least two remain");
        let mut moves = self.slots.reshard_all(node, sink);
        moves.extend(self.slots.rebalance(&rest));
        self.busy = true;
        self.leaving = Some(node);
        Ok(self.migration(node, ChurnKind::Remove, &moves, net))
    }

    fn add_node(&mut self, node: NodeId, net: &dyn NetView) -> Result<ChurnPlan, ChurnError> {
        if self.busy {
            return Err(ChurnError::Busy);
        }
        if self.members.contains(&node) {
            return Err(ChurnError::AlreadyMember(self.ctx.name(node)));
        }
        self.members.insert(node);
        let members = self.members();
        let moves = self.slots.rebalance(&members);
        self.busy = true;
        Ok(self.migration(node, ChurnKind::Add, &moves, net))
    }

    fn finish_churn(&mut self, plan: &ChurnPlan) {
        if plan.kind == ChurnKind::Remove {
            self.members.remove(&plan.node);
        }
        self.leaving = None;
        self.busy = false;
    }
}

#[cfg(test)]
mod tests {
    use super::super::testnet::FlatNet;
    use super::*;

    fn ids(n: u16) -> Vec<NodeId> {
        (0..n).map(NodeId).collect()
    }

    #[test]
    fn crc16_matches_reference_vector() {
        assert_eq!(CRC16.checksum(b"123456789"), 0x31C3);
    }

    #[test]
    fn three_master_layout() {
        let m = SlotMap::initial(&ids(3));
        let r: Vec<(u16, u16)> = m.ranges().iter().map(|r| (r.start, r.end)).collect();
        assert_eq!(r, [(0, 5500), (5501, 11000), (11001, 16383)]);
        let c: Vec<u32> = m.counts().values().copied().collect();
        assert_eq!(c, [5501, 5500, 5383]);
        assert_eq!(m.owner(6000), NodeId(1));
        assert!(m.is_complete());
    }

    #[test]
    fn odd_sizes_still_cover() {
        for n in 1..=40 {
            let m = SlotMap::initial(&ids(n));
            assert!(m.is_complete(), "{n}");
            assert_eq!(m.counts().len(), n as usize);
        }
    }

    #[test]
    fn fourth_node_gets_a_quarter() {
        let mut m = SlotMap::initial(&ids(3));
        m.rebalance(&ids(4));
        let c = m.counts();
        assert!(c.values().all(|&v| v == 4096));
    }

    #[test]
    fn removal_reshards_then_rebalances() {
        let net = FlatNet::new(20);
        let mut r = RedisModel::new(ModelCtx::for_tests(9, NodeId(8)), &ids(8), 10_000).unwrap();
        let before = r.placement().into_iter().find(|(n, _)| *n == NodeId(3)).unwrap().1;
        let plan = r.remove_node(NodeId(3), &net).unwrap();
        let out: u64 = plan.transfers.iter().filter(|t| t.from == NodeId(3)).map(|t| t.bytes).sum();
        assert_eq!(out, before * RECORD_BYTES);
        assert!(r.slot_map().counts().get(&NodeId(3)).is_none());
        let c = r.slot_map().counts();
        assert!(c.values().max().unwrap() - c.values().min().unwrap() <= 1);
        r.finish_churn(&plan);
        assert_eq!(r.members().len(), 7);
    }

    #[test]
    fn settle_scales_with_latency() {
        let settle = |ms| {
            let mut r = RedisModel::new(ModelCtx::for_tests(9, NodeId(8)), &ids(8), 10_000).unwrap();
            r.remove_node(NodeId(3), &FlatNet::new(ms)).unwrap().settle
        };
        let (near, far) = (settle(20), settle(100));
        let ratio = far.as_ms() / near.as_ms();
        assert!((4.5..=5.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn minimum_two_masters() {
        let net = FlatNet::new(20);
        let mut r = RedisModel::new(ModelCtx::for_tests(9, NodeId(8)), &ids(2), 100).unwrap();
        assert!(matches!(r.remove_node(NodeId(0), &net), Err(ChurnError::NotRemovable { .. })));
    }

    #[test]
    fn read_goes_to_slot_owner() {
        let net = FlatNet::new(20);
        let mut r = RedisModel::new(ModelCtx::for_tests(4, NodeId(3)), &ids(3), 100).unwrap();
        let key = (0..).find(|k| (5501..=11000).contains(&slot_of(*k))).unwrap();
        let plan = r
            .plan_operation(&OpRequest { kind: OpKind::Read, key, scan_len: 0 }, NodeId(3), &net)
            .unwrap();
        assert_eq!(plan.stages.len(), 2);
        assert!(matches!(plan.stages[0], Stage::Hop { to: NodeId(1), .. }));
    }
}
