//! Behavioral models of the four database clusters: data placement,
//! per-operation message flows and membership-change plans.

mod cassandra;
mod mongo;
mod mysql;
mod redis;

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::metrics::TrafficClass;
use crate::router::{PathStatus, RouteTable};
use crate::time::SimTime;
use crate::topology::{ClusterTopology, NodeId, Role};
use crate::workload::OpKind;

pub use cassandra::CassandraModel;
pub use mongo::MongoModel;
pub use mysql::MySqlModel;
pub use redis::{key_slot, RedisModel, SlotMap, SlotMove, SlotRange, SLOT_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Cassandra,
    Mongodb,
    Redis,
    Mysql,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Cassandra, Engine::Mongodb, Engine::Redis, Engine::Mysql];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Cassandra => "cassandra",
            Engine::Mongodb => "mongodb",
            Engine::Redis => "redis",
            Engine::Mysql => "mysql",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Engine::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("mongo") && *e == Engine::Mongodb))
            .ok_or_else(|| format!("unknown engine `{s}` (expected cassandra, mongodb, redis or mysql)"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadPreference {
    #[default]
    Primary,
    NearestSecondary,
}

/// Per-request processing time at a node, independent of the network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceTimes {
    /// Front node: Cassandra coordinator, MySQL SQL node.
    pub coordinator_ms: f64,
    /// Node that reads or writes the record.
    pub replica_ms: f64,
}

impl ServiceTimes {
    pub fn defaults(engine: Engine) -> Self {
        let (coordinator_ms, replica_ms) = match engine {
            Engine::Cassandra => (10.0, 6.0),
            Engine::Mongodb => (0.0, 1.0),
            Engine::Redis => (0.0, 0.1),
            Engine::Mysql => (0.5, 0.3),
        };
        ServiceTimes {
            coordinator_ms,
            replica_ms,
        }
    }

    fn coordinator(&self) -> SimTime {
        SimTime::from_ms_f64(self.coordinator_ms)
    }

    fn replica(&self) -> SimTime {
        SimTime::from_ms_f64(self.replica_ms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub engine: Engine,
    #[serde(default = "default_rf")]
    pub rf: usize,
    #[serde(default = "default_cl")]
    pub cl: usize,
    #[serde(default)]
    pub read_preference: ReadPreference,
    #[serde(default = "default_replicas")]
    pub replicas_per_shard: usize,
    /// Never removed, in addition to the role-protected nodes.
    #[serde(default)]
    pub protected_nodes: Vec<String>,
    #[serde(default = "default_vnodes")]
    pub vnodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceTimes>,
}

fn default_rf() -> usize {
    3
}
fn default_cl() -> usize {
    1
}
fn default_replicas() -> usize {
    2
}
fn default_vnodes() -> usize {
    256
}

impl EngineConfig {
    pub fn new(engine: Engine) -> Self {
        EngineConfig {
            engine,
            rf: default_rf(),
            cl: default_cl(),
            read_preference: ReadPreference::default(),
            replicas_per_shard: default_replicas(),
            protected_nodes: Vec::new(),
            vnodes: default_vnodes(),
            service: None,
        }
    }

    pub fn service_times(&self) -> ServiceTimes {
        self.service.unwrap_or_else(|| ServiceTimes::defaults(self.engine))
    }
}

/// Payload sizes in bytes.
pub const RECORD_BYTES: u64 = 1024;
pub const ENVELOPE_BYTES: u64 = 128;
pub const ACK_BYTES: u64 = 64;
pub const GOSSIP_BYTES: u64 = 128;

const READ_RESPONSE: u64 = ACK_BYTES + RECORD_BYTES;
const WRITE_REQUEST: u64 = ENVELOPE_BYTES + RECORD_BYTES;

fn scan_response(records: u64) -> u64 {
    ACK_BYTES + records * RECORD_BYTES
}

/// Waiting time before a membership change is visible cluster-wide.
pub const RING_DELAY: SimTime = SimTime::from_secs(30);
/// Streaming throughput is capped at one window per round trip.
pub const STREAM_WINDOW_BYTES: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpRequest {
    pub kind: OpKind,
    pub key: u64,
    pub scan_len: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Leg {
    pub to: NodeId,
    pub request_bytes: u64,
    pub response_bytes: u64,
    pub service: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    /// One message, then `service` at `to`.
    Hop {
        from: NodeId,
        to: NodeId,
        bytes: u64,
        class: TrafficClass,
        service: SimTime,
    },
    /// Parallel request/response legs from `from`; done after `need` responses.
    Gather { from: NodeId, legs: Vec<Leg>, need: usize },
    /// Fire-and-forget fan-out; does not delay the operation.
    Async {
        from: NodeId,
        targets: Vec<NodeId>,
        bytes: u64,
        class: TrafficClass,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlowPlan {
    pub stages: Vec<Stage>,
}

impl FlowPlan {
    /// Every directed node pair this plan sends over.
    pub fn pairs(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for s in &self.stages {
            match s {
                Stage::Hop { from, to, .. } => out.push((*from, *to)),
                Stage::Gather { from, legs, .. } => {
                    for l in legs {
                        out.push((*from, l.to));
                        out.push((l.to, *from));
                    }
                }
                Stage::Async { from, targets, .. } => out.extend(targets.iter().map(|t| (*from, *t))),
            }
        }
        out.retain(|(a, b)| a != b);
        out
    }

    /// Expected completion time ignoring queueing and serialization.
    pub fn nominal_latency(&self, net: &dyn NetView) -> SimTime {
        let lat = |a, b| net.status(a, b).latency().unwrap_or(SimTime::ZERO);
        let mut total = SimTime::ZERO;
        for s in &self.stages {
            match s {
                Stage::Hop { from, to, service, .. } => total += lat(*from, *to) + *service,
                Stage::Gather { from, legs, need } => {
                    let mut times: Vec<SimTime> = legs
                        .iter()
                        .map(|l| lat(*from, l.to) + l.service + lat(l.to, *from))
                        .collect();
                    times.sort();
                    if let Some(t) = times.get(need.saturating_sub(1)) {
                        total += *t;
                    }
                }
                Stage::Async { .. } => {}
            }
        }
        total
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChurnKind {
    Remove,
    Add,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: NodeId,
    pub to: NodeId,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChurnPlan {
    pub node: NodeId,
    pub kind: ChurnKind,
    pub transfers: Vec<Transfer>,
    /// Time from start until the change is complete.
    pub settle: SimTime,
}

impl ChurnPlan {
    pub fn bulk_bytes(&self) -> u64 {
        self.transfers.iter().map(|t| t.bytes).sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no route while rerouting, ready at {ready_at}")]
    Stalled { ready_at: SimTime },
    #[error("owner {node} unreachable")]
    Unreachable { node: NodeId },
    #[error("no serving node owns the key")]
    NoOwner,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChurnError {
    #[error("unsupported per scope: {0} membership changes are not modeled")]
    Unsupported(&'static str),
    #[error("node `{node}` cannot be removed: {reason}")]
    NotRemovable { node: String, reason: String },
    #[error("node `{0}` is not a member")]
    NotMember(String),
    #[error("node `{0}` is already a member")]
    AlreadyMember(String),
    #[error("another membership change is in progress")]
    Busy,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{engine} needs at least {need} data nodes, got {have}")]
    InsufficientNodes { engine: &'static str, need: usize, have: usize },
    #[error("no node has the `{0:?}` role")]
    MissingRole(Role),
    #[error("{nodes} data nodes do not divide into groups of {replicas}")]
    BadGroups { nodes: usize, replicas: usize },
    #[error("protected node `{0}` is not in the topology")]
    UnknownProtected(String),
    #[error("invalid engine setting: {0}")]
    Invalid(String),
}

/// What a model may ask about the network while planning.
pub trait NetView {
    fn status(&self, from: NodeId, to: NodeId) -> PathStatus;
    fn bottleneck_mbps(&self, from: NodeId, to: NodeId) -> Option<f64>;

    fn rtt(&self, a: NodeId, b: NodeId) -> SimTime {
        let one = |x, y| self.status(x, y).latency().unwrap_or(SimTime::ZERO);
        one(a, b) + one(b, a)
    }
}

/// The live view: current route table over the current topology.
pub struct RoutedView<'a> {
    pub topo: &'a ClusterTopology,
    pub routes: &'a RouteTable,
    pub t: SimTime,
}

impl NetView for RoutedView<'_> {
    fn status(&self, from: NodeId, to: NodeId) -> PathStatus {
        self.routes.status(self.topo, from, to)
    }

    fn bottleneck_mbps(&self, from: NodeId, to: NodeId) -> Option<f64> {
        if from == to {
            return None;
        }
        self.routes.bottleneck_mbps(self.topo, from, to, self.t)
    }
}

pub trait DbModel: Send {
    fn engine(&self) -> Engine;
    /// Data-bearing members, including ones draining out.
    fn members(&self) -> Vec<NodeId>;
    fn key_count(&self) -> u64;
    /// Records held per member.
    fn placement(&self) -> Vec<(NodeId, u64)>;
    fn plan_operation(&mut self, op: &OpRequest, client: NodeId, net: &dyn NetView) -> Result<FlowPlan, PlanError>;
    fn record_inserted(&mut self, key: u64);
    fn remove_node(&mut self, node: NodeId, net: &dyn NetView) -> Result<ChurnPlan, ChurnError>;
    fn add_node(&mut self, node: NodeId, net: &dyn NetView) -> Result<ChurnPlan, ChurnError>;
    fn finish_churn(&mut self, plan: &ChurnPlan);
}

/// Builds the model for `members` and places `record_count` records.
pub fn build_model(
    cfg: &EngineConfig,
    topo: &ClusterTopology,
    members: &[NodeId],
    client: NodeId,
    record_count: u64,
    seed: u64,
) -> Result<Box<dyn DbModel>, ModelError> {
    let mut protected = BTreeSet::new();
    for name in &cfg.protected_nodes {
        protected.insert(
            topo.node_by_name(name)
                .ok_or_else(|| ModelError::UnknownProtected(name.clone()))?,
        );
    }
    let names = topo.nodes().iter().map(|n| n.name.clone()).collect();
    let ctx = ModelCtx {
        names,
        protected,
        service: cfg.service_times(),
        client,
    };
    Ok(match cfg.engine {
        Engine::Cassandra => {
            let seed_node = find_role(topo, members, Role::Seed)?;
            Box::new(CassandraModel::new(ctx, members, seed_node, cfg.rf, cfg.cl, cfg.vnodes, record_count, seed)?)
        }
        Engine::Mongodb => {
            let primary = find_role(topo, members, Role::Primary)?;
            let non_voting = members
                .iter()
                .copied()
                .filter(|n| topo.node(*n).has(Role::NonVoting))
                .collect();
            Box::new(MongoModel::new(ctx, members, primary, non_voting, cfg.read_preference, record_count)?)
        }
        Engine::Redis => Box::new(RedisModel::new(ctx, members, record_count)?),
        Engine::Mysql => {
            let sql = find_role(topo, members, Role::Sql)?;
            let mgmt = find_role(topo, members, Role::Mgmt).unwrap_or(sql);
            Box::new(MySqlModel::new(ctx, members, sql, mgmt, cfg.replicas_per_shard, record_count)?)
        }
    })
}

fn find_role(topo: &ClusterTopology, members: &[NodeId], role: Role) -> Result<NodeId, ModelError> {
    members
        .iter()
        .copied()
        .find(|n| topo.node(*n).has(role))
        .ok_or(ModelError::MissingRole(role))
}

/// Things every model needs besides its own placement.
#[derive(Clone, Debug)]
pub(crate) struct ModelCtx {
    names: Vec<String>,
    protected: BTreeSet<NodeId>,
    service: ServiceTimes,
    client: NodeId,
}

impl ModelCtx {
    fn name(&self, n: NodeId) -> String {
        self.names.get(n.idx()).cloned().unwrap_or_else(|| n.to_string())
    }

    fn not_removable(&self, n: NodeId, reason: &str) -> ChurnError {
        ChurnError::NotRemovable {
            node: self.name(n),
            reason: reason.to_string(),
        }
    }

    #[cfg(test)]
    pub(crate) fn for_tests(n: usize, client: NodeId) -> Self {
        ModelCtx {
            names: (0..n).map(|i| format!("n{i}")).collect(),
            protected: BTreeSet::new(),
            service: ServiceTimes { coordinator_ms: 1.0, replica_ms: 1.0 },
            client,
        }
    }
}

/// `user<key>` as YCSB names it, without allocating.
pub(crate) struct KeyName {
    buf: [u8; 24],
    len: usize,
}

impl KeyName {
    pub(crate) fn new(key: u64) -> Self {
        let mut buf = [0u8; 24];
        let mut cur = std::io::Cursor::new(&mut buf[..]);
        write!(cur, "user{key}").expect("fits in 24 bytes");
        let len = cur.position() as usize;
        KeyName { buf, len }
    }

    pub(crate) fn as_bytes(&self) -> &[u8] {
        &self.buf[..self.len]
    }
}

fn key_hash(key: u64) -> u64 {
    xxhash_rust::xxh3::xxh3_64(KeyName::new(key).as_bytes())
}

/// Bulk transfer time: two round trips of setup, then the payload at the
/// lesser of the path bandwidth and one window per round trip.
pub fn stream_time(bytes: u64, rtt: SimTime, bw_mbps: Option<f64>) -> SimTime {
    if bytes == 0 {
        return SimTime::ZERO;
    }
    let mut rate = bw_mbps.unwrap_or(f64::INFINITY);
    if rtt > SimTime::ZERO {
        rate = rate.min((STREAM_WINDOW_BYTES * 8) as f64 / rtt.as_micros() as f64);
    }
    let wire = if rate.is_finite() {
        SimTime::from_micros((bytes as f64 * 8.0 / rate).round() as u64)
    } else {
        SimTime::ZERO
    };
    rtt + rtt + wire
}

/// Usable status of `to` from `from`, or the reason it is not.
fn reach(net: &dyn NetView, from: NodeId, to: NodeId) -> Result<SimTime, PlanError> {
    match net.status(from, to) {
        PathStatus::Local => Ok(SimTime::ZERO),
        PathStatus::Usable { latency } => Ok(latency),
        PathStatus::Rerouting { ready_at } => Err(PlanError::Stalled { ready_at }),
        PathStatus::Unreachable => Err(PlanError::Unreachable { node: to }),
    }
}

/// Keeps the legs whose round trip is usable. Fails when fewer than `need`
/// remain, reporting the earliest time a stalled leg could come back.
fn usable_legs(net: &dyn NetView, from: NodeId, legs: Vec<Leg>, need: usize) -> Result<Vec<Leg>, PlanError> {
    let mut ok = Vec::with_capacity(legs.len());
    let mut first_err: Option<PlanError> = None;
    for l in legs {
        match reach(net, from, l.to).and_then(|_| reach(net, l.to, from)) {
            Ok(_) => ok.push(l),
            Err(e) => {
                first_err = Some(match (first_err, e) {
                    (Some(PlanError::Stalled { ready_at: a }), PlanError::Stalled { ready_at: b }) => {
                        PlanError::Stalled { ready_at: a.min(b) }
                    }
                    (Some(PlanError::Stalled { ready_at }), _) | (_, PlanError::Stalled { ready_at }) => {
                        PlanError::Stalled { ready_at }
                    }
                    (_, e) => e,
                })
            }
        }
    }
    if ok.len() >= need.max(1) {
        Ok(ok)
    } else {
        Err(first_err.unwrap_or(PlanError::NoOwner))
    }
}

/// Hop stage from `from` to `to` after checking the route.
fn hop(
    net: &dyn NetView,
    from: NodeId,
    to: NodeId,
    bytes: u64,
    class: TrafficClass,
    service: SimTime,
) -> Result<Stage, PlanError> {
    reach(net, from, to)?;
    Ok(Stage::Hop {
        from,
        to,
        bytes,
        class,
        service,
    })
}

#[cfg(test)]
pub(crate) mod testnet {
    use super::*;

    /// Every pair usable with a fixed latency, except listed overrides.
    pub struct FlatNet {
        pub latency: SimTime,
        pub bw: f64,
        pub overrides: Vec<((NodeId, NodeId), PathStatus)>,
    }

    impl FlatNet {
        pub fn new(latency_ms: u64) -> Self {
            FlatNet {
                latency: SimTime::from_millis(latency_ms),
                bw: 100.0,
                overrides: Vec::new(),
            }
        }
    }

    impl NetView for FlatNet {
        fn status(&self, from: NodeId, to: NodeId) -> PathStatus {
            if from == to {
                return PathStatus::Local;
            }
            self.overrides
                .iter()
                .find(|(p, _)| *p == (from, to))
                .map(|(_, s)| *s)
                .unwrap_or(PathStatus::Usable { latency: self.latency })
        }

        fn bottleneck_mbps(&self, _: NodeId, _: NodeId) -> Option<f64> {
            Some(self.bw)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_names() {
        assert_eq!(KeyName::new(0).as_bytes(), b"user0");
        assert_eq!(KeyName::new(u64::MAX).as_bytes(), format!("user{}", u64::MAX).as_bytes());
    }

    #[test]
    fn stream_time_is_window_limited() {
        assert_eq!(stream_time(0, SimTime::from_millis(100), Some(100.0)), SimTime::ZERO);
        // 1 MiB per 100 ms = 83.9 Mb/s < 100 Mb/s.
        let t = stream_time(STREAM_WINDOW_BYTES * 10, SimTime::from_millis(100), Some(100.0));
        assert_eq!(t, SimTime::from_millis(200 + 1000));
        // Bandwidth-bound at short rtt.
        let t = stream_time(12_500_000, SimTime::from_millis(1), Some(100.0));
        assert_eq!(t, SimTime::from_millis(2 + 1000));
    }

    #[test]
    fn engine_names_parse() {
        assert_eq!("MongoDB".parse::<Engine>().unwrap(), Engine::Mongodb);
        assert_eq!("mongo".parse::<Engine>().unwrap(), Engine::Mongodb);
        assert!("oracle".parse::<Engine>().is_err());
    }
}
