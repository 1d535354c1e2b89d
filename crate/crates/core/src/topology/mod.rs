//! Nodes, the redundant link multigraph and per-link QoS over virtual time.

mod reference;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::time::SimTime;

pub use reference::{builtin_reference_matrix, PairReference, ReferenceMatrix, REGIONS, UPLOAD_RANGE_MBPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub u32);

impl LinkId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Client,
    Data,
    Seed,
    Primary,
    NonVoting,
    Sql,
    Mgmt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub name: String,
    pub region: String,
    pub roles: BTreeSet<Role>,
}

impl NodeSpec {
    pub fn has(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkState {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub id: LinkId,
    pub name: String,
    pub a: NodeId,
    pub b: NodeId,
    pub conn_type: u8,
    pub base_latency_ms: f64,
    /// Used when traversing a -> b.
    pub down_bw_mbps: f64,
    /// Used when traversing b -> a.
    pub up_bw_mbps: f64,
    pub state: LinkState,
    /// Never removed by link churn (the client's access link).
    pub protected: bool,
}

impl LinkSpec {
    pub fn other(&self, n: NodeId) -> Option<NodeId> {
        if n == self.a {
            Some(self.b)
        } else if n == self.b {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn is_up(&self) -> bool {
        self.state == LinkState::Up
    }

    fn pair(&self) -> (NodeId, NodeId) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QosEpoch {
    pub start: SimTime,
    pub latency_multiplier: f64,
    pub bandwidth_multiplier: f64,
}

/// Piecewise-constant multipliers applied to a link's reference QoS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QosSchedule {
    epochs: Vec<QosEpoch>,
    /// Bandwidth additionally scales by `1 / latency_multiplier`, capped at capacity.
    inverse_bandwidth: bool,
}

impl Default for QosSchedule {
    fn default() -> Self {
        QosSchedule::constant(1.0)
    }
}

impl QosSchedule {
    pub fn new(epochs: Vec<QosEpoch>) -> Result<Self, TopologyError> {
        let first = epochs
            .first()
            .ok_or_else(|| TopologyError::InvalidSchedule("schedule has no epochs".into()))?;
        if first.start != SimTime::ZERO {
            return Err(TopologyError::InvalidSchedule("first epoch must start at 0".into()));
        }
        for w in epochs.windows(2) {
            if w[1].start <= w[0].start {
                return Err(TopologyError::InvalidSchedule(
                    "epoch start times must be strictly increasing".into(),
                ));
            }
        }
        for e in &epochs {
            if !(e.latency_multiplier > 0.0 && e.bandwidth_multiplier > 0.0)
                || !e.latency_multiplier.is_finite()
                || !e.bandwidth_multiplier.is_finite()
            {
                return Err(TopologyError::InvalidSchedule("multipliers must be finite and > 0".into()));
            }
        }
        Ok(QosSchedule {
            epochs,
            inverse_bandwidth: false,
        })
    }

    /// A single epoch scaling latency only, e.g. one LSF point.
    pub fn constant(latency_multiplier: f64) -> Self {
        QosSchedule {
            epochs: vec![QosEpoch {
                start: SimTime::ZERO,
                latency_multiplier,
                bandwidth_multiplier: 1.0,
            }],
            inverse_bandwidth: false,
        }
    }

    pub fn with_inverse_bandwidth(mut self, on: bool) -> Self {
        self.inverse_bandwidth = on;
        self
    }

    pub fn inverse_bandwidth(&self) -> bool {
        self.inverse_bandwidth
    }

    pub fn epochs(&self) -> &[QosEpoch] {
        &self.epochs
    }

    pub fn epoch_at(&self, t: SimTime) -> &QosEpoch {
        let i = self.epochs.partition_point(|e| e.start <= t);
        &self.epochs[i - 1]
    }

    pub fn scale_latency(&mut self, factor: f64) {
        for e in &mut self.epochs {
            e.latency_multiplier *= factor;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveQos {
    pub latency: SimTime,
    pub down_bw_mbps: f64,
    pub up_bw_mbps: f64,
}

impl EffectiveQos {
    pub fn latency_ms(&self) -> f64 {
        self.latency.as_ms()
    }

    /// Bandwidth in the direction leaving `from`.
    pub fn bw_from(&self, link: &LinkSpec, from: NodeId) -> f64 {
        if from == link.a {
            self.down_bw_mbps
        } else {
            self.up_bw_mbps
        }
    }
}

pub fn effective_qos(link: &LinkSpec, schedule: &QosSchedule, t: SimTime) -> Result<EffectiveQos, TopologyError> {
    if !link.is_up() {
        return Err(TopologyError::LinkUnavailable(link.name.clone()));
    }
    let e = schedule.epoch_at(t);
    let scale = |bw: f64| {
        let v = bw * e.bandwidth_multiplier;
        if schedule.inverse_bandwidth {
            (v / e.latency_multiplier).min(v)
        } else {
            v
        }
    };
    Ok(EffectiveQos {
        latency: SimTime::from_ms_f64(link.base_latency_ms * e.latency_multiplier),
        down_bw_mbps: scale(link.down_bw_mbps),
        up_bw_mbps: scale(link.up_bw_mbps),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinkStateEvent {
    pub t: SimTime,
    pub link: LinkId,
    pub state: LinkState,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate link id `{0}`")]
    DuplicateLink(String),
    #[error("link `{link}` references unknown node `{node}`")]
    UnknownNode { link: String, node: String },
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("link `{0}` connects a node to itself")]
    SelfLoop(String),
    #[error("links between `{a}` and `{b}` repeat conn_type {conn_type}")]
    DuplicateConnType { a: String, b: String, conn_type: u8 },
    #[error("link `{link}`: {reason}")]
    InvalidQos { link: String, reason: String },
    #[error("invalid QoS schedule: {0}")]
    InvalidSchedule(String),
    #[error("link `{0}` unavailable")]
    LinkUnavailable(String),
    #[error("{links} links cannot connect {nodes} nodes")]
    TooFewLinks { nodes: usize, links: usize },
    #[error("expected exactly one client node, found {0}")]
    ClientCount(usize),
    #[error("too many nodes or links")]
    Capacity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterTopology {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    schedules: Vec<QosSchedule>,
    adjacency: Vec<Vec<LinkId>>,
}

impl ClusterTopology {
    pub fn new(nodes: Vec<NodeSpec>, links: Vec<LinkSpec>) -> Result<Self, TopologyError> {
        let mut topo = ClusterTopology {
            nodes: Vec::new(),
            links: Vec::new(),
            schedules: Vec::new(),
            adjacency: Vec::new(),
        };
        for n in nodes {
            topo.add_node(&n.name, &n.region, n.roles)?;
        }
        for l in links {
            topo.add_link(&l.name, l.a, l.b, l.conn_type, l.base_latency_ms, l.down_bw_mbps, l.up_bw_mbps)?;
            let id = LinkId(topo.links.len() as u32 - 1);
            topo.links[id.idx()].protected = l.protected;
            topo.links[id.idx()].state = l.state;
        }
        Ok(topo)
    }

    pub fn add_node(&mut self, name: &str, region: &str, roles: BTreeSet<Role>) -> Result<NodeId, TopologyError> {
        if self.node_by_name(name).is_some() {
            return Err(TopologyError::DuplicateNode(name.to_string()));
        }
        let id = NodeId(u16::try_from(self.nodes.len()).map_err(|_| TopologyError::Capacity)?);
        self.nodes.push(NodeSpec {
            id,
            name: name.to_string(),
            region: region.to_string(),
            roles,
        });
        self.adjacency.push(Vec::new());
        Ok(id)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn add_link(
        &mut self,
        name: &str,
        a: NodeId,
        b: NodeId,
        conn_type: u8,
        latency_ms: f64,
        down_bw_mbps: f64,
        up_bw_mbps: f64,
    ) -> Result<LinkId, TopologyError> {
        if self.link_by_name(name).is_some() {
            return Err(TopologyError::DuplicateLink(name.to_string()));
        }
        for n in [a, b] {
            if n.idx() >= self.nodes.len() {
                return Err(TopologyError::UnknownNode {
                    link: name.to_string(),
                    node: n.to_string(),
                });
            }
        }
        if a == b {
            return Err(TopologyError::SelfLoop(name.to_string()));
        }
        let bad = |reason: &str| TopologyError::InvalidQos {
            link: name.to_string(),
            reason: reason.to_string(),
        };
        if !(latency_ms > 0.0 && latency_ms.is_finite()) {
            return Err(bad("base latency must be > 0"));
        }
        if !(down_bw_mbps > 0.0 && up_bw_mbps > 0.0 && down_bw_mbps.is_finite() && up_bw_mbps.is_finite()) {
            return Err(bad("bandwidths must be > 0"));
        }
        let pair = (a.min(b), a.max(b));
        if self.adjacency[a.idx()]
            .iter()
            .any(|&l| self.links[l.idx()].pair() == pair && self.links[l.idx()].conn_type == conn_type)
        {
            return Err(TopologyError::DuplicateConnType {
                a: self.nodes[a.idx()].name.clone(),
                b: self.nodes[b.idx()].name.clone(),
                conn_type,
            });
        }
        let id = LinkId(u32::try_from(self.links.len()).map_err(|_| TopologyError::Capacity)?);
        self.links.push(LinkSpec {
            id,
            name: name.to_string(),
            a,
            b,
            conn_type,
            base_latency_ms: latency_ms,
            down_bw_mbps,
            up_bw_mbps,
            state: LinkState::Up,
            protected: false,
        });
        self.schedules.push(QosSchedule::default());
        self.adjacency[a.idx()].push(id);
        self.adjacency[b.idx()].push(id);
        Ok(id)
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id.idx()]
    }

    pub fn link(&self, id: LinkId) -> &LinkSpec {
        &self.links[id.idx()]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn link_by_name(&self, name: &str) -> Option<LinkId> {
        self.links.iter().find(|l| l.name == name).map(|l| l.id)
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.idx()].name
    }

    pub fn adjacent(&self, n: NodeId) -> &[LinkId] {
        &self.adjacency[n.idx()]
    }

    pub fn links_between(&self, a: NodeId, b: NodeId) -> impl Iterator<Item = &LinkSpec> {
        self.adjacency[a.idx()]
            .iter()
            .map(move |l| &self.links[l.idx()])
            .filter(move |l| l.other(a) == Some(b))
    }

    pub fn schedule(&self, id: LinkId) -> &QosSchedule {
        &self.schedules[id.idx()]
    }

    pub fn set_schedule(&mut self, id: LinkId, schedule: QosSchedule) {
        self.schedules[id.idx()] = schedule;
    }

    /// Multiplies every link's latency multipliers by `factor` (one LSF point).
    pub fn scale_latency(&mut self, factor: f64) {
        for s in &mut self.schedules {
            s.scale_latency(factor);
        }
    }

    pub fn set_inverse_bandwidth(&mut self, on: bool) {
        for s in &mut self.schedules {
            s.inverse_bandwidth = on;
        }
    }

    pub fn effective_qos(&self, id: LinkId, t: SimTime) -> Result<EffectiveQos, TopologyError> {
        effective_qos(&self.links[id.idx()], &self.schedules[id.idx()], t)
    }

    /// Returns the emitted event, or `None` when the state is unchanged.
    pub fn set_link_state(
        &mut self,
        id: LinkId,
        state: LinkState,
        t: SimTime,
    ) -> Result<Option<LinkStateEvent>, TopologyError> {
        let link = self
            .links
            .get_mut(id.idx())
            .ok_or_else(|| TopologyError::UnknownLink(id.to_string()))?;
        if link.state == state {
            return Ok(None);
        }
        link.state = state;
        Ok(Some(LinkStateEvent { t, link: id, state }))
    }

    pub fn with_role(&self, role: Role) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.has(role)).map(|n| n.id).collect()
    }

    pub fn client(&self) -> Result<NodeId, TopologyError> {
        match self.with_role(Role::Client).as_slice() {
            [c] => Ok(*c),
            other => Err(TopologyError::ClientCount(other.len())),
        }
    }

    pub fn data_nodes(&self) -> Vec<NodeId> {
        self.with_role(Role::Data)
    }

    /// Whether all nodes are connected by up links, ignoring `without`.
    pub fn is_connected(&self, without: Option<LinkId>) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &l in &self.adjacency[u] {
                let link = &self.links[l.idx()];
                if !link.is_up() || Some(l) == without {
                    continue;
                }
                let v = link.other(NodeId(u as u16)).unwrap().idx();
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    pub fn from_doc(doc: &TopologyDoc) -> Result<Self, TopologyError> {
        let mut topo = ClusterTopology::new(Vec::new(), Vec::new())?;
        for n in &doc.nodes {
            topo.add_node(&n.id, &n.region, n.roles.clone())?;
        }
        for l in &doc.links {
            let resolve = |name: &str| {
                topo.node_by_name(name).ok_or_else(|| TopologyError::UnknownNode {
                    link: l.id.clone(),
                    node: name.to_string(),
                })
            };
            let (a, b) = (resolve(&l.a)?, resolve(&l.b)?);
            let id = topo.add_link(&l.id, a, b, l.conn_type, l.latency_ms, l.down_mbps, l.up_mbps.unwrap_or(l.down_mbps))?;
            topo.links[id.idx()].protected = l.protected;
        }
        for (name, epochs) in &doc.schedules {
            let id = topo
                .link_by_name(name)
                .ok_or_else(|| TopologyError::UnknownLink(name.clone()))?;
            let epochs = epochs
                .iter()
                .map(|e| QosEpoch {
                    start: SimTime::from_ms_f64(e.t_ms),
                    latency_multiplier: e.lat_mult,
                    bandwidth_multiplier: e.bw_mult,
                })
                .collect();
            topo.schedules[id.idx()] = QosSchedule::new(epochs)?;
        }
        Ok(topo)
    }

    pub fn to_doc(&self) -> TopologyDoc {
        let mut schedules = BTreeMap::new();
        for (l, s) in self.links.iter().zip(&self.schedules) {
            if *s != QosSchedule::default() {
                schedules.insert(
                    l.name.clone(),
                    s.epochs
                        .iter()
                        .map(|e| EpochDoc {
                            t_ms: e.start.as_ms(),
                            lat_mult: e.latency_multiplier,
                            bw_mult: e.bandwidth_multiplier,
                        })
                        .collect(),
                );
            }
        }
        TopologyDoc {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.name.clone(),
                    region: n.region.clone(),
                    roles: n.roles.clone(),
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| LinkDoc {
                    id: l.name.clone(),
                    a: self.nodes[l.a.idx()].name.clone(),
                    b: self.nodes[l.b.idx()].name.clone(),
                    conn_type: l.conn_type,
                    latency_ms: l.base_latency_ms,
                    down_mbps: l.down_bw_mbps,
                    up_mbps: (l.up_bw_mbps != l.down_bw_mbps).then_some(l.up_bw_mbps),
                    protected: l.protected,
                })
                .collect(),
            schedules,
        }
    }
}

/// JSON form of a topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub nodes: Vec<NodeDoc>,
    pub links: Vec<LinkDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub schedules: BTreeMap<String, Vec<EpochDoc>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    pub region: String,
    #[serde(default)]
    pub roles: BTreeSet<Role>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub id: String,
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub conn_type: u8,
    pub latency_ms: f64,
    pub down_mbps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub protected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochDoc {
    pub t_ms: f64,
    pub lat_mult: f64,
    #[serde(default = "one")]
    pub bw_mult: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QosRange {
    pub latency_ms: (f64, f64),
    pub bandwidth_mbps: (f64, f64),
}

impl Default for QosRange {
    /// The extremes observed between the reference datacenters.
    fn default() -> Self {
        QosRange {
            latency_ms: (7.0, 223.0),
            bandwidth_mbps: UPLOAD_RANGE_MBPS,
        }
    }
}

/// Random connected multigraph over `nodes` with exactly `link_count` links.
///
/// A random spanning tree comes first, the rest land on uniformly chosen
/// pairs. The first link of a pair takes reference values when both regions
/// are in `reference`; every other link samples `qos_range`.
pub fn build_mesh(
    nodes: Vec<NodeSpec>,
    link_count: usize,
    rng_seed: u64,
    qos_range: QosRange,
    reference: Option<&ReferenceMatrix>,
) -> Result<ClusterTopology, TopologyError> {
    let n = nodes.len();
    if n == 0 || link_count < n - 1 || (n == 1 && link_count > 0) {
        return Err(TopologyError::TooFewLinks { nodes: n, links: link_count });
    }
    let mut topo = ClusterTopology::new(nodes, Vec::new())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut pairs = Vec::with_capacity(link_count);
    for k in 1..n {
        pairs.push((order[rng.random_range(0..k)], order[k]));
    }
    while pairs.len() < link_count {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n - 1);
        let b = if b >= a { b + 1 } else { b };
        pairs.push((a, b));
    }

    let mut per_pair: BTreeMap<(usize, usize), u8> = BTreeMap::new();
    for (a, b) in pairs {
        let (a, b) = (a.min(b), a.max(b));
        let slot = per_pair.entry((a, b)).or_insert(0);
        let conn_type = *slot;
        *slot = slot.checked_add(1).ok_or(TopologyError::Capacity)?;
        let known = reference.and_then(|m| m.lookup(&topo.nodes[a].region, &topo.nodes[b].region));
        let (lat, down, up) = match known {
            Some(r) if conn_type == 0 && r.latency_ms > 0.0 => (r.latency_ms, r.down_bw_mbps, r.down_bw_mbps),
            _ => {
                let lat = sample(&mut rng, qos_range.latency_ms, 10.0);
                let down = sample(&mut rng, qos_range.bandwidth_mbps, 1.0);
                let up = sample(&mut rng, qos_range.bandwidth_mbps, 1.0);
                (lat, down, up)
            }
        };
        let name = format!("{}-{}/{}", topo.nodes[a].name, topo.nodes[b].name, conn_type);
        topo.add_link(&name, NodeId(a as u16), NodeId(b as u16), conn_type, lat, down, up)?;
    }
    Ok(topo)
}

// Uniform in [lo, hi], rounded to 1/resolution.
fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64), resolution: f64) -> f64 {
    let v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    ((v * resolution).round() / resolution).max(1.0 / resolution)
}

/// Role flags the experiments assign to each reference region.
pub fn default_roles(region: &str) -> BTreeSet<Role> {
    let mut roles = BTreeSet::from([Role::Data]);
    match region {
        "Melbourne" => roles.extend([Role::Seed, Role::Primary, Role::Mgmt]),
        "Virginia" => roles.extend([Role::NonVoting]),
        "Singapore" => roles.extend([Role::Sql]),
        _ => {}
    }
    roles
}

pub fn reference_nodes() -> Vec<NodeSpec> {
    REGIONS
        .iter()
        .enumerate()
        .map(|(i, r)| NodeSpec {
            id: NodeId(i as u16),
            name: r.to_string(),
            region: r.to_string(),
            roles: default_roles(r),
        })
        .collect()
}

pub const CLIENT_NAME: &str = "client";
pub const ACCESS_LATENCY_MS: f64 = 0.5;
pub const ACCESS_BW_MBPS: f64 = 1000.0;

/// Adds the single client node, co-located with `region`'s data node and
/// attached to it by a protected access link.
pub fn attach_client(topo: &mut ClusterTopology, region: &str) -> Result<NodeId, TopologyError> {
    let host = topo
        .nodes
        .iter()
        .find(|n| n.region == region && n.has(Role::Data))
        .map(|n| n.id)
        .ok_or_else(|| TopologyError::UnknownNode {
            link: "access".into(),
            node: region.to_string(),
        })?;
    let client = topo.add_node(CLIENT_NAME, region, BTreeSet::from([Role::Client]))?;
    let l = topo.add_link("access", client, host, 0, ACCESS_LATENCY_MS, ACCESS_BW_MBPS, ACCESS_BW_MBPS)?;
    topo.links[l.idx()].protected = true;
    Ok(client)
}

/// The 8 reference datacenters fully meshed with reference QoS, plus the
/// client in Singapore.
pub fn reference_topology() -> ClusterTopology {
    let m = builtin_reference_matrix();
    let mut topo = ClusterTopology::new(reference_nodes(), Vec::new()).expect("static nodes");
    for (i, j) in m.pairs() {
        let name = format!("{}-{}", m.regions[i], m.regions[j]);
        let bw = m.down_bw_mbps[i][j];
        topo.add_link(&name, NodeId(i as u16), NodeId(j as u16), 0, m.latency_ms[i][j], bw, bw)
            .expect("static links");
    }
    attach_client(&mut topo, "Singapore").expect("static client");
    topo
}
