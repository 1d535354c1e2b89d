//! The three experiment families: LSF sweeps, cluster down-/up-sizing while
//! the workload runs, and random link removal from a redundant mesh.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbmodels::{build_model, ChurnKind, ChurnPlan, Engine, EngineConfig, ReadPreference, RoutedView};
use crate::metrics::{
    export_run, normalized_throughput, normalized_transferred, write_summary_json, MetricsError, RunSummary,
    SettleEvent, TrafficMatrix,
};
use crate::router::{shortest_path, RouteTable};
use crate::sim::{LinkEventRecord, RunOutcome, SimError, SimSettings, Simulation, StopRule};
use crate::time::SimTime;
use crate::topology::{
    attach_client, build_mesh, builtin_reference_matrix, reference_nodes, ClusterTopology, LinkId, LinkState, NodeId,
    QosRange, Role, TopologyError,
};
use crate::workload::{Outcome, WorkloadSpec};

pub const DEFAULT_LSF: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    LsfSweep,
    Resize,
    LinkChurn,
    AllNodesBaseline,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::LsfSweep => "lsf_sweep",
            ScenarioKind::Resize => "resize",
            ScenarioKind::LinkChurn => "link_churn",
            ScenarioKind::AllNodesBaseline => "all_nodes_baseline",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown scenario `{s}` (expected lsf_sweep, resize, link_churn or all_nodes_baseline)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Points of an LSF sweep.
    pub lsf: Vec<f64>,
    /// LSF for resize, link churn and baseline runs.
    pub fixed_lsf: f64,
    /// Nodes to remove, in order; the engine's default when absent.
    pub removal_order: Option<Vec<String>>,
    pub step_interval_ms: u64,
    pub mesh_links: usize,
    pub links_to_remove: usize,
    pub dwell_ms: u64,
    pub connectivity_guard: bool,
    /// Resize Redis with the workload running instead of rebuilding it per size.
    pub redis_online: bool,
    /// Overrides the engine's read preference. Resize and link churn
    /// default to nearest secondary.
    pub mongo_read_preference: Option<ReadPreference>,
    /// Set from the run's top-level seed, not from config.
    #[serde(skip)]
    pub rng_seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::LsfSweep,
            lsf: DEFAULT_LSF.to_vec(),
            fixed_lsf: 1.0,
            removal_order: None,
            step_interval_ms: 120_000,
            mesh_links: 64,
            links_to_remove: 50,
            dwell_ms: 60_000,
            connectivity_guard: true,
            redis_online: false,
            mongo_read_preference: None,
            rng_seed: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("removal order: `{node}` {constraint}")]
    Protected { node: String, constraint: String },
    #[error("{0} is not supported by the {1} scenario")]
    Unsupported(&'static str, &'static str),
    #[error("removing link `{0}` would cut the client off from every data node")]
    Partition(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.lsf.is_empty() || self.lsf.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
            return Err(ScenarioError::Invalid("LSF values must lie in (0, 1]".into()));
        }
        if !(self.fixed_lsf > 0.0 && self.fixed_lsf <= 1.0) {
            return Err(ScenarioError::Invalid("fixed_lsf must lie in (0, 1]".into()));
        }
        if self.step_interval_ms == 0 || self.dwell_ms == 0 {
            return Err(ScenarioError::Invalid("step_interval_ms and dwell_ms must be positive".into()));
        }
        if self.links_to_remove > self.mesh_links {
            return Err(ScenarioError::Invalid("links_to_remove exceeds mesh_links".into()));
        }
        Ok(())
    }

    fn read_preference(&self, engine: &EngineConfig) -> ReadPreference {
        self.mongo_read_preference.unwrap_or(match self.kind {
            ScenarioKind::Resize | ScenarioKind::LinkChurn => ReadPreference::NearestSecondary,
            _ => engine.read_preference,
        })
    }
}

/// The removal order the experiments used for `engine`.
pub fn default_removal_order(engine: Engine) -> Vec<String> {
    let order: &[&str] = match engine {
        Engine::Cassandra => &["Singapore", "Sydney", "Canberra", "Pune", "Dubai", "Virginia"],
        _ => &["Singapore", "Sydney", "Canberra", "Pune", "Seoul", "Dubai"],
    };
    order.iter().map(|s| s.to_string()).collect()
}

/// Checks that every node in `order` exists, is a data node and may be
/// removed under the engine's constraints.
pub fn check_removal_order(topo: &ClusterTopology, engine: &EngineConfig, order: &[String]) -> Result<Vec<NodeId>, ScenarioError> {
    if engine.engine == Engine::Mysql {
        return Err(ScenarioError::Unsupported("MySQL node-group membership change", "resize"));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(order.len());
    let fail = |node: &str, constraint: &str| ScenarioError::Protected {
        node: node.to_string(),
        constraint: constraint.to_string(),
    };
    for name in order {
        let id = topo.node_by_name(name).ok_or_else(|| fail(name, "is not a node of the topology"))?;
        let node = topo.node(id);
        if !node.has(Role::Data) {
            return Err(fail(name, "is not a data node"));
        }
        if !seen.insert(id) {
            return Err(fail(name, "appears twice"));
        }
        if engine.protected_nodes.iter().any(|p| p == name) {
            return Err(fail(name, "is listed in protected_nodes"));
        }
        match engine.engine {
            Engine::Cassandra if node.has(Role::Seed) => {
                return Err(fail(name, "is the Cassandra seed node, which is never removed"))
            }
            Engine::Mongodb if node.has(Role::Primary) => {
                return Err(fail(name, "hosts the MongoDB primary, which is never removed"))
            }
            Engine::Mongodb if node.has(Role::NonVoting) => {
                return Err(fail(name, "hosts the MongoDB non-voting member, which is never removed"))
            }
            _ => {}
        }
        out.push(id);
    }
    if topo.data_nodes().len() <= out.len() {
        return Err(ScenarioError::Invalid("removal order would empty the cluster".into()));
    }
    Ok(out)
}

/// One simulation's results with the labels of its scenario point.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub scenario: String,
    pub engine: Engine,
    pub workload: String,
    pub lsf: f64,
    pub outcome: RunOutcome,
}

impl ScenarioRun {
    /// `<outdir>/<scenario>/<engine>/<workload>`, with an `lsf-<v>` level
    /// below it for sweep points.
    pub fn dir(&self, outdir: &Path) -> std::path::PathBuf {
        let d = outdir.join(&self.scenario).join(self.engine.as_str()).join(&self.workload);
        if self.scenario == ScenarioKind::LsfSweep.as_str() {
            d.join(format!("lsf-{:.2}", self.lsf))
        } else {
            d
        }
    }

    pub fn export(&self, outdir: &Path, oplog: bool) -> std::io::Result<()> {
        let o = &self.outcome;
        export_run(
            &self.dir(outdir),
            &o.summary,
            &o.timeline,
            &o.traffic,
            oplog.then_some(o.oplog.as_slice()),
        )
    }
}

/// Per-run settings: a trace directory becomes one file per simulation.
fn run_settings(settings: &SimSettings, label: &str) -> SimSettings {
    let mut s = settings.clone();
    s.trace_path = settings.trace_path.as_ref().map(|d| d.join(format!("{label}.ndjson")));
    s
}

fn scaled(topo: &ClusterTopology, lsf: f64) -> ClusterTopology {
    let mut t = topo.clone();
    t.scale_latency(lsf);
    t
}

fn engine_for(spec: &ScenarioSpec, engine: &EngineConfig) -> EngineConfig {
    let mut e = engine.clone();
    e.read_preference = spec.read_preference(engine);
    e
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lsf: f64,
    pub throughput_ops_s: f64,
    pub total_mb_transferred: f64,
    pub normalized_throughput: f64,
    pub normalized_transferred: f64,
}

/// Normalized series of one (engine, workload) pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSeries {
    pub engine: Engine,
    pub workload: String,
    pub points: Vec<SweepPoint>,
}

pub fn sweep_series(engine: Engine, workload: &str, summaries: &[RunSummary]) -> Result<SweepSeries, MetricsError> {
    let tp = normalized_throughput(summaries)?;
    let tr = normalized_transferred(summaries)?;
    let points = summaries
        .iter()
        .zip(tp.iter().zip(&tr))
        .map(|(s, (a, b))| SweepPoint {
            lsf: s.lsf,
            throughput_ops_s: s.throughput_ops_s,
            total_mb_transferred: s.total_mb_transferred,
            normalized_throughput: a.1,
            normalized_transferred: b.1,
        })
        .collect();
    Ok(SweepSeries {
        engine,
        workload: workload.to_string(),
        points,
    })
}

/// One independent simulation per (workload, LSF), up to `parallelism` at
/// a time. Runs come back ordered by workload, then LSF.
pub fn run_lsf_sweep(
    topo: &ClusterTopology,
    engine: &EngineConfig,
    workloads: &[WorkloadSpec],
    spec: &ScenarioSpec,
    settings: &SimSettings,
    parallelism: usize,
) -> Result<Vec<ScenarioRun>, ScenarioError> {
    spec.validate()?;
    let cfg = engine_for(spec, engine);
    let jobs: Vec<(&WorkloadSpec, f64)> = workloads
        .iter()
        .flat_map(|w| spec.lsf.iter().map(move |&l| (w, l)))
        .collect();
    let one = |(w, lsf): &(&WorkloadSpec, f64)| -> Result<ScenarioRun, ScenarioError> {
        let t = scaled(topo, *lsf);
        let members = t.data_nodes();
        let s = run_settings(settings, &format!("lsf_sweep-{}-{}-lsf{lsf:.2}", cfg.engine.as_str(), w.name));
        let sim = Simulation::new(t, cfg.clone(), &members, (*w).clone(), StopRule::Operations, s, *lsf)?;
        Ok(ScenarioRun {
            scenario: ScenarioKind::LsfSweep.as_str().into(),
            engine: cfg.engine,
            workload: w.name.clone(),
            lsf: *lsf,
            outcome: sim.run()?,
        })
    };
    if parallelism <= 1 {
        return jobs.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(one).collect())
}

/// Writes each point plus `sweep.json` with the normalized series per workload.
pub fn export_sweep(runs: &[ScenarioRun], outdir: &Path, oplog: bool) -> Result<Vec<SweepSeries>, ScenarioError> {
    let mut series = Vec::new();
    let mut i = 0;
    while i < runs.len() {
        let j = i + runs[i..].iter().take_while(|r| r.workload == runs[i].workload).count();
        let group = &runs[i..j];
        for r in group {
            r.export(outdir, oplog)?;
        }
        let summaries: Vec<RunSummary> = group.iter().map(|r| r.outcome.summary.clone()).collect();
        let s = sweep_series(group[0].engine, &group[0].workload, &summaries)?;
        let dir = outdir
            .join(ScenarioKind::LsfSweep.as_str())
            .join(group[0].engine.as_str())
            .join(&group[0].workload);
        write_summary_json(&dir.join("sweep.json"), &s)?;
        series.push(s);
        i = j;
    }
    Ok(series)
}

/// Plan a membership change against a quiet cluster, for resizes done
/// with the database offline.
pub fn offline_churn_plan(
    topo: &ClusterTopology,
    engine: &EngineConfig,
    members: &[NodeId],
    node: NodeId,
    kind: ChurnKind,
    record_count: u64,
    seed: u64,
) -> Result<ChurnPlan, ScenarioError> {
    let client = topo.client()?;
    let mut model = build_model(engine, topo, members, client, record_count, seed).map_err(SimError::from)?;
    let routes = RouteTable::new(topo, Default::default(), SimTime::ZERO);
    let view = RoutedView {
        topo,
        routes: &routes,
        t: SimTime::ZERO,
    };
    let plan = match kind {
        ChurnKind::Remove => model.remove_node(node, &view),
        ChurnKind::Add => model.add_node(node, &view),
    };
    plan.map_err(|e| ScenarioError::Invalid(e.to_string()))
}

/// Downsizing, upsizing and the all-nodes baseline, in that order.
pub fn run_resize(
    topo: &ClusterTopology,
    engine: &EngineConfig,
    workload: &WorkloadSpec,
    spec: &ScenarioSpec,
    settings: &SimSettings,
) -> Result<Vec<ScenarioRun>, ScenarioError> {
    spec.validate()?;
    let order_names = spec
        .removal_order
        .clone()
        .unwrap_or_else(|| default_removal_order(engine.engine));
    let order = check_removal_order(topo, engine, &order_names)?;
    let t = scaled(topo, spec.fixed_lsf);
    let all = t.data_nodes();
    let mut cfg = engine_for(spec, engine);
    let final_size = all.len() - order.len();
    if cfg.engine == Engine::Cassandra && cfg.rf > final_size {
        // Removal stops at `final_size` nodes, which must still hold a full replica set.
        cfg.rf = final_size;
    }
    let step = SimTime::from_millis(spec.step_interval_ms);
    let duration = SimTime::from_micros(step.as_micros() * (order.len() as u64 + 1));
    let offline = cfg.engine == Engine::Redis && !spec.redis_online;

    let mut runs = Vec::new();
    let remaining: Vec<NodeId> = all.iter().copied().filter(|n| !order.contains(n)).collect();
    for (label, kind) in [("downsizing", ChurnKind::Remove), ("upsizing", ChurnKind::Add)] {
        let (start, steps): (Vec<NodeId>, Vec<NodeId>) = match kind {
            ChurnKind::Remove => (all.clone(), order.clone()),
            ChurnKind::Add => (remaining.clone(), order.iter().rev().copied().collect()),
        };
        let s = run_settings(settings, &format!("resize_{label}-{}-{}", cfg.engine.as_str(), workload.name));
        let outcome = if offline {
            resize_offline(&t, &cfg, workload, &start, &steps, kind, step, &s, spec.fixed_lsf)?
        } else {
            let mut sim = Simulation::new(t.clone(), cfg.clone(), &start, workload.clone(), StopRule::Duration(duration), s, spec.fixed_lsf)?;
            for (i, &n) in steps.iter().enumerate() {
                sim.schedule_churn(SimTime::from_micros(step.as_micros() * (i as u64 + 1)), n, kind);
            }
            sim.run()?
        };
        runs.push(ScenarioRun {
            scenario: format!("resize_{label}"),
            engine: cfg.engine,
            workload: workload.name.clone(),
            lsf: spec.fixed_lsf,
            outcome,
        });
    }
    let ops = runs[0].outcome.summary.ok_ops.max(1);
    runs.push(baseline(&t, &cfg, workload, ops, settings, spec.fixed_lsf)?);
    Ok(runs)
}

/// Fixed full cluster; `ops` operations in a single batch.
fn baseline(
    t: &ClusterTopology,
    cfg: &EngineConfig,
    workload: &WorkloadSpec,
    ops: u64,
    settings: &SimSettings,
    lsf: f64,
) -> Result<ScenarioRun, ScenarioError> {
    let mut w = workload.clone();
    w.operation_count = ops;
    w.batches = 1;
    let members = t.data_nodes();
    let s = run_settings(settings, &format!("all_nodes_baseline-{}-{}", cfg.engine.as_str(), workload.name));
    let sim = Simulation::new(t.clone(), cfg.clone(), &members, w, StopRule::Operations, s, lsf)?;
    Ok(ScenarioRun {
        scenario: ScenarioKind::AllNodesBaseline.as_str().into(),
        engine: cfg.engine,
        workload: workload.name.clone(),
        lsf,
        outcome: sim.run()?,
    })
}

pub fn run_all_nodes_baseline(
    topo: &ClusterTopology,
    engine: &EngineConfig,
    workload: &WorkloadSpec,
    spec: &ScenarioSpec,
    settings: &SimSettings,
) -> Result<ScenarioRun, ScenarioError> {
    spec.validate()?;
    let t = scaled(topo, spec.fixed_lsf);
    baseline(&t, &engine_for(spec, engine), workload, workload.operation_count, settings, spec.fixed_lsf)
}

/// The cluster is rebuilt at each size: one run per segment, with the
/// membership change planned against the idle cluster in between.
#[allow(clippy::too_many_arguments)]
fn resize_offline(
    t: &ClusterTopology,
    cfg: &EngineConfig,
    workload: &WorkloadSpec,
    start: &[NodeId],
    steps: &[NodeId],
    kind: ChurnKind,
    step: SimTime,
    settings: &SimSettings,
    lsf: f64,
) -> Result<RunOutcome, ScenarioError> {
    let mut members = start.to_vec();
    let mut segments = Vec::new();
    let mut settles = Vec::new();
    for i in 0..=steps.len() {
        if i > 0 {
            let node = steps[i - 1];
            let plan = offline_churn_plan(t, cfg, &members, node, kind, workload.record_count, settings.seed)?;
            settles.push(SettleEvent {
                node: t.node_name(node).to_string(),
                kind: match kind {
                    ChurnKind::Remove => "remove",
                    ChurnKind::Add => "add",
                }
                .into(),
                start_ms: (step.as_micros() * i as u64) as f64 / 1000.0,
                duration_ms: plan.settle.as_ms(),
                bulk_bytes: plan.bulk_bytes(),
            });
            match kind {
                ChurnKind::Remove => members.retain(|m| *m != node),
                ChurnKind::Add => {
                    members.push(node);
                    members.sort();
                }
            }
        }
        let mut s = settings.clone();
        s.seed = settings.seed.wrapping_add(i as u64);
        s.trace_path = settings.trace_path.as_ref().map(|p| p.with_extension(format!("seg{i}.ndjson")));
        let sim = Simulation::new(t.clone(), cfg.clone(), &members, workload.clone(), StopRule::Duration(step), s, lsf)?;
        segments.push(sim.run()?);
    }
    let mut merged = concat_segments(segments, step, settings);
    merged.summary.settle_events = settles;
    merged.summary.seed = settings.seed;
    Ok(merged)
}

/// Joins equal-length runs back to back on one clock.
fn concat_segments(segments: Vec<RunOutcome>, step: SimTime, settings: &SimSettings) -> RunOutcome {
    let mut it = segments.into_iter();
    let mut acc = it.next().expect("at least one segment");
    let mut hashes = vec![acc.summary.trace_hash.clone()];
    let mut k = 1u64;
    for seg in it {
        let off = SimTime::from_micros(step.as_micros() * k);
        acc.timeline.counts.extend(seg.timeline.counts);
        for mut op in seg.oplog {
            op.id += acc.summary.total_ops;
            op.issued_at = op.issued_at + off;
            op.completed_at = op.completed_at.map(|c| c + off);
            acc.oplog.push(op);
        }
        add_traffic(&mut acc.traffic, &seg.traffic);
        let (a, b) = (&mut acc.summary, &seg.summary);
        a.total_ops += b.total_ops;
        a.ok_ops += b.ok_ops;
        a.failed_ops += b.failed_ops;
        a.timed_out_ops += b.timed_out_ops;
        a.wall_virtual_ms += b.wall_virtual_ms;
        a.events_processed += b.events_processed;
        a.total_mb_transferred += b.total_mb_transferred;
        hashes.push(b.trace_hash.clone());
        acc.final_members = seg.final_members;
        k += 1;
    }
    let s = &mut acc.summary;
    let secs = s.wall_virtual_ms / 1000.0;
    s.throughput_ops_s = if secs > 0.0 { s.ok_ops as f64 / secs } else { 0.0 };
    s.unresponsive_windows = acc.timeline.unresponsive_windows(
        SimTime::from_millis(settings.unresponsive_threshold_ms),
        SimTime::ZERO,
        SimTime::from_ms_f64(s.wall_virtual_ms),
    );
    s.trace_hash = format!("{:032x}", xxhash_rust::xxh3::xxh3_128(hashes.join(":").as_bytes()));
    acc
}

fn add_traffic(a: &mut TrafficMatrix, b: &TrafficMatrix) {
    for (ra, rb) in a.hop_bytes.iter_mut().zip(&b.hop_bytes) {
        ra.iter_mut().zip(rb).for_each(|(x, y)| *x += y);
    }
    for (ra, rb) in a.flow_bytes.iter_mut().zip(&b.flow_bytes) {
        ra.iter_mut().zip(rb).for_each(|(x, y)| *x += y);
    }
    for (ra, rb) in a.received_by_class.iter_mut().zip(&b.received_by_class) {
        ra.iter_mut().zip(rb).for_each(|(x, y)| *x += y);
    }
    a.write_request_bytes.iter_mut().zip(&b.write_request_bytes).for_each(|(x, y)| *x += y);
    for (la, lb) in a.links.iter_mut().zip(&b.links) {
        la.counters.bytes_sent += lb.counters.bytes_sent;
        la.counters.bytes_delivered += lb.counters.bytes_delivered;
        la.counters.bytes_lost += lb.counters.bytes_lost;
    }
}

/// The link-churn mesh: the reference regions joined by `links` random
/// links, plus the client in Singapore.
pub fn churn_mesh(links: usize, seed: u64) -> Result<ClusterTopology, TopologyError> {
    let m = builtin_reference_matrix();
    let mut t = build_mesh(reference_nodes(), links, seed, QosRange::default(), Some(&m))?;
    attach_client(&mut t, "Singapore")?;
    Ok(t)
}

/// Picks `count` links to remove one after another. With the guard on,
/// each removal keeps the whole mesh connected.
pub fn plan_link_removals(topo: &ClusterTopology, count: usize, guard: bool, seed: u64) -> Result<Vec<LinkId>, ScenarioError> {
    let mut t = topo.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11_4e_c4_u64);
    let mut out = Vec::with_capacity(count);
    let client = t.client()?;
    for _ in 0..count {
        let candidates: Vec<LinkId> = t
            .links()
            .iter()
            .filter(|l| l.state == LinkState::Up && !l.protected)
            .map(|l| l.id)
            .filter(|&l| !guard || t.is_connected(Some(l)))
            .collect();
        if candidates.is_empty() {
            return Err(ScenarioError::Invalid(format!(
                "only {} links can be removed without partitioning the mesh",
                out.len()
            )));
        }
        let l = candidates[rng.random_range(0..candidates.len())];
        t.set_link_state(l, LinkState::Down, SimTime::ZERO)?;
        let reachable = t.data_nodes().into_iter().any(|d| shortest_path(&t, client, d, SimTime::ZERO).is_ok());
        if !reachable {
            return Err(ScenarioError::Partition(t.link(l).name.clone()));
        }
        out.push(l);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalRecord {
    pub t_ms: f64,
    pub link: String,
    /// Some route crossed the link when it was removed.
    pub routed: bool,
    pub recompute_at_ms: Option<f64>,
    pub latency_before_ms: f64,
    pub latency_after_ms: f64,
    /// From removal until the first successful operation after routes
    /// settled; `None` if nothing completed before the run ended.
    pub recovery_ms: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct LinkChurnResult {
    pub run: ScenarioRun,
    pub removals: Vec<RemovalRecord>,
}

pub fn run_link_churn(
    engine: &EngineConfig,
    workload: &WorkloadSpec,
    spec: &ScenarioSpec,
    settings: &SimSettings,
) -> Result<LinkChurnResult, ScenarioError> {
    spec.validate()?;
    let mut topo = churn_mesh(spec.mesh_links, spec.rng_seed)?;
    topo.scale_latency(spec.fixed_lsf);
    let removals = plan_link_removals(&topo, spec.links_to_remove, spec.connectivity_guard, spec.rng_seed)?;
    let cfg = engine_for(spec, engine);
    let dwell = SimTime::from_millis(spec.dwell_ms);
    let spacing = dwell + dwell;
    let at = |k: usize| dwell + SimTime::from_micros(spacing.as_micros() * k as u64);
    let end = at(removals.len().saturating_sub(1)) + dwell;
    let members = topo.data_nodes();
    let s = run_settings(settings, &format!("link_churn-{}-{}", cfg.engine.as_str(), workload.name));
    let mut sim = Simulation::new(topo, cfg.clone(), &members, workload.clone(), StopRule::Duration(end), s, spec.fixed_lsf)?;
    for (k, &l) in removals.iter().enumerate() {
        let t = at(k);
        sim.schedule_probe(t.saturating_sub(SimTime::from_millis(1)), 2 * k as u64);
        sim.schedule_link_state(t, l, LinkState::Down);
        sim.schedule_probe(t + dwell.saturating_sub(SimTime::from_millis(1)), 2 * k as u64 + 1);
    }
    let outcome = sim.run()?;
    let records = removal_records(&outcome, &outcome.link_events);
    Ok(LinkChurnResult {
        run: ScenarioRun {
            scenario: ScenarioKind::LinkChurn.as_str().into(),
            engine: cfg.engine,
            workload: workload.name.clone(),
            lsf: spec.fixed_lsf,
            outcome,
        },
        removals: records,
    })
}

fn removal_records(o: &RunOutcome, events: &[LinkEventRecord]) -> Vec<RemovalRecord> {
    let probe = |tag: u64| {
        o.probes
            .iter()
            .find(|p| p.tag == tag)
            .map_or(f64::NAN, |p| p.mean_latency_ms)
    };
    let done: Vec<f64> = o
        .oplog
        .iter()
        .filter(|op| op.outcome == Some(Outcome::Ok))
        .filter_map(|op| op.completed_at.map(|c| c.as_ms()))
        .collect();
    events
        .iter()
        .filter(|e| e.state == LinkState::Down)
        .enumerate()
        .map(|(k, e)| {
            let from = e.recompute_at_ms.unwrap_or(e.t_ms);
            let i = done.partition_point(|&c| c < from);
            RemovalRecord {
                t_ms: e.t_ms,
                link: e.link.clone(),
                routed: e.routed,
                recompute_at_ms: e.recompute_at_ms,
                latency_before_ms: probe(2 * k as u64),
                latency_after_ms: probe(2 * k as u64 + 1),
                recovery_ms: done.get(i).map(|c| c - e.t_ms),
            }
        })
        .collect()
}

pub fn export_link_churn(r: &LinkChurnResult, outdir: &Path, oplog: bool) -> std::io::Result<()> {
    r.run.export(outdir, oplog)?;
    write_summary_json(&r.run.dir(outdir).join("removals.json"), &r.removals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::reference_topology;

    #[test]
    fn default_orders_pass_constraints() {
        let topo = reference_topology();
        for e in [Engine::Cassandra, Engine::Mongodb, Engine::Redis] {
            let order = default_removal_order(e);
            assert_eq!(check_removal_order(&topo, &EngineConfig::new(e), &order).unwrap().len(), 6);
        }
        assert!(matches!(
            check_removal_order(&topo, &EngineConfig::new(Engine::Mysql), &[]),
            Err(ScenarioError::Unsupported(..))
        ));
    }

    #[test]
    fn seed_and_primary_are_rejected() {
        let topo = reference_topology();
        let order = vec!["Sydney".to_string(), "Melbourne".to_string()];
        let err = check_removal_order(&topo, &EngineConfig::new(Engine::Cassandra), &order).unwrap_err();
        assert!(err.to_string().contains("seed"));
        let err = check_removal_order(&topo, &EngineConfig::new(Engine::Mongodb), &order).unwrap_err();
        assert!(err.to_string().contains("primary"));
        let mut cfg = EngineConfig::new(Engine::Redis);
        cfg.protected_nodes = vec!["Sydney".into()];
        assert!(check_removal_order(&topo, &cfg, &order).is_err());
    }

    #[test]
    fn guarded_removals_keep_mesh_connected() {
        let topo = churn_mesh(64, 3).unwrap();
        let plan = plan_link_removals(&topo, 50, true, 3).unwrap();
        assert_eq!(plan.iter().collect::<BTreeSet<_>>().len(), 50);
        let mut t = topo.clone();
        for l in plan {
            t.set_link_state(l, LinkState::Down, SimTime::ZERO).unwrap();
            assert!(t.is_connected(None));
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = ScenarioSpec::default();
        s.validate().unwrap();
        s.lsf = vec![0.0];
        assert!(s.validate().is_err());
        assert_eq!("link_churn".parse::<ScenarioKind>(), Ok(ScenarioKind::LinkChurn));
        assert!("nope".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn concat_keeps_clock_and_counts() {
        let topo = reference_topology();
        let mut w = crate::workload::preset("C").unwrap();
        w.record_count = 200;
        let step = SimTime::from_secs(5);
        let members = topo.data_nodes();
        let seg = |seed| {
            let s = SimSettings { seed, ..SimSettings::default() };
            Simulation::new(topo.clone(), EngineConfig::new(Engine::Redis), &members, w.clone(), StopRule::Duration(step), s, 1.0)
                .unwrap()
                .run()
                .unwrap()
        };
        let (a, b) = (seg(1), seg(2));
        let total = a.summary.ok_ops + b.summary.ok_ops;
        let m = concat_segments(vec![a, b], step, &SimSettings::default());
        assert_eq!(m.summary.ok_ops, total);
        assert_eq!(m.timeline.total(), total);
        assert_eq!(m.timeline.counts.len(), 10);
        assert_eq!(m.summary.wall_virtual_ms, 10_000.0);
    }
}
