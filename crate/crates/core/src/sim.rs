//! One simulation instance: a topology, a database model and a closed-loop
//! workload driven through the event queue.

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dbmodels::{
    build_model, ChurnKind, ChurnPlan, DbModel, EngineConfig, FlowPlan, ModelError, OpRequest, PlanError,
    RoutedView, Stage, GOSSIP_BYTES,
};
use crate::metrics::{BatchSummary, RunSummary, SettleEvent, ThroughputTimeline, TrafficClass, TrafficMatrix};
use crate::router::{route_and_transmit, RerouteConfig, RouteError, RouteTable};
use crate::simkernel::{EventKind, EventQueue, MessageId, Network, TraceRecord, TraceRecorder};
use crate::time::SimTime;
use crate::topology::{ClusterTopology, LinkId, LinkState, NodeId, TopologyError};
use crate::workload::{OpGenerator, OpKind, Operation, Outcome, WorkloadError, WorkloadSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    /// Set from the run's top-level seed, not from config.
    #[serde(skip)]
    pub seed: u64,
    pub bucket_ms: u64,
    pub reroute_delay_ms: f64,
    /// Upper end of a uniform reroute delay; `None` for a fixed delay.
    pub reroute_jitter_max_ms: Option<f64>,
    pub gossip: bool,
    pub timeout_factor: f64,
    pub min_timeout_ms: f64,
    /// Pause after an operation fails for lack of any route.
    pub failure_backoff_ms: f64,
    pub unresponsive_threshold_ms: u64,
    /// Event trace output: a file for a single simulation, a directory
    /// when a scenario runs several.
    #[serde(skip)]
    pub trace_path: Option<PathBuf>,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            seed: 1,
            bucket_ms: 1000,
            reroute_delay_ms: 30_000.0,
            reroute_jitter_max_ms: None,
            gossip: true,
            timeout_factor: 5.0,
            min_timeout_ms: 1000.0,
            failure_backoff_ms: 1000.0,
            unresponsive_threshold_ms: 5000,
            trace_path: None,
        }
    }
}

impl SimSettings {
    pub fn reroute(&self) -> RerouteConfig {
        RerouteConfig {
            delay: SimTime::from_ms_f64(self.reroute_delay_ms),
            jitter_max: self.reroute_jitter_max_ms.map(SimTime::from_ms_f64),
            seed: self.seed ^ 0x5eed_0f_7a11,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Run the spec's operation count in its batches.
    Operations,
    /// Issue operations until this time, then stop.
    Duration(SimTime),
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("trace output: {0}")]
    Io(#[from] std::io::Error),
    #[error("member `{0}` is not a node of the topology")]
    UnknownMember(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkEventRecord {
    pub t_ms: f64,
    pub link: String,
    pub state: LinkState,
    /// Some route used the link when it went down, or would use it when up.
    pub routed: bool,
    pub recompute_at_ms: Option<f64>,
    pub lost_messages: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub t_ms: f64,
    pub tag: u64,
    pub mean_latency_ms: f64,
    pub unrouted_pairs: usize,
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub timeline: ThroughputTimeline,
    pub traffic: TrafficMatrix,
    pub oplog: Vec<Operation>,
    pub link_events: Vec<LinkEventRecord>,
    pub probes: Vec<Probe>,
    pub churn_errors: Vec<String>,
    pub final_members: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
enum Ev {
    Deliver(MessageId),
    Link(LinkId, LinkState),
    Recompute,
    ChurnStart(NodeId, ChurnKind),
    ChurnDone,
    Wake(u32, u64),
    StageDone(u32, u64),
    LegServed(u32, u64, u32),
    Timeout(u32, u64),
    Gossip,
    Probe(u64),
}

impl Ev {
    fn trace(&self) -> (EventKind, u64, u64, u64) {
        match *self {
            Ev::Deliver(m) => (EventKind::MessageDelivery, m.0, 0, 0),
            Ev::Link(l, s) => (EventKind::LinkState, u64::from(l.0), u64::from(s == LinkState::Up), 0),
            Ev::Recompute => (EventKind::Timer, 1, 0, 0),
            Ev::ChurnStart(n, k) => (EventKind::Membership, u64::from(n.0), u64::from(k == ChurnKind::Add), 0),
            Ev::ChurnDone => (EventKind::Membership, u64::MAX, 0, 0),
            Ev::Wake(th, g) => (EventKind::WorkloadOp, u64::from(th), g, 0),
            Ev::StageDone(th, g) => (EventKind::WorkloadOp, u64::from(th), g, 1),
            Ev::LegServed(th, g, l) => (EventKind::WorkloadOp, u64::from(th), g, 2 + u64::from(l)),
            Ev::Timeout(th, g) => (EventKind::WorkloadOp, u64::from(th), g, u64::MAX),
            Ev::Gossip => (EventKind::Timer, 2, 0, 0),
            Ev::Probe(tag) => (EventKind::Timer, 3, tag, 0),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Purpose {
    Hop { thread: u32, gen: u64 },
    LegRequest { thread: u32, gen: u64, leg: u32 },
    LegResponse { thread: u32, gen: u64 },
    Background,
}

#[derive(Clone, Copy, Debug)]
struct MsgCtx {
    purpose: Purpose,
    src: NodeId,
    dst: NodeId,
    bytes: u64,
    class: TrafficClass,
    write: bool,
}

struct Active {
    op: Operation,
    req: OpRequest,
    plan: FlowPlan,
    stage: usize,
    replies: usize,
    attempt: u8,
}

#[derive(Default)]
struct Thread {
    gen: u64,
    active: Option<Active>,
}

struct Driver {
    ops: OpGenerator,
    batches: Vec<u64>,
    batch: usize,
    issued: u64,
    done: u64,
    batch_start: SimTime,
    summaries: Vec<BatchSummary>,
    next_id: u64,
    stop: StopRule,
}

impl Driver {
    fn finished(&self) -> bool {
        matches!(self.stop, StopRule::Operations) && self.batch >= self.batches.len()
    }

    fn next(&mut self, t: SimTime) -> Option<(u64, OpKind, u64, u32)> {
        match self.stop {
            StopRule::Duration(end) if t >= end => return None,
            StopRule::Operations if self.batch >= self.batches.len() || self.issued >= self.batches[self.batch] => {
                return None
            }
            _ => {}
        }
        self.issued += 1;
        let id = self.next_id;
        self.next_id += 1;
        let (kind, key, len) = self.ops.next_op();
        Some((id, kind, key, len))
    }

    /// Returns true when this completion closed a batch and another starts.
    fn op_done(&mut self, t: SimTime) -> bool {
        self.done += 1;
        let StopRule::Operations = self.stop else { return false };
        if self.batch < self.batches.len() && self.done == self.batches[self.batch] {
            let secs = (t - self.batch_start).as_secs_f64();
            self.summaries.push(BatchSummary {
                ops: self.done,
                start_ms: self.batch_start.as_ms(),
                end_ms: t.as_ms(),
                throughput_ops_s: if secs > 0.0 { self.done as f64 / secs } else { 0.0 },
            });
            self.batch += 1;
            self.issued = 0;
            self.done = 0;
            self.batch_start = t;
            return self.batch < self.batches.len();
        }
        false
    }
}

pub struct Simulation {
    queue: EventQueue<Ev>,
    topo: ClusterTopology,
    net: Network,
    routes: RouteTable,
    model: Box<dyn DbModel>,
    client: NodeId,
    settings: SimSettings,
    engine: EngineConfig,
    workload: WorkloadSpec,
    lsf: f64,
    threads: Vec<Thread>,
    driver: Driver,
    msgs: HashMap<MessageId, MsgCtx>,
    trace: TraceRecorder,
    timeline: ThroughputTimeline,
    traffic: TrafficMatrix,
    oplog: Vec<Operation>,
    churn_active: Option<(ChurnPlan, SimTime)>,
    churn_waiting: VecDeque<(NodeId, ChurnKind)>,
    settle_events: Vec<SettleEvent>,
    churn_errors: Vec<String>,
    link_events: Vec<LinkEventRecord>,
    probes: Vec<Probe>,
    events: u64,
}

impl Simulation {
    /// `members` are the database's initial data nodes; `lsf` is a label
    /// for the summary (scaling must already be applied to `topo`).
    pub fn new(
        topo: ClusterTopology,
        engine: EngineConfig,
        members: &[NodeId],
        workload: WorkloadSpec,
        stop: StopRule,
        settings: SimSettings,
        lsf: f64,
    ) -> Result<Self, SimError> {
        workload.validate()?;
        let client = topo.client()?;
        for m in members {
            if m.idx() >= topo.nodes().len() {
                return Err(SimError::UnknownMember(m.to_string()));
            }
        }
        let model = build_model(&engine, &topo, members, client, workload.record_count, settings.seed)?;
        let routes = RouteTable::new(&topo, settings.reroute(), SimTime::ZERO);
        let trace = match &settings.trace_path {
            Some(p) => TraceRecorder::with_file(p)?,
            None => TraceRecorder::default(),
        };
        let names = topo.nodes().iter().map(|n| n.name.clone()).collect();
        let mut sim = Simulation {
            queue: EventQueue::new(),
            net: Network::new(&topo),
            routes,
            model,
            client,
            threads: (0..workload.threads).map(|_| Thread::default()).collect(),
            driver: Driver {
                ops: OpGenerator::new(&workload),
                batches: workload.batch_sizes(),
                batch: 0,
                issued: 0,
                done: 0,
                batch_start: SimTime::ZERO,
                summaries: Vec::new(),
                next_id: 0,
                stop,
            },
            msgs: HashMap::new(),
            trace,
            timeline: ThroughputTimeline::new(settings.bucket_ms),
            traffic: TrafficMatrix::new(names),
            oplog: Vec::new(),
            churn_active: None,
            churn_waiting: VecDeque::new(),
            settle_events: Vec::new(),
            churn_errors: Vec::new(),
            link_events: Vec::new(),
            probes: Vec::new(),
            events: 0,
            topo,
            settings,
            engine,
            workload,
            lsf,
        };
        for th in 0..sim.threads.len() as u32 {
            sim.at(SimTime::ZERO, Ev::Wake(th, 0));
        }
        if sim.settings.gossip {
            sim.at(SimTime::ZERO, Ev::Gossip);
        }
        Ok(sim)
    }

    pub fn topology(&self) -> &ClusterTopology {
        &self.topo
    }

    pub fn schedule_link_state(&mut self, t: SimTime, link: LinkId, state: LinkState) {
        self.at(t, Ev::Link(link, state));
    }

    pub fn schedule_churn(&mut self, t: SimTime, node: NodeId, kind: ChurnKind) {
        self.at(t, Ev::ChurnStart(node, kind));
    }

    /// Samples the mean route latency among data nodes at `t`.
    pub fn schedule_probe(&mut self, t: SimTime, tag: u64) {
        self.at(t, Ev::Probe(tag));
    }

    fn at(&mut self, t: SimTime, ev: Ev) {
        self.queue.schedule(t, ev).expect("events are never scheduled in the past");
    }

    pub fn run(mut self) -> Result<RunOutcome, SimError> {
        let end_limit = match self.driver.stop {
            StopRule::Duration(end) => end,
            StopRule::Operations => SimTime::MAX,
        };
        let mut end = SimTime::ZERO;
        while !self.driver.finished() {
            let Some(ev) = self.queue.pop_due(end_limit) else { break };
            let t = ev.t;
            end = t;
            let (kind, a, b, c) = ev.payload.trace();
            self.trace.record(TraceRecord::new(t, ev.seq, kind, a, b, c))?;
            self.events += 1;
            self.handle(t, ev.payload);
        }
        if let StopRule::Duration(d) = self.driver.stop {
            end = d;
        }
        self.trace.flush()?;
        Ok(self.finish(end))
    }

    fn handle(&mut self, t: SimTime, ev: Ev) {
        match ev {
            Ev::Deliver(id) => self.on_deliver(t, id),
            Ev::Link(link, state) => self.on_link(t, link, state),
            Ev::Recompute => {
                self.routes.recompute_due(&self.topo, t);
            }
            Ev::ChurnStart(node, kind) => self.on_churn_start(t, node, kind),
            Ev::ChurnDone => self.on_churn_done(t),
            Ev::Wake(th, gen) => {
                if self.threads[th as usize].gen == gen {
                    self.start_attempt(th, t);
                }
            }
            Ev::StageDone(th, gen) => {
                if let Some(a) = self.current(th, gen) {
                    a.stage += 1;
                    self.advance(th, t);
                }
            }
            Ev::LegServed(th, gen, leg) => self.on_leg_served(t, th, gen, leg),
            Ev::Timeout(th, gen) => self.on_timeout(t, th, gen),
            Ev::Gossip => self.on_gossip(t),
            Ev::Probe(tag) => {
                let (mean, missing) = self.routes.mean_latency_ms(&self.topo, &self.topo.data_nodes());
                self.probes.push(Probe {
                    t_ms: t.as_ms(),
                    tag,
                    mean_latency_ms: mean,
                    unrouted_pairs: missing,
                });
            }
        }
    }

    fn current(&mut self, th: u32, gen: u64) -> Option<&mut Active> {
        let thread = &mut self.threads[th as usize];
        if thread.gen != gen {
            return None;
        }
        thread.active.as_mut()
    }

    fn send(&mut self, t: SimTime, src: NodeId, dst: NodeId, bytes: u64, class: TrafficClass, write: bool, purpose: Purpose) -> Result<(), PlanError> {
        match route_and_transmit(&mut self.net, &self.routes, &self.topo, src, dst, bytes, t) {
            Ok((id, at)) => {
                self.msgs.insert(
                    id,
                    MsgCtx {
                        purpose,
                        src,
                        dst,
                        bytes,
                        class,
                        write,
                    },
                );
                self.at(at, Ev::Deliver(id));
                Ok(())
            }
            Err(RouteError::Rerouting { ready_at, .. }) => Err(PlanError::Stalled { ready_at }),
            Err(_) => Err(PlanError::Unreachable { node: dst }),
        }
    }

    fn start_attempt(&mut self, th: u32, t: SimTime) {
        let thread = &mut self.threads[th as usize];
        if thread.active.is_none() {
            let Some((id, kind, key, scan_len)) = self.driver.next(t) else { return };
            if kind == OpKind::Insert {
                self.model.record_inserted(key);
            }
            thread.active = Some(Active {
                op: Operation {
                    id,
                    thread: th,
                    kind,
                    key,
                    scan_len,
                    issued_at: t,
                    completed_at: None,
                    outcome: None,
                    bytes_moved: 0,
                },
                req: OpRequest { kind, key, scan_len },
                plan: FlowPlan::default(),
                stage: 0,
                replies: 0,
                attempt: 0,
            });
        }
        let req = thread.active.as_ref().expect("set above").req;
        let view = RoutedView {
            topo: &self.topo,
            routes: &self.routes,
            t,
        };
        match self.model.plan_operation(&req, self.client, &view) {
            Ok(plan) => {
                let nominal = plan.nominal_latency(&view);
                let timeout = nominal
                    .mul_f64(self.settings.timeout_factor)
                    .max(SimTime::from_ms_f64(self.settings.min_timeout_ms));
                let thread = &mut self.threads[th as usize];
                thread.gen += 1;
                let gen = thread.gen;
                let a = thread.active.as_mut().expect("set above");
                a.plan = plan;
                a.stage = 0;
                a.replies = 0;
                self.at(t + timeout, Ev::Timeout(th, gen));
                self.advance(th, t);
            }
            Err(e) => self.abort(th, t, e),
        }
    }

    /// Runs stages until one has to wait for the network or a service time.
    fn advance(&mut self, th: u32, t: SimTime) {
        loop {
            let thread = &self.threads[th as usize];
            let gen = thread.gen;
            let Some(a) = thread.active.as_ref() else { return };
            let write = matches!(a.op.kind, OpKind::Update | OpKind::Insert | OpKind::ReadModifyWrite);
            let Some(stage) = a.plan.stages.get(a.stage).cloned() else {
                self.complete(th, t, Outcome::Ok);
                return;
            };
            match stage {
                Stage::Hop {
                    from,
                    to,
                    bytes,
                    class,
                    service,
                } => {
                    if from == to {
                        self.at(t + service, Ev::StageDone(th, gen));
                        return;
                    }
                    match self.send(t, from, to, bytes, class, write, Purpose::Hop { thread: th, gen }) {
                        Ok(()) => self.add_bytes(th, bytes),
                        Err(e) => self.abort(th, t, e),
                    }
                    return;
                }
                Stage::Gather { from, legs, need } => {
                    let mut sent = 0;
                    let mut err = None;
                    for (i, leg) in legs.iter().enumerate() {
                        if leg.to == from {
                            self.at(t + leg.service, Ev::LegServed(th, gen, i as u32));
                            sent += 1;
                            continue;
                        }
                        let p = Purpose::LegRequest {
                            thread: th,
                            gen,
                            leg: i as u32,
                        };
                        match self.send(t, from, leg.to, leg.request_bytes, TrafficClass::Request, write, p) {
                            Ok(()) => {
                                self.add_bytes(th, leg.request_bytes);
                                sent += 1;
                            }
                            Err(e) => err = Some(e),
                        }
                    }
                    if sent < need {
                        self.abort(th, t, err.unwrap_or(PlanError::NoOwner));
                    }
                    return;
                }
                Stage::Async {
                    from,
                    targets,
                    bytes,
                    class,
                } => {
                    for to in targets {
                        if to != from && self.send(t, from, to, bytes, class, false, Purpose::Background).is_ok() {
                            self.add_bytes(th, bytes);
                        }
                    }
                    self.threads[th as usize].active.as_mut().expect("active").stage += 1;
                }
            }
        }
    }

    fn add_bytes(&mut self, th: u32, bytes: u64) {
        if let Some(a) = self.threads[th as usize].active.as_mut() {
            a.op.bytes_moved += bytes;
        }
    }

    fn on_deliver(&mut self, t: SimTime, id: MessageId) {
        if self.net.complete(id).is_none() {
            return;
        }
        let Some(ctx) = self.msgs.remove(&id) else { return };
        self.traffic
            .record_flow(ctx.src.idx(), ctx.dst.idx(), ctx.bytes, ctx.class, ctx.write);
        match ctx.purpose {
            Purpose::Hop { thread, gen } => {
                let Some(a) = self.current(thread, gen) else { return };
                let service = match &a.plan.stages[a.stage] {
                    Stage::Hop { service, .. } => *service,
                    _ => SimTime::ZERO,
                };
                if service == SimTime::ZERO {
                    a.stage += 1;
                    self.advance(thread, t);
                } else {
                    self.at(t + service, Ev::StageDone(thread, gen));
                }
            }
            Purpose::LegRequest { thread, gen, leg } => {
                let Some(a) = self.current(thread, gen) else { return };
                let service = match &a.plan.stages[a.stage] {
                    Stage::Gather { legs, .. } => legs[leg as usize].service,
                    _ => SimTime::ZERO,
                };
                self.at(t + service, Ev::LegServed(thread, gen, leg));
            }
            Purpose::LegResponse { thread, gen } => self.leg_reply(t, thread, gen),
            Purpose::Background => {}
        }
    }

    fn on_leg_served(&mut self, t: SimTime, th: u32, gen: u64, leg: u32) {
        let Some(a) = self.current(th, gen) else { return };
        let Stage::Gather { from, legs, .. } = &a.plan.stages[a.stage] else { return };
        let (from, l) = (*from, legs[leg as usize]);
        if l.to == from {
            self.leg_reply(t, th, gen);
            return;
        }
        let write = matches!(a.op.kind, OpKind::Update | OpKind::Insert | OpKind::ReadModifyWrite);
        let p = Purpose::LegResponse { thread: th, gen };
        if self
            .send(t, l.to, from, l.response_bytes, TrafficClass::Response, write, p)
            .is_ok()
        {
            self.add_bytes(th, l.response_bytes);
        }
    }

    fn leg_reply(&mut self, t: SimTime, th: u32, gen: u64) {
        let Some(a) = self.current(th, gen) else { return };
        let Stage::Gather { need, .. } = &a.plan.stages[a.stage] else { return };
        a.replies += 1;
        if a.replies == *need {
            a.stage += 1;
            a.replies = 0;
            self.advance(th, t);
        }
    }

    fn on_timeout(&mut self, t: SimTime, th: u32, gen: u64) {
        let Some(a) = self.current(th, gen) else { return };
        if a.attempt > 0 {
            self.complete(th, t, Outcome::TimedOut);
            return;
        }
        // Retry once, after any reroute this operation depends on.
        let mut retry_at = t;
        for (x, y) in a.plan.pairs() {
            if let crate::router::PathStatus::Rerouting { ready_at } = self.routes.status(&self.topo, x, y) {
                retry_at = retry_at.max(ready_at);
            }
        }
        self.retry(th, retry_at);
    }

    fn retry(&mut self, th: u32, at: SimTime) {
        let thread = &mut self.threads[th as usize];
        thread.gen += 1;
        let gen = thread.gen;
        if let Some(a) = thread.active.as_mut() {
            a.attempt += 1;
        }
        self.at(at, Ev::Wake(th, gen));
    }

    fn abort(&mut self, th: u32, t: SimTime, err: PlanError) {
        let attempt = self.threads[th as usize].active.as_ref().map_or(0, |a| a.attempt);
        match err {
            PlanError::Stalled { ready_at } if attempt == 0 => self.retry(th, ready_at.max(t)),
            PlanError::Stalled { .. } => self.complete(th, t, Outcome::Failed),
            _ => {
                self.complete(th, t, Outcome::Failed);
                // Nothing can route right now; back off instead of spinning.
                let thread = &mut self.threads[th as usize];
                thread.gen += 1;
                let gen = thread.gen;
                let at = t + SimTime::from_ms_f64(self.settings.failure_backoff_ms);
                self.at(at, Ev::Wake(th, gen));
            }
        }
    }

    fn complete(&mut self, th: u32, t: SimTime, outcome: Outcome) {
        let thread = &mut self.threads[th as usize];
        thread.gen += 1;
        let gen = thread.gen;
        let Some(mut a) = thread.active.take() else { return };
        a.op.completed_at = Some(t);
        a.op.outcome = Some(outcome);
        if outcome == Outcome::Ok {
            self.timeline.record(t);
        }
        self.oplog.push(a.op);
        let new_batch = self.driver.op_done(t);
        if new_batch {
            for other in 0..self.threads.len() as u32 {
                if other != th && self.threads[other as usize].active.is_none() {
                    let g = self.threads[other as usize].gen;
                    self.at(t, Ev::Wake(other, g));
                }
            }
        }
        self.at(t, Ev::Wake(th, gen));
    }

    fn on_link(&mut self, t: SimTime, link: LinkId, state: LinkState) {
        let Ok(Some(_)) = self.topo.set_link_state(link, state, t) else { return };
        let mut lost = 0;
        if state == LinkState::Down {
            for l in self.net.fail_link(link, t) {
                self.msgs.remove(&l.message.id);
                lost += 1;
            }
        }
        let ready = self.routes.on_link_state_change(&self.topo, link, state, t);
        if let Some(r) = ready {
            self.at(r, Ev::Recompute);
        }
        self.link_events.push(LinkEventRecord {
            t_ms: t.as_ms(),
            link: self.topo.link(link).name.clone(),
            state,
            routed: ready.is_some(),
            recompute_at_ms: ready.map(|r| r.as_ms()),
            lost_messages: lost,
        });
    }

    fn on_churn_start(&mut self, t: SimTime, node: NodeId, kind: ChurnKind) {
        if self.churn_active.is_some() {
            self.churn_waiting.push_back((node, kind));
            return;
        }
        let view = RoutedView {
            topo: &self.topo,
            routes: &self.routes,
            t,
        };
        let res = match kind {
            ChurnKind::Remove => self.model.remove_node(node, &view),
            ChurnKind::Add => self.model.add_node(node, &view),
        };
        match res {
            Ok(plan) => {
                for tr in &plan.transfers {
                    if tr.from != tr.to {
                        let _ = self.send(t, tr.from, tr.to, tr.bytes, TrafficClass::Bulk, false, Purpose::Background);
                    }
                }
                self.at(t + plan.settle, Ev::ChurnDone);
                self.churn_active = Some((plan, t));
            }
            Err(e) => {
                self.churn_errors.push(format!("{} {}: {e}", self.topo.node_name(node), kind_str(kind)));
                self.start_waiting_churn(t);
            }
        }
    }

    fn on_churn_done(&mut self, t: SimTime) {
        let Some((plan, started)) = self.churn_active.take() else { return };
        self.model.finish_churn(&plan);
        self.settle_events.push(SettleEvent {
            node: self.topo.node_name(plan.node).to_string(),
            kind: kind_str(plan.kind).to_string(),
            start_ms: started.as_ms(),
            duration_ms: (t - started).as_ms(),
            bulk_bytes: plan.bulk_bytes(),
        });
        self.start_waiting_churn(t);
    }

    fn start_waiting_churn(&mut self, t: SimTime) {
        if let Some((n, k)) = self.churn_waiting.pop_front() {
            self.at(t, Ev::ChurnStart(n, k));
        }
    }

    fn on_gossip(&mut self, t: SimTime) {
        let members = self.model.members();
        for &a in &members {
            for &b in &members {
                if a != b {
                    let _ = self.send(t, a, b, GOSSIP_BYTES, TrafficClass::Gossip, false, Purpose::Background);
                }
            }
        }
        self.at(t + SimTime::from_secs(1), Ev::Gossip);
    }

    fn finish(mut self, end: SimTime) -> RunOutcome {
        self.timeline.extend_to(end);
        let n = self.topo.nodes().len();
        for i in 0..n {
            for j in 0..n {
                self.traffic.hop_bytes[i][j] = self.net.hop_bytes(NodeId(i as u16), NodeId(j as u16));
            }
        }
        self.traffic.links = self
            .topo
            .links()
            .iter()
            .zip(self.net.counters())
            .map(|(l, c)| crate::metrics::LinkTraffic {
                link: l.name.clone(),
                a: self.topo.node_name(l.a).to_string(),
                b: self.topo.node_name(l.b).to_string(),
                counters: *c,
            })
            .collect();
        let count = |o: Outcome| self.oplog.iter().filter(|op| op.outcome == Some(o)).count() as u64;
        let ok = count(Outcome::Ok);
        let failed = count(Outcome::Failed);
        let timed_out = count(Outcome::TimedOut);
        let secs = end.as_secs_f64();
        let windows = self.timeline.unresponsive_windows(
            SimTime::from_millis(self.settings.unresponsive_threshold_ms),
            SimTime::ZERO,
            end,
        );
        let summary = RunSummary {
            engine: self.engine.engine.as_str().to_string(),
            workload: self.workload.name.clone(),
            lsf: self.lsf,
            seed: self.settings.seed,
            total_ops: self.oplog.len() as u64,
            ok_ops: ok,
            failed_ops: failed + timed_out,
            timed_out_ops: timed_out,
            wall_virtual_ms: end.as_ms(),
            throughput_ops_s: if secs > 0.0 { ok as f64 / secs } else { 0.0 },
            total_mb_transferred: self.traffic.total_bytes() as f64 / 1e6,
            settle_events: self.settle_events,
            unresponsive_windows: windows,
            batches: self.driver.summaries,
            events_processed: self.events,
            trace_hash: self.trace.hash(),
        };
        RunOutcome {
            summary,
            timeline: self.timeline,
            traffic: self.traffic,
            oplog: self.oplog,
            link_events: self.link_events,
            probes: self.probes,
            churn_errors: self.churn_errors,
            final_members: self
                .model
                .members()
                .into_iter()
                .map(|n| self.topo.node_name(n).to_string())
                .collect(),
        }
    }
}

fn kind_str(k: ChurnKind) -> &'static str {
    match k {
        ChurnKind::Remove => "remove",
        ChurnKind::Add => "add",
    }
}
