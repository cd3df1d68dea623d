// Copyright 2026 The aqsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Discrete-event engine for the mesh.
//!
//! Components own bounded FIFO worker pools. Scatter-gather components run a
//! pre job, fan out calls, wait for replies or their per-child timeouts, then
//! run a merge job. Every component sits behind an [`Interposer`]; the design
//! mode decides how contexts travel (datagrams, payload tags or not at all) and
//! how mature answers are produced.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::time::Instant;

use thiserror::Error;
use xxhash_rust::xxh3::Xxh3;

use super::service::{answer_from_payload, Service, Work};
use super::{DesignMode, EngineConfig};
use crate::cache::{CacheConfig, CacheStats, MemoCache};
use crate::config::{RunConfig, TimeMode};
use crate::controller::{AdmissionController, ControllerConfig, ControllerKind, ControllerRow};
use crate::metrics::{MatureOutcome, RunLog, RunRecord};
use crate::model::{Answer, AnswerKind, ComponentId, ContextId, ExecutionContext, Item, Mode, Priority, Query};
use crate::quality::{QualityError, QualityRow, SimilarityFn, SimilarityRegistry};
use crate::rng::{RngSplitter, SimRng};
use crate::sampler::Sampler;
use crate::time::{Clock, Nanos, VirtualClock};
use crate::transport::{
    CacheKey, Connection, ConnectionId, ConnectionState, ControlMessage, ControlMode, ControlOutcome, Delivery, Frame,
    Inbound, Interposer, InterposerConfig, LoopbackTransport, RecordOutcome, ReplayLookup, TerminationMatcher,
    TerminationOutcome,
};

/// Everything one run needs.
#[derive(Clone, Debug)]
pub struct MeshInput<'a> {
    pub config: &'a RunConfig,
    pub service: &'a Service,
    pub mode: DesignMode,
    pub controller: ControllerKind,
    pub controller_config: ControllerConfig,
    pub engine: EngineConfig,
    pub queries: &'a [Query],
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error(transparent)]
    Quality(#[from] QualityError),
}

/// Record and replay durations of one successful mature execution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseTiming {
    pub query_id: u64,
    pub record: Nanos,
    pub replay: Nanos,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EngineStats {
    pub events: u64,
    pub end_time: Nanos,
    pub sampled: u64,
    pub mature_ok: u64,
    pub failed_context_lost: u64,
    pub failed_incomplete: u64,
    pub failed_cache: u64,
    pub failed_timeout: u64,
    pub datagrams_sent: u64,
    pub datagrams_dropped: u64,
    pub control_jobs: u64,
    pub replay_hits: u64,
    pub replay_misses: u64,
    pub shadow_calls: u64,
    pub terminations_blocked: u64,
    pub cancelled_jobs: u64,
    /// Components still holding a context one margin past its deadline.
    pub audit_violations: u64,
    /// Context entries left in any table when the run ends.
    pub residual_contexts: u64,
    /// Busy fraction per component over the run.
    pub utilization: Vec<f64>,
    pub cache: CacheStats,
    pub cache_peak_bytes: u64,
    /// Digest of every frame sent on every connection, in send order.
    pub wire_digest: u128,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub log: RunLog,
    pub quality_rows: Vec<QualityRow>,
    pub controller_rows: Vec<ControllerRow>,
    /// Per record: TPR of the online answer against the directly computed reference.
    pub oracle_quality: Vec<Option<f64>>,
    pub online_answers: Vec<Option<Answer>>,
    pub mature_answers: Vec<Option<Answer>>,
    pub phases: Vec<PhaseTiming>,
    /// Per sampled query: (control datagrams sent, distinct components contacted).
    pub control_usage: Vec<(u64, usize)>,
    pub stats: EngineStats,
}

impl RunOutcome {
    pub fn mature_failure_rate(&self) -> f64 {
        self.log.mature_failure_rate()
    }
}

type ExecId = u64;
type JobId = u64;
type AttemptId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Purpose {
    Online,
    Replay,
    Tagged,
    Toggled,
}

#[derive(Debug)]
struct Attempt {
    query: usize,
    purpose: Purpose,
    started: Nanos,
    timed_out: BTreeSet<ComponentId>,
    execs: BTreeSet<ExecId>,
    /// Live executions on components that are re-executed during replay.
    live_reexec: usize,
    done: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MatureState {
    None,
    Recording,
    Replaying,
    Running,
    Done,
}

#[derive(Debug)]
struct QueryState {
    query: Query,
    admitted: bool,
    online_done: bool,
    online_latency: Option<Nanos>,
    online_answer: Option<Answer>,
    oracle: Option<f64>,
    ctx: Option<ExecutionContext>,
    replay_ctx: Option<ExecutionContext>,
    pending_keys: BTreeSet<CacheKey>,
    last_write: Nanos,
    context_lost: bool,
    cache_failed: bool,
    state: MatureState,
    mature: MatureOutcome,
    mature_answer: Option<Answer>,
    quality: Option<f64>,
    online_attempt: Option<AttemptId>,
    mature_attempt: Option<AttemptId>,
    record_done_at: Option<Nanos>,
    replay_started: Option<Nanos>,
    controls: u64,
    contacted: BTreeSet<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ExecState {
    Pre,
    Waiting,
    Merging,
    Leaf,
}

#[derive(Debug)]
struct Child {
    component: usize,
    conn: Option<ConnectionId>,
    data: Vec<u8>,
    reply: Option<Vec<u8>>,
    deadline: Option<Nanos>,
    done: bool,
}

#[derive(Debug)]
struct Exec {
    attempt: AttemptId,
    component: usize,
    ctx: ExecutionContext,
    mature: bool,
    tagged: bool,
    parent: Option<ConnectionId>,
    state: ExecState,
    job: Option<JobId>,
    children: Vec<Child>,
    outstanding: usize,
    recording: bool,
}

#[derive(Clone, Copy, Debug)]
struct CallMeta {
    attempt: AttemptId,
    mature: bool,
    tagged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum JobKind {
    Pre,
    Merge,
    Leaf,
    Control,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum JobState {
    Queued,
    Running(Nanos),
    Cancelled,
}

#[derive(Debug)]
struct Job {
    component: usize,
    exec: Option<ExecId>,
    kind: JobKind,
    duration: Nanos,
    state: JobState,
}

#[derive(Debug)]
struct Node {
    interposer: Interposer,
    workers: usize,
    busy: usize,
    queue: VecDeque<JobId>,
    busy_time: Nanos,
}

#[derive(Debug)]
enum Ev {
    Arrival(usize),
    JobDone(JobId),
    ToCallee(ConnectionId),
    ToCaller(ConnectionId),
    CacheReply {
        exec: ExecId,
        child: usize,
        frames: Vec<Frame>,
    },
    Datagram(usize),
    Timeout(ExecId),
    Expire(usize),
    Terminate(ConnectionId),
    Ready(usize),
    Settle(usize),
    MatureDeadline(usize),
    Audit(ContextId),
}

struct Scheduled {
    at: Nanos,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    svc: &'a Service,
    mode: DesignMode,
    ec: EngineConfig,
    similarity: SimilarityFn,
    clock: VirtualClock,
    now: Nanos,
    seq: u64,
    heap: BinaryHeap<Scheduled>,
    nodes: Vec<Node>,
    transport: LoopbackTransport,
    cache: MemoCache,
    queries: Vec<QueryState>,
    attempts: HashMap<AttemptId, Attempt>,
    execs: HashMap<ExecId, Exec>,
    jobs: HashMap<JobId, Job>,
    callee_exec: HashMap<ConnectionId, ExecId>,
    caller_side: HashMap<ConnectionId, (ExecId, usize)>,
    meta: HashMap<ConnectionId, CallMeta>,
    ctx_query: BTreeMap<ContextId, usize>,
    key_owner: HashMap<CacheKey, usize>,
    endpoint_index: BTreeMap<crate::transport::Endpoint, usize>,
    next_id: u64,
    next_ctx: u64,
    active_toggles: usize,
    admission_rng: SimRng,
    sampler_rng: SimRng,
    sampler: Sampler,
    controller: AdmissionController,
    quality_rows: Vec<QualityRow>,
    phases: Vec<PhaseTiming>,
    stats: EngineStats,
    wire: Xxh3,
}

/// Runs one trace through the mesh.
pub fn run_mesh(input: &MeshInput<'_>) -> Result<RunOutcome, MeshError> {
    let similarity = SimilarityRegistry::new().resolve(&input.config.quality_function)?;
    let mut engine = Engine::new(input, similarity);
    engine.run(input.config.time_mode);
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    fn new(input: &MeshInput<'a>, similarity: SimilarityFn) -> Self {
        let cfg = input.config;
        let svc = input.service;
        let splitter = RngSplitter::new(cfg.rng_seed);
        let mut transport = LoopbackTransport::new(input.engine.datagram_loss, splitter.stream("datagram-loss"));
        let mut endpoint_index = BTreeMap::new();
        let nodes = svc
            .components()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                transport.register(c.endpoint.clone());
                endpoint_index.insert(c.endpoint.clone(), i);
                Node {
                    interposer: Interposer::new(
                        c.endpoint.clone(),
                        InterposerConfig {
                            memoize: c.memoize && input.mode.memoizes(),
                            node_local_timeouts: input.mode.node_local_timeouts(),
                            propagate_timeout: cfg.propagate_timeout,
                            termination: TerminationMatcher::default(),
                        },
                    ),
                    workers: c.workers.max(1),
                    busy: 0,
                    queue: VecDeque::new(),
                    busy_time: Nanos::ZERO,
                }
            })
            .collect();
        let rate = if input.mode.samples() {
            cfg.samples.scaled(input.mode.sample_factor())
        } else {
            cfg.samples.scaled(0.0)
        };
        let queries = input
            .queries
            .iter()
            .map(|q| QueryState {
                query: q.clone(),
                admitted: false,
                online_done: false,
                online_latency: None,
                online_answer: None,
                oracle: None,
                ctx: None,
                replay_ctx: None,
                pending_keys: BTreeSet::new(),
                last_write: Nanos::ZERO,
                context_lost: false,
                cache_failed: false,
                state: MatureState::None,
                mature: MatureOutcome::NotSampled,
                mature_answer: None,
                quality: None,
                online_attempt: None,
                mature_attempt: None,
                record_done_at: None,
                replay_started: None,
                controls: 0,
                contacted: BTreeSet::new(),
            })
            .collect();
        let mut e = Engine {
            cfg,
            svc,
            mode: input.mode,
            ec: input.engine.clone(),
            similarity,
            clock: VirtualClock::new(),
            now: Nanos::ZERO,
            seq: 0,
            heap: BinaryHeap::new(),
            nodes,
            transport,
            cache: MemoCache::new(CacheConfig {
                capacity_bytes: cfg.cache_capacity_bytes,
                ttl: cfg.cache_ttl,
                per_context_limit: None,
            }),
            queries,
            attempts: HashMap::new(),
            execs: HashMap::new(),
            jobs: HashMap::new(),
            callee_exec: HashMap::new(),
            caller_side: HashMap::new(),
            meta: HashMap::new(),
            ctx_query: BTreeMap::new(),
            key_owner: HashMap::new(),
            endpoint_index,
            next_id: 1,
            next_ctx: 1,
            active_toggles: 0,
            admission_rng: splitter.stream("admission"),
            sampler_rng: splitter.stream("sampler"),
            sampler: Sampler::new(rate, Nanos::ZERO),
            controller: AdmissionController::new(input.controller, &input.controller_config),
            quality_rows: Vec::new(),
            phases: Vec::new(),
            stats: EngineStats::default(),
            wire: Xxh3::new(),
        };
        for i in 0..e.queries.len() {
            let at = e.queries[i].query.arrival_time;
            e.schedule(at, Ev::Arrival(i));
        }
        e
    }

    fn id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn schedule(&mut self, at: Nanos, ev: Ev) {
        self.seq += 1;
        self.heap.push(Scheduled { at, seq: self.seq, ev });
    }

    fn run(&mut self, time_mode: TimeMode) {
        let wall_start = Instant::now();
        while let Some(Scheduled { at, ev, .. }) = self.heap.pop() {
            if time_mode == TimeMode::Real {
                let target = std::time::Duration::from_secs_f64(at.as_secs_f64() * self.ec.time_scale);
                let elapsed = wall_start.elapsed();
                if target > elapsed {
                    std::thread::sleep(target - elapsed);
                }
            }
            self.clock.advance_to(at);
            self.now = self.clock.now();
            self.stats.events += 1;
            self.handle(ev);
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Arrival(q) => self.on_arrival(q),
            Ev::JobDone(j) => self.on_job_done(j),
            Ev::ToCallee(c) => self.on_to_callee(c),
            Ev::ToCaller(c) => self.on_to_caller(c),
            Ev::CacheReply { exec, child, frames } => {
                for f in frames {
                    self.on_child_frame(exec, child, f);
                }
            }
            Ev::Datagram(c) => self.on_datagram(c),
            Ev::Timeout(x) => self.on_timeout(x),
            Ev::Expire(c) => self.on_expire(c),
            Ev::Terminate(c) => self.on_terminate(c),
            Ev::Ready(q) => self.on_ready(q, true),
            Ev::Settle(q) => self.on_settle(q),
            Ev::MatureDeadline(q) => self.on_mature_deadline(q),
            Ev::Audit(ctx) => self.on_audit(ctx),
        }
    }

    // ---- worker pools ----

    fn enqueue(&mut self, component: usize, exec: Option<ExecId>, kind: JobKind, duration: Nanos) -> JobId {
        let id = self.id();
        self.jobs.insert(
            id,
            Job {
                component,
                exec,
                kind,
                duration,
                state: JobState::Queued,
            },
        );
        self.nodes[component].queue.push_back(id);
        self.dispatch(component);
        id
    }

    fn dispatch(&mut self, component: usize) {
        while self.nodes[component].busy < self.nodes[component].workers {
            let Some(j) = self.nodes[component].queue.pop_front() else {
                break;
            };
            let Some(job) = self.jobs.get_mut(&j) else { continue };
            if job.state != JobState::Queued {
                self.jobs.remove(&j);
                continue;
            }
            job.state = JobState::Running(self.now);
            let done = self.now + job.duration;
            self.nodes[component].busy += 1;
            self.schedule(done, Ev::JobDone(j));
        }
    }

    fn cancel_job(&mut self, j: JobId) {
        let Some(job) = self.jobs.get_mut(&j) else { return };
        let component = job.component;
        match job.state {
            JobState::Queued => job.state = JobState::Cancelled,
            JobState::Running(started) => {
                job.state = JobState::Cancelled;
                let node = &mut self.nodes[component];
                node.busy -= 1;
                node.busy_time += self.now - started;
                self.stats.cancelled_jobs += 1;
                self.dispatch(component);
            }
            JobState::Cancelled => {}
        }
    }

    fn on_job_done(&mut self, j: JobId) {
        let Some(job) = self.jobs.remove(&j) else { return };
        let JobState::Running(started) = job.state else { return };
        let node = &mut self.nodes[job.component];
        node.busy -= 1;
        node.busy_time += self.now - started;
        self.dispatch(job.component);
        let Some(x) = job.exec else { return };
        if !self.execs.contains_key(&x) {
            return;
        }
        if let Some(e) = self.execs.get_mut(&x) {
            e.job = None;
        }
        match job.kind {
            JobKind::Pre => self.fan_out(x),
            JobKind::Merge => self.complete_merge(x),
            JobKind::Leaf => {
                let (component, q) = {
                    let e = &self.execs[&x];
                    (e.component, self.attempts[&e.attempt].query)
                };
                let payload = self.svc.leaf_reply(component, &self.queries[q].query.params);
                self.reply(x, payload);
            }
            JobKind::Control => {}
        }
    }

    // ---- arrivals and attempts ----

    fn on_arrival(&mut self, q: usize) {
        let priority = self.queries[q].query.priority;
        let admitted = self.controller.on_arrival(priority, &mut self.admission_rng, self.now);
        self.queries[q].admitted = admitted;
        if !admitted {
            return;
        }
        let eligible = self.mode.samples() && (!self.ec.sample_high_only || priority == Priority::High);
        let sampled = eligible && self.sampler.decide(&mut self.sampler_rng, self.now);
        let query = std::mem::replace(
            &mut self.queries[q].query,
            Query::new(0, priority, Vec::new(), Nanos::ZERO),
        );
        self.queries[q].query = query.admitted(sampled);
        let front = self.svc.fronts()[0];
        let mut root_ctx = ExecutionContext::NORMAL;
        if sampled {
            self.stats.sampled += 1;
            if self.mode.memoizes() {
                let ctx = self.new_context(Mode::Record, q);
                root_ctx = ctx;
                self.queries[q].ctx = Some(ctx);
                self.queries[q].state = MatureState::Recording;
                self.nodes[front].interposer.begin_context(&ctx, self.now);
                self.arm_expiry(front, ctx.record_deadline());
                self.schedule(self.margin_after(ctx.record_deadline()), Ev::Ready(q));
                if self.mode.broadcasts() {
                    self.broadcast(q, &ctx, ControlMode::Record);
                }
            } else {
                self.queries[q].state = MatureState::Running;
            }
        }
        let tagged = self.mode.tags_payload() && !root_ctx.is_normal();
        let attempt = self.new_attempt(q, Purpose::Online);
        self.queries[q].online_attempt = Some(attempt);
        self.start_exec(attempt, front, root_ctx, false, tagged, None);
    }

    fn new_context(&mut self, mode: Mode, q: usize) -> ExecutionContext {
        let id = ContextId(self.next_ctx);
        self.next_ctx += 1;
        let deadline = self.now + self.cfg.record_timeout;
        self.ctx_query.insert(id, q);
        if self.mode.node_local_timeouts() {
            self.schedule(self.margin_after(deadline), Ev::Audit(id));
        }
        ExecutionContext::new(mode, id, self.now, deadline).expect("record timeout is positive")
    }

    fn margin_after(&self, deadline: Nanos) -> Nanos {
        deadline + self.cfg.record_timeout.mul_f64(self.ec.deadline_margin)
    }

    fn new_attempt(&mut self, q: usize, purpose: Purpose) -> AttemptId {
        let id = self.id();
        self.attempts.insert(
            id,
            Attempt {
                query: q,
                purpose,
                started: self.now,
                timed_out: BTreeSet::new(),
                execs: BTreeSet::new(),
                live_reexec: 0,
                done: false,
            },
        );
        id
    }

    fn arm_expiry(&mut self, component: usize, deadline: Nanos) {
        if self.mode.node_local_timeouts() {
            self.schedule(deadline, Ev::Expire(component));
        }
    }

    fn broadcast(&mut self, q: usize, ctx: &ExecutionContext, mode: ControlMode) {
        let msg = ControlMessage {
            context_id: ctx.context_id(),
            mode,
            record_deadline: ctx.record_deadline(),
        };
        let front = self.svc.fronts()[0];
        for c in 0..self.nodes.len() {
            if c != front {
                self.send_control(q, c, &msg);
            }
        }
    }

    fn send_control(&mut self, q: usize, dest: usize, msg: &ControlMessage) {
        self.queries[q].controls += 1;
        let endpoint = self.svc.component(dest).endpoint.clone();
        if self.transport.send_datagram(&endpoint, &msg.encode()) {
            self.schedule(self.now + self.ec.datagram_latency, Ev::Datagram(dest));
        }
    }

    // ---- executions ----

    fn start_exec(
        &mut self,
        attempt: AttemptId,
        component: usize,
        ctx: ExecutionContext,
        mature: bool,
        tagged: bool,
        parent: Option<ConnectionId>,
    ) -> ExecId {
        let id = self.id();
        let spec = self.svc.component(component);
        let recording = parent.is_some_and(|p| self.nodes[component].interposer.is_recording(p));
        let (state, kind, duration) = match &spec.work {
            Work::Leaf(_) => {
                let q = self.attempts[&attempt].query;
                let mut d = self.svc.leaf_time(component, &self.queries[q].query.params);
                if recording {
                    d += Nanos(self.ec.record_cost.0 * 2);
                }
                (ExecState::Leaf, JobKind::Leaf, d)
            }
            Work::ScatterGather { pre_cost, .. } => (ExecState::Pre, JobKind::Pre, *pre_cost),
        };
        let reexec = spec.reexecuted();
        self.execs.insert(
            id,
            Exec {
                attempt,
                component,
                ctx,
                mature,
                tagged,
                parent,
                state,
                job: None,
                children: Vec::new(),
                outstanding: 0,
                recording,
            },
        );
        if let Some(a) = self.attempts.get_mut(&attempt) {
            a.execs.insert(id);
            if reexec {
                a.live_reexec += 1;
            }
        }
        let job = self.enqueue(component, Some(id), kind, duration);
        if let Some(e) = self.execs.get_mut(&id) {
            if e.job.is_none() && self.jobs.contains_key(&job) {
                e.job = Some(job);
            }
        }
        id
    }

    fn end_exec(&mut self, x: ExecId) -> Option<Exec> {
        let e = self.execs.remove(&x)?;
        if let Some(a) = self.attempts.get_mut(&e.attempt) {
            a.execs.remove(&x);
            if self.svc.component(e.component).reexecuted() {
                a.live_reexec -= 1;
            }
        }
        let q = self.attempts.get(&e.attempt).map(|a| a.query);
        if let Some(q) = q {
            self.check_record_done(q);
        }
        Some(e)
    }

    fn timeout_factor(&self) -> f64 {
        if self.active_toggles > 0 {
            self.ec.toggle_factor
        } else {
            1.0
        }
    }

    fn fan_out(&mut self, x: ExecId) {
        let (component, ctx, mature, tagged, attempt) = {
            let e = &self.execs[&x];
            (e.component, e.ctx, e.mature, e.tagged, e.attempt)
        };
        let Work::ScatterGather { children, timeouts, .. } = self.svc.component(component).work.clone() else {
            return;
        };
        let q = self.attempts[&attempt].query;
        let params = self.queries[q].query.params.clone();
        // Memoized components never time out while recording.
        let no_timeouts =
            mature || (ctx.mode() == Mode::Record && self.svc.component(component).memoize && self.mode.memoizes());
        let factor = self.timeout_factor();
        let mut deadlines = BTreeSet::new();
        let mut list = Vec::with_capacity(children.len());
        for (i, &child) in children.iter().enumerate() {
            let deadline = if no_timeouts {
                None
            } else {
                timeouts[i].map(|t| self.now + t.mul_f64(factor))
            };
            if let Some(d) = deadline {
                deadlines.insert(d);
            }
            list.push(Child {
                component: child,
                conn: None,
                data: Vec::new(),
                reply: None,
                deadline,
                done: false,
            });
        }
        {
            let e = self.execs.get_mut(&x).expect("exec");
            e.outstanding = list.len();
            e.children = list;
            e.state = ExecState::Waiting;
        }
        for d in deadlines {
            self.schedule(d, Ev::Timeout(x));
        }
        for (i, &child) in children.iter().enumerate() {
            self.call_child(x, i, child, ctx, mature, tagged, &params, q);
        }
        if self
            .execs
            .get(&x)
            .is_some_and(|e| e.outstanding == 0 && e.state == ExecState::Waiting)
        {
            self.begin_merge(x);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn call_child(
        &mut self,
        x: ExecId,
        i: usize,
        child: usize,
        ctx: ExecutionContext,
        mature: bool,
        tagged: bool,
        params: &[u8],
        q: usize,
    ) {
        let attempt = self.execs[&x].attempt;
        let component = self.execs[&x].component;
        let child_spec = self.svc.component(child);
        let child_ep = child_spec.endpoint.clone();
        let memoized_child = child_spec.memoize && self.mode.memoizes();
        if !ctx.is_normal() {
            self.queries[q].contacted.insert(child);
        }
        if ctx.mode() == Mode::Replay && memoized_child {
            let lookup = if self.ec.replay_from_cache {
                self.nodes[component]
                    .interposer
                    .replay_lookup(&child_ep, params, &ctx, &self.cache, self.now)
            } else {
                ReplayLookup::Miss
            };
            match lookup {
                ReplayLookup::Hit(frames) => {
                    self.stats.replay_hits += 1;
                    self.schedule(
                        self.now + self.ec.cache_latency,
                        Ev::CacheReply {
                            exec: x,
                            child: i,
                            frames,
                        },
                    );
                }
                ReplayLookup::Miss => {
                    self.stats.replay_misses += 1;
                    self.stats.shadow_calls += 1;
                    self.open_call(x, i, child, ExecutionContext::NORMAL, attempt, true, false, params);
                }
            }
            return;
        }
        if !ctx.is_normal() && self.mode.uses_datagrams() && !self.mode.broadcasts() {
            if let Some(msg) = self.nodes[component]
                .interposer
                .propagate_context(&child_ep, &ctx, self.now)
            {
                self.send_control(q, child, &msg);
            }
        }
        if ctx.mode() == Mode::Record && memoized_child && self.svc.component(component).reexecuted() {
            let key = CacheKey::derive(ctx.context_id(), &child_ep, params);
            self.queries[q].pending_keys.insert(key);
            self.key_owner.insert(key, q);
        }
        self.open_call(x, i, child, ctx, attempt, mature, tagged, params);
    }

    #[allow(clippy::too_many_arguments)]
    fn open_call(
        &mut self,
        x: ExecId,
        i: usize,
        child: usize,
        ctx: ExecutionContext,
        attempt: AttemptId,
        mature: bool,
        tagged: bool,
        params: &[u8],
    ) {
        let component = self.execs[&x].component;
        let caller = self.svc.component(component).endpoint.clone();
        let callee = self.svc.component(child).endpoint.clone();
        let conn = self
            .transport
            .open_connection(&caller, &callee, ctx)
            .expect("service endpoints are registered");
        let id = conn.connection_id;
        self.meta.insert(
            id,
            CallMeta {
                attempt,
                mature,
                tagged,
            },
        );
        self.caller_side.insert(id, (x, i));
        if let Some(e) = self.execs.get_mut(&x) {
            e.children[i].conn = Some(id);
        }
        let frame = Frame::data(params.to_vec());
        self.trace_wire(id, 0, &frame);
        self.transport
            .send_to_callee(id, frame)
            .expect("fresh connection is open");
        self.schedule(self.now + self.ec.network_latency, Ev::ToCallee(id));
    }

    fn trace_wire(&mut self, conn: ConnectionId, dir: u8, frame: &Frame) {
        self.wire.update(&self.now.0.to_be_bytes());
        self.wire.update(&conn.0.to_be_bytes());
        self.wire.update(&[dir]);
        self.wire.update(&frame.encode());
    }

    fn on_to_callee(&mut self, conn_id: ConnectionId) {
        let Some(frame) = self.transport.recv_at_callee(conn_id) else {
            return;
        };
        let Some(conn) = self.transport.connection(conn_id).cloned() else {
            return;
        };
        if conn.state != ConnectionState::Open {
            return;
        }
        let Some(&callee) = self.endpoint_index.get(&conn.callee) else {
            return;
        };
        let Some(meta) = self.meta.get(&conn_id).copied() else {
            return;
        };
        let Some(q) = self.attempts.get(&meta.attempt).map(|a| a.query) else {
            return;
        };
        let opened = conn.opened_under;
        if meta.tagged && !opened.is_normal() {
            let out = self.nodes[callee].interposer.begin_context(&opened, self.now);
            if out == ControlOutcome::Installed {
                self.arm_expiry(callee, opened.record_deadline());
            }
        }
        let inbound = self.nodes[callee]
            .interposer
            .on_invocation(&conn, &frame.payload, self.now);
        let ctx = match inbound {
            Inbound::Normal => ExecutionContext::NORMAL,
            Inbound::Participate { mode, context_id, .. } => {
                let entry = self.nodes[callee].interposer.table().get(context_id, self.now).cloned();
                match entry {
                    Some(en) if mode != Mode::Normal => ExecutionContext::new(
                        mode,
                        context_id,
                        en.installed_at.min(en.record_deadline - Nanos(1)),
                        en.record_deadline,
                    )
                    .unwrap_or(ExecutionContext::NORMAL),
                    _ => ExecutionContext::NORMAL,
                }
            }
            Inbound::MissingContext(_) => ExecutionContext::NORMAL,
        };
        if !opened.is_normal() && ctx.mode() != opened.mode() {
            self.queries[q].context_lost = true;
        }
        let mature = meta.mature || ctx.mode() == Mode::Replay;
        let x = self.start_exec(meta.attempt, callee, ctx, mature, meta.tagged, Some(conn_id));
        self.callee_exec.insert(conn_id, x);
    }

    fn on_timeout(&mut self, x: ExecId) {
        let expired: Vec<usize> = match self.execs.get(&x) {
            Some(e) if e.state == ExecState::Waiting => e
                .children
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.done && c.deadline.is_some_and(|d| d <= self.now))
                .map(|(i, _)| i)
                .collect(),
            _ => return,
        };
        if expired.is_empty() {
            return;
        }
        let attempt = self.execs[&x].attempt;
        for i in expired {
            let (component, conn) = {
                let e = self.execs.get_mut(&x).expect("exec");
                let c = &mut e.children[i];
                c.done = true;
                e.outstanding -= 1;
                (c.component, c.conn)
            };
            if let Some(a) = self.attempts.get_mut(&attempt) {
                a.timed_out.insert(self.svc.component(component).id);
            }
            if let Some(conn) = conn {
                self.terminate_call(conn);
            }
        }
        if self.execs[&x].outstanding == 0 {
            self.begin_merge(x);
        }
    }

    /// The caller gives up on a call. A recording callee keeps working; anyone
    /// else receives the termination and cancels.
    fn terminate_call(&mut self, conn_id: ConnectionId) {
        self.caller_side.remove(&conn_id);
        let Some(callee) = self
            .transport
            .connection(conn_id)
            .and_then(|c| self.endpoint_index.get(&c.callee).copied())
        else {
            return;
        };
        let end = Frame::end_of_call();
        self.trace_wire(conn_id, 0, &end);
        let Some(conn) = self.transport.connection_mut(conn_id) else {
            return;
        };
        if conn.state != ConnectionState::Open {
            return;
        }
        match self.nodes[callee].interposer.extend_timeout(conn, &end, self.now) {
            TerminationOutcome::Blocked => self.stats.terminations_blocked += 1,
            TerminationOutcome::Delivered => {
                self.schedule(self.now + self.ec.network_latency, Ev::Terminate(conn_id));
            }
            TerminationOutcome::NotATermination => {}
        }
    }

    fn on_terminate(&mut self, conn_id: ConnectionId) {
        if let Some(x) = self.callee_exec.remove(&conn_id) {
            self.cancel_exec(x);
        }
        self.close_connection(conn_id);
    }

    fn close_connection(&mut self, conn_id: ConnectionId) {
        if let Some(conn) = self.transport.connection(conn_id) {
            if let Some(&callee) = self.endpoint_index.get(&conn.callee) {
                self.nodes[callee].interposer.connection_closed(conn_id);
            }
        }
        self.transport.release(conn_id);
        self.meta.remove(&conn_id);
        self.caller_side.remove(&conn_id);
    }

    fn cancel_exec(&mut self, x: ExecId) {
        let Some(e) = self.execs.get(&x) else { return };
        let job = e.job;
        let open: Vec<ConnectionId> = e.children.iter().filter(|c| !c.done).filter_map(|c| c.conn).collect();
        if let Some(j) = job {
            self.cancel_job(j);
        }
        for c in open {
            self.terminate_call(c);
        }
        if let Some(e) = self.end_exec(x) {
            if let Some(p) = e.parent {
                self.callee_exec.remove(&p);
            }
        }
    }

    fn on_to_caller(&mut self, conn_id: ConnectionId) {
        let Some(frame) = self.transport.recv_at_caller(conn_id) else {
            return;
        };
        let Some(&(x, i)) = self.caller_side.get(&conn_id) else {
            return;
        };
        let end = frame.is_end();
        self.on_child_frame(x, i, frame);
        if end {
            self.close_connection(conn_id);
        }
    }

    fn on_child_frame(&mut self, x: ExecId, i: usize, frame: Frame) {
        let Some(e) = self.execs.get_mut(&x) else { return };
        if e.state != ExecState::Waiting {
            return;
        }
        let c = &mut e.children[i];
        if c.done {
            return;
        }
        if frame.is_end() {
            c.done = true;
            c.reply = Some(std::mem::take(&mut c.data));
            e.outstanding -= 1;
            if e.outstanding == 0 {
                self.begin_merge(x);
            }
        } else {
            c.data = frame.payload;
        }
    }

    fn begin_merge(&mut self, x: ExecId) {
        let (component, recording) = {
            let e = self.execs.get_mut(&x).expect("exec");
            e.state = ExecState::Merging;
            (e.component, e.recording)
        };
        let Work::ScatterGather { merge_cost, .. } = self.svc.component(component).work else {
            return;
        };
        let cost = if recording {
            merge_cost + Nanos(self.ec.record_cost.0 * 2)
        } else {
            merge_cost
        };
        let job = self.enqueue(component, Some(x), JobKind::Merge, cost);
        if let Some(e) = self.execs.get_mut(&x) {
            if self.jobs.contains_key(&job) {
                e.job = Some(job);
            }
        }
    }

    fn complete_merge(&mut self, x: ExecId) {
        let (component, replies, parent) = {
            let e = &self.execs[&x];
            (
                e.component,
                e.children.iter().map(|c| c.reply.clone()).collect::<Vec<_>>(),
                e.parent,
            )
        };
        let payload = self.svc.merge(component, &replies);
        if parent.is_some() {
            self.reply(x, payload);
        } else {
            let attempt = self.execs[&x].attempt;
            self.end_exec(x);
            self.finish_attempt(attempt, payload);
        }
    }

    /// Sends a reply and EndOfCall on the exec's parent connection, recording
    /// both when the connection is recording.
    fn reply(&mut self, x: ExecId, payload: Vec<u8>) {
        let Some(e) = self.end_exec(x) else { return };
        let Some(conn_id) = e.parent else { return };
        self.callee_exec.remove(&conn_id);
        let callee = e.component;
        let key = self.nodes[callee].interposer.recording_key(conn_id);
        for frame in [Frame::data(payload), Frame::end_of_call()] {
            match self.nodes[callee]
                .interposer
                .record_reply(conn_id, &frame, &self.cache, self.now)
            {
                Ok(RecordOutcome::Recorded { complete }) => {
                    self.stats.cache_peak_bytes = self.stats.cache_peak_bytes.max(self.cache.used_bytes());
                    if let Some(key) = key {
                        self.on_recorded(key, complete);
                    }
                }
                Ok(RecordOutcome::NotRecorded) => {}
                Err(err) => {
                    let ctx = match err {
                        crate::cache::CacheError::CapacityExceeded(c)
                        | crate::cache::CacheError::ContextLimitExceeded(c) => c,
                    };
                    if let Some(&q) = self.ctx_query.get(&ctx) {
                        self.queries[q].cache_failed = true;
                    }
                }
            }
            self.trace_wire(conn_id, 1, &frame);
            match self.transport.send_to_caller(conn_id, frame) {
                Ok(Delivery::Queued) => self.schedule(self.now + self.ec.network_latency, Ev::ToCaller(conn_id)),
                Ok(Delivery::Withheld) | Err(_) => {}
            }
        }
        let state = self.transport.connection(conn_id).map(|c| c.state);
        if state != Some(ConnectionState::Open) {
            self.close_connection(conn_id);
        }
    }

    fn on_recorded(&mut self, key: CacheKey, complete: bool) {
        let Some(&q) = self.key_owner.get(&key) else { return };
        if self.queries[q].state != MatureState::Recording {
            return;
        }
        self.queries[q].last_write = self.now;
        if complete {
            self.queries[q].pending_keys.remove(&key);
            self.key_owner.remove(&key);
            self.check_record_done(q);
        } else if let Some(w) = self.ec.settle_window {
            self.schedule(self.now + w, Ev::Settle(q));
        }
    }

    fn check_record_done(&mut self, q: usize) {
        let qs = &self.queries[q];
        if qs.state != MatureState::Recording || !qs.online_done || !qs.pending_keys.is_empty() {
            return;
        }
        let live = qs
            .online_attempt
            .and_then(|a| self.attempts.get(&a))
            .map_or(0, |a| a.live_reexec);
        if live == 0 {
            self.on_ready(q, false);
        }
    }

    fn on_settle(&mut self, q: usize) {
        let Some(w) = self.ec.settle_window else { return };
        let qs = &self.queries[q];
        if qs.state == MatureState::Recording && qs.online_done && self.now >= qs.last_write + w {
            self.on_ready(q, false);
        }
    }

    /// Record phase over: either everything completed, the settle window
    /// elapsed, or the deadline (plus margin) passed.
    fn on_ready(&mut self, q: usize, deadline: bool) {
        if self.queries[q].state != MatureState::Recording {
            return;
        }
        if deadline && !self.queries[q].online_done {
            return self.fail_mature(q, Failure::Incomplete);
        }
        let qs = &self.queries[q];
        if qs.cache_failed {
            return self.fail_mature(q, Failure::Cache);
        }
        if qs.context_lost {
            return self.fail_mature(q, Failure::ContextLost);
        }
        if deadline && !qs.pending_keys.is_empty() {
            return self.fail_mature(q, Failure::Incomplete);
        }
        self.start_replay(q);
    }

    fn start_replay(&mut self, q: usize) {
        let ctx = self.queries[q].ctx.expect("recording query has a context");
        let replay = ctx
            .to_replay(self.now, self.now + self.cfg.record_timeout)
            .expect("replay deadline follows now");
        let front = self.svc.fronts()[0];
        {
            let qs = &mut self.queries[q];
            qs.state = MatureState::Replaying;
            qs.replay_ctx = Some(replay);
            qs.record_done_at = Some(self.now);
            qs.replay_started = Some(self.now);
        }
        self.nodes[front].interposer.begin_context(&replay, self.now);
        self.arm_expiry(front, replay.record_deadline());
        if self.mode.node_local_timeouts() {
            self.schedule(
                self.margin_after(replay.record_deadline()),
                Ev::Audit(replay.context_id()),
            );
        }
        self.schedule(self.margin_after(replay.record_deadline()), Ev::MatureDeadline(q));
        if self.mode.broadcasts() {
            self.broadcast(q, &replay, ControlMode::Replay);
        }
        let attempt = self.new_attempt(q, Purpose::Replay);
        self.queries[q].mature_attempt = Some(attempt);
        let tagged = self.mode.tags_payload();
        self.start_exec(attempt, front, replay, true, tagged, None);
    }

    fn start_reexecution(&mut self, q: usize) {
        let front = self.svc.fronts()[0];
        let (purpose, mature) = match self.mode {
            DesignMode::TimeoutToggling => {
                self.active_toggles += 1;
                (Purpose::Toggled, false)
            }
            _ => (Purpose::Tagged, true),
        };
        let attempt = self.new_attempt(q, purpose);
        self.queries[q].mature_attempt = Some(attempt);
        self.queries[q].replay_started = Some(self.now);
        self.schedule(self.now + self.cfg.record_timeout, Ev::MatureDeadline(q));
        self.start_exec(attempt, front, ExecutionContext::NORMAL, mature, false, None);
    }

    fn on_mature_deadline(&mut self, q: usize) {
        if matches!(self.queries[q].state, MatureState::Replaying | MatureState::Running) {
            if let Some(a) = self.queries[q].mature_attempt {
                self.abandon_attempt(a);
            }
            self.fail_mature(q, Failure::Incomplete);
        }
    }

    fn abandon_attempt(&mut self, a: AttemptId) {
        let Some(att) = self.attempts.get_mut(&a) else { return };
        if att.done {
            return;
        }
        att.done = true;
        if att.purpose == Purpose::Toggled {
            self.active_toggles -= 1;
        }
        let roots: Vec<ExecId> = att.execs.iter().copied().collect();
        for x in roots {
            if self.execs.get(&x).is_some_and(|e| e.parent.is_none()) {
                self.cancel_exec(x);
            }
        }
    }

    fn finish_attempt(&mut self, a: AttemptId, payload: Vec<u8>) {
        let Some(att) = self.attempts.get_mut(&a) else { return };
        if att.done {
            return;
        }
        att.done = true;
        let (q, purpose, started, timed_out) = (att.query, att.purpose, att.started, att.timed_out.clone());
        match purpose {
            Purpose::Online => self.finish_online(q, payload, timed_out),
            Purpose::Replay | Purpose::Tagged => {
                let _ = started;
                self.finish_mature(q, &payload);
            }
            Purpose::Toggled => {
                self.active_toggles -= 1;
                if timed_out.is_empty() {
                    self.finish_mature(q, &payload);
                } else {
                    self.fail_mature(q, Failure::Timeout);
                }
            }
        }
        let leftover = self.attempts.get(&a).map_or(0, |att| att.execs.len());
        if leftover == 0 && purpose != Purpose::Online {
            self.attempts.remove(&a);
        }
    }

    fn finish_online(&mut self, q: usize, payload: Vec<u8>, timed_out: BTreeSet<ComponentId>) {
        let had_timeout = !timed_out.is_empty();
        let answer = answer_from_payload(&payload, self.now, AnswerKind::Online, timed_out).unwrap_or_else(|_| {
            Answer::new(Vec::new(), self.now, AnswerKind::Online, BTreeSet::new()).expect("empty answer")
        });
        let reference = Answer::new(
            self.svc.reference(&self.queries[q].query.params),
            self.now,
            AnswerKind::Mature,
            BTreeSet::new(),
        )
        .expect("reference ids are unique");
        let oracle = (self.similarity)(&answer, &reference);
        let priority = self.queries[q].query.priority;
        {
            let qs = &mut self.queries[q];
            qs.online_latency = Some(self.now - qs.query.arrival_time);
            qs.online_answer = Some(answer);
            qs.oracle = Some(oracle);
            qs.online_done = true;
        }
        if priority == Priority::High {
            self.controller.observe_online(had_timeout);
        }
        match self.queries[q].state {
            MatureState::Recording => self.check_record_done(q),
            MatureState::Running => self.start_reexecution(q),
            _ => {}
        }
    }

    fn finish_mature(&mut self, q: usize, payload: &[u8]) {
        let mature = match answer_from_payload(payload, self.now, AnswerKind::Mature, BTreeSet::new()) {
            Ok(a) => a,
            Err(_) => return self.fail_mature(q, Failure::Incomplete),
        };
        if self.queries[q].context_lost {
            return self.fail_mature(q, Failure::ContextLost);
        }
        let online = self.queries[q]
            .online_answer
            .clone()
            .expect("online answer precedes mature");
        let score = (self.similarity)(&online, &mature).clamp(0.0, 1.0);
        let qs = &mut self.queries[q];
        let latency = self.now - qs.query.arrival_time;
        qs.mature = MatureOutcome::Success(latency);
        qs.quality = Some(score);
        qs.state = MatureState::Done;
        if let (Some(done), Some(start)) = (qs.record_done_at, qs.replay_started) {
            self.phases.push(PhaseTiming {
                query_id: qs.query.query_id,
                record: done - qs.query.arrival_time,
                replay: self.now - start,
            });
        }
        self.quality_rows.push(QualityRow {
            completed_at_ns: self.now.0,
            query_id: qs.query.query_id,
            score: Some(score),
            online_size: online.len(),
            mature_size: mature.len(),
            mature_failed_flag: 0,
        });
        qs.mature_answer = Some(mature);
        let priority = qs.query.priority;
        self.stats.mature_ok += 1;
        if priority == Priority::High || !self.ec.sample_high_only {
            self.controller.observe_quality(score);
        }
        self.release_context(q);
    }

    fn fail_mature(&mut self, q: usize, why: Failure) {
        let qs = &mut self.queries[q];
        if qs.state == MatureState::Done {
            return;
        }
        qs.state = MatureState::Done;
        qs.mature = MatureOutcome::Failed;
        match why {
            Failure::ContextLost => self.stats.failed_context_lost += 1,
            Failure::Incomplete => self.stats.failed_incomplete += 1,
            Failure::Cache => self.stats.failed_cache += 1,
            Failure::Timeout => self.stats.failed_timeout += 1,
        }
        self.quality_rows.push(QualityRow {
            completed_at_ns: self.now.0,
            query_id: qs.query.query_id,
            score: None,
            online_size: qs.online_answer.as_ref().map_or(0, |a| a.len()),
            mature_size: 0,
            mature_failed_flag: 1,
        });
        self.release_context(q);
    }

    /// The front leaves the context; without node-local timeouts everybody is
    /// told to reset.
    fn release_context(&mut self, q: usize) {
        for key in std::mem::take(&mut self.queries[q].pending_keys) {
            self.key_owner.remove(&key);
        }
        let front = self.svc.fronts()[0];
        let ctx = self.queries[q].replay_ctx.or(self.queries[q].ctx);
        let Some(ctx) = ctx else { return };
        let reset = ControlMessage {
            context_id: ctx.context_id(),
            mode: ControlMode::Reset,
            record_deadline: ctx.record_deadline(),
        };
        self.nodes[front].interposer.handle_control(&reset, self.now);
        if self.mode.broadcasts() {
            self.broadcast(q, &ctx, ControlMode::Reset);
        }
    }

    // ---- control plane ----

    fn on_datagram(&mut self, c: usize) {
        let endpoint = self.svc.component(c).endpoint.clone();
        let Some(bytes) = self.transport.recv_datagram(&endpoint) else {
            return;
        };
        let Ok(msg) = ControlMessage::decode(&bytes) else {
            return;
        };
        if msg.mode == ControlMode::Reset {
            for conn in self.nodes[c].interposer.recordings_of(msg.context_id) {
                self.abandon_recording(conn);
            }
        }
        let out = self.nodes[c].interposer.handle_control(&msg, self.now);
        if matches!(out, ControlOutcome::Installed | ControlOutcome::Updated) {
            self.arm_expiry(c, msg.record_deadline);
        }
        self.stats.control_jobs += 1;
        self.enqueue(c, None, JobKind::Control, self.ec.control_cost);
    }

    /// Cancels work that only a recording was waiting for.
    fn abandon_recording(&mut self, conn_id: ConnectionId) {
        let orphaned = self
            .transport
            .connection(conn_id)
            .is_some_and(|c| c.state == ConnectionState::CallerTerminated);
        if orphaned {
            if let Some(x) = self.callee_exec.remove(&conn_id) {
                self.cancel_exec(x);
            }
            self.close_connection(conn_id);
        }
    }

    fn on_expire(&mut self, c: usize) {
        let expired = self.nodes[c].interposer.expire(self.now);
        for ex in expired {
            for conn in ex.incomplete {
                self.abandon_recording(conn);
            }
        }
    }

    fn on_audit(&mut self, ctx: ContextId) {
        for n in &self.nodes {
            if n.interposer.table().ids().any(|id| id == ctx) {
                self.stats.audit_violations += 1;
            }
        }
    }

    fn finish(mut self) -> RunOutcome {
        let end = self.now;
        self.stats.end_time = end;
        self.stats.utilization = self
            .nodes
            .iter()
            .map(|n| {
                if end == Nanos::ZERO {
                    0.0
                } else {
                    n.busy_time.as_secs_f64() / (n.workers as f64 * end.as_secs_f64())
                }
            })
            .collect();
        self.stats.residual_contexts = self.nodes.iter().map(|n| n.interposer.table().len() as u64).sum();
        let t = self.transport.stats();
        self.stats.datagrams_sent = t.datagrams_sent;
        self.stats.datagrams_dropped = t.datagrams_dropped;
        self.stats.cache = self.cache.stats();
        self.stats.wire_digest = self.wire.digest128();
        let mut records = Vec::with_capacity(self.queries.len());
        let mut oracle = Vec::with_capacity(self.queries.len());
        let mut online_answers = Vec::with_capacity(self.queries.len());
        let mut mature_answers = Vec::with_capacity(self.queries.len());
        let mut control_usage = Vec::new();
        for qs in self.queries {
            let timed_out_components: Vec<ComponentId> = qs
                .online_answer
                .as_ref()
                .map(|a| a.timed_out_components().iter().copied().collect())
                .unwrap_or_default();
            if qs.query.sampled() {
                control_usage.push((qs.controls, qs.contacted.len()));
            }
            let mature = if qs.query.sampled() && qs.mature == MatureOutcome::NotSampled {
                MatureOutcome::Failed
            } else {
                qs.mature
            };
            records.push(RunRecord {
                query_id: qs.query.query_id,
                priority: qs.query.priority,
                arrival: qs.query.arrival_time,
                admitted: qs.admitted,
                sampled: qs.query.sampled(),
                online_latency: qs.online_latency,
                mature,
                timed_out_components,
                quality: qs.quality,
            });
            oracle.push(qs.oracle);
            online_answers.push(qs.online_answer);
            mature_answers.push(qs.mature_answer);
        }
        self.quality_rows.sort_by_key(|r| (r.completed_at_ns, r.query_id));
        RunOutcome {
            log: RunLog::new(records),
            quality_rows: self.quality_rows,
            controller_rows: self.controller.rows().to_vec(),
            oracle_quality: oracle,
            online_answers,
            mature_answers,
            phases: self.phases,
            control_usage,
            stats: self.stats,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Failure {
    ContextLost,
    Incomplete,
    Cache,
    Timeout,
}

/// Reference answer items for a query, for callers that want to compare directly.
pub fn reference_items(service: &Service, query: &Query) -> Vec<Item> {
    service.reference(&query.params)
}

/// Utilization-free helper used by tests: which connection a reply belongs to.
#[doc(hidden)]
pub fn connection_of(conn: &Connection) -> ConnectionId {
    conn.connection_id
}
