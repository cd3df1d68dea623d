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

//! The interposition layer that sits in front of every component.
//!
//! It tracks execution contexts without help from the application: contexts
//! arrive through control datagrams, replies are recorded only on the connection
//! that carried the invocation, caller terminations are withheld from callees
//! that are recording, and replayed invocations are answered from the cache.

use std::collections::HashMap;

use super::context::{ContextTable, ControlOutcome};
use super::control::{ControlMessage, ControlMode};
use super::frame::{Frame, TerminationMatcher};
use super::key::CacheKey;
use super::{Connection, ConnectionId, ConnectionState, Endpoint};
use crate::cache::{CacheError, MemoCache};
use crate::model::{ContextId, ExecutionContext, Mode};
use crate::time::Nanos;

#[derive(Clone, Debug)]
pub struct InterposerConfig {
    /// Whether this component's replies are memoized (back-end role).
    pub memoize: bool,
    /// Contexts expire at their record deadline without any message.
    pub node_local_timeouts: bool,
    pub propagate_timeout: Nanos,
    pub termination: TerminationMatcher,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Recording {
    context_id: ContextId,
    key: CacheKey,
    complete: bool,
}

/// How the callee should treat an inbound invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Inbound {
    Normal,
    /// The context is installed here; replies go to the cache when `recording` is set.
    Participate {
        mode: Mode,
        context_id: ContextId,
        recording: Option<CacheKey>,
    },
    /// The caller ran under a context this component never received.
    MissingContext(ContextId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordOutcome {
    NotRecorded,
    Recorded { complete: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminationOutcome {
    /// Withheld from the callee; the caller sees a successful termination.
    Blocked,
    Delivered,
    NotATermination,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayLookup {
    Hit(Vec<Frame>),
    Miss,
}

/// A context that expired locally, with the recordings it cut short.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expired {
    pub context_id: ContextId,
    pub incomplete: Vec<ConnectionId>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InterposerStats {
    pub controls_received: u64,
    pub controls_sent: u64,
    pub replies_recorded: u64,
    pub terminations_blocked: u64,
    pub replay_hits: u64,
    pub replay_misses: u64,
    pub missing_contexts: u64,
}

#[derive(Debug)]
pub struct Interposer {
    endpoint: Endpoint,
    config: InterposerConfig,
    table: ContextTable,
    recordings: HashMap<ConnectionId, Recording>,
    stats: InterposerStats,
}

impl Interposer {
    pub fn new(endpoint: Endpoint, config: InterposerConfig) -> Self {
        let table = ContextTable::new(config.propagate_timeout, config.node_local_timeouts);
        Self {
            endpoint,
            config,
            table,
            recordings: HashMap::new(),
            stats: InterposerStats::default(),
        }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn table(&self) -> &ContextTable {
        &self.table
    }

    pub fn stats(&self) -> InterposerStats {
        self.stats
    }

    pub fn memoizes(&self) -> bool {
        self.config.memoize
    }

    pub fn set_memoize(&mut self, memoize: bool) {
        self.config.memoize = memoize;
    }

    /// The originating component enters a context for a query it accepted.
    pub fn begin_context(&mut self, ctx: &ExecutionContext, now: Nanos) -> ControlOutcome {
        self.table
            .install(ctx.context_id(), ctx.mode(), ctx.record_deadline(), now)
    }

    pub fn context_mode(&self, id: ContextId, now: Nanos) -> Option<Mode> {
        self.table.get(id, now).map(|e| e.mode)
    }

    /// Called before sending to `dest` under `ctx`. Returns the control message to
    /// send when `dest` has not been contacted under this context and the
    /// propagation window is still open.
    pub fn propagate_context(&mut self, dest: &Endpoint, ctx: &ExecutionContext, now: Nanos) -> Option<ControlMessage> {
        let mode = match ctx.mode() {
            Mode::Record => ControlMode::Record,
            Mode::Replay => ControlMode::Replay,
            Mode::Normal => return None,
        };
        if !self.table.propagate(ctx.context_id(), dest, now) {
            return None;
        }
        self.stats.controls_sent += 1;
        Some(ControlMessage {
            context_id: ctx.context_id(),
            mode,
            record_deadline: ctx.record_deadline(),
        })
    }

    /// Applies a received control message. Duplicates are idempotent; messages
    /// past their deadline are ignored.
    pub fn handle_control(&mut self, msg: &ControlMessage, now: Nanos) -> ControlOutcome {
        self.stats.controls_received += 1;
        let mode = match msg.mode {
            ControlMode::Record => Mode::Record,
            ControlMode::Replay => Mode::Replay,
            ControlMode::Reset => {
                self.table.remove(msg.context_id);
                self.recordings.retain(|_, r| r.context_id != msg.context_id);
                return ControlOutcome::Reset;
            }
        };
        self.table.install(msg.context_id, mode, msg.record_deadline, now)
    }

    /// Classifies an invocation arriving at this (callee) component. A new
    /// invocation on a connection that is already recording splits the value:
    /// later replies go under the key of the new invocation.
    pub fn on_invocation(&mut self, conn: &Connection, invocation: &[u8], now: Nanos) -> Inbound {
        let ctx = conn.opened_under;
        if ctx.is_normal() {
            self.recordings.remove(&conn.connection_id);
            return Inbound::Normal;
        }
        let id = ctx.context_id();
        let Some(entry) = self.table.get(id, now) else {
            self.stats.missing_contexts += 1;
            return Inbound::MissingContext(id);
        };
        let mode = entry.mode;
        let recording = (mode == Mode::Record && self.config.memoize).then(|| {
            let key = CacheKey::derive(id, &self.endpoint, invocation);
            self.recordings.insert(
                conn.connection_id,
                Recording {
                    context_id: id,
                    key,
                    complete: false,
                },
            );
            key
        });
        Inbound::Participate {
            mode,
            context_id: id,
            recording,
        }
    }

    pub fn is_recording(&self, conn: ConnectionId) -> bool {
        self.recordings.get(&conn).is_some_and(|r| !r.complete)
    }

    pub fn recording_key(&self, conn: ConnectionId) -> Option<CacheKey> {
        self.recordings.get(&conn).map(|r| r.key)
    }

    /// Records one callee-to-caller frame if `conn` is recording. Frames are
    /// stored verbatim in wire form; an EndOfCall completes the entry.
    pub fn record_reply(
        &mut self,
        conn: ConnectionId,
        frame: &Frame,
        cache: &MemoCache,
        now: Nanos,
    ) -> Result<RecordOutcome, CacheError> {
        let Some(rec) = self.recordings.get(&conn) else {
            return Ok(RecordOutcome::NotRecorded);
        };
        if rec.complete || self.table.get(rec.context_id, now).is_none() {
            return Ok(RecordOutcome::NotRecorded);
        }
        let (key, ctx) = (rec.key, rec.context_id);
        if let Err(e) = cache.put_append(key, ctx, &frame.encode(), now) {
            self.recordings.remove(&conn);
            return Err(e);
        }
        self.stats.replies_recorded += 1;
        let complete = frame.is_end();
        if complete {
            if let Some(r) = self.recordings.get_mut(&conn) {
                r.complete = true;
            }
        }
        Ok(RecordOutcome::Recorded { complete })
    }

    /// Handles a caller-to-callee frame that may be a termination. While the
    /// connection is recording, the termination is withheld from the callee and
    /// the connection moves to `CallerTerminated`.
    pub fn extend_timeout(&mut self, conn: &mut Connection, frame: &Frame, now: Nanos) -> TerminationOutcome {
        if !self.config.termination.is_termination(frame) {
            return TerminationOutcome::NotATermination;
        }
        let recording = self.recordings.get(&conn.connection_id).is_some_and(|r| {
            !r.complete
                && self
                    .table
                    .get(r.context_id, now)
                    .is_some_and(|e| e.mode == Mode::Record)
        });
        if recording {
            conn.state = ConnectionState::CallerTerminated;
            self.stats.terminations_blocked += 1;
            TerminationOutcome::Blocked
        } else {
            conn.state = ConnectionState::Closed;
            TerminationOutcome::Delivered
        }
    }

    /// Looks up the recorded replies for an outgoing invocation under a replay
    /// context. Only complete recordings count as hits.
    pub fn replay_lookup(
        &mut self,
        callee: &Endpoint,
        invocation: &[u8],
        ctx: &ExecutionContext,
        cache: &MemoCache,
        now: Nanos,
    ) -> ReplayLookup {
        if ctx.mode() != Mode::Replay {
            return ReplayLookup::Miss;
        }
        let key = CacheKey::derive(ctx.context_id(), callee, invocation);
        let hit = cache.get_all(key, now).and_then(|raw| {
            let mut frames = Vec::with_capacity(raw.len());
            for bytes in raw {
                frames.push(Frame::decode(&bytes).ok()?.0);
            }
            frames.last().is_some_and(Frame::is_end).then_some(frames)
        });
        match hit {
            Some(frames) => {
                self.stats.replay_hits += 1;
                ReplayLookup::Hit(frames)
            }
            None => {
                self.stats.replay_misses += 1;
                ReplayLookup::Miss
            }
        }
    }

    /// Connections with an unfinished recording under `ctx`, in id order.
    pub fn recordings_of(&self, ctx: ContextId) -> Vec<ConnectionId> {
        let mut out: Vec<ConnectionId> = self
            .recordings
            .iter()
            .filter(|(_, r)| r.context_id == ctx && !r.complete)
            .map(|(c, _)| *c)
            .collect();
        out.sort();
        out
    }

    /// Forgets per-connection state once a connection is fully closed.
    pub fn connection_closed(&mut self, conn: ConnectionId) {
        self.recordings.remove(&conn);
    }

    /// Runs the node-local timers: contexts past their record deadline are
    /// dropped along with their recordings.
    pub fn expire(&mut self, now: Nanos) -> Vec<Expired> {
        let gone = self.table.purge(now);
        gone.into_iter()
            .map(|id| {
                let mut incomplete: Vec<ConnectionId> = self
                    .recordings
                    .iter()
                    .filter(|(_, r)| r.context_id == id && !r.complete)
                    .map(|(c, _)| *c)
                    .collect();
                incomplete.sort();
                self.recordings.retain(|_, r| r.context_id != id);
                Expired {
                    context_id: id,
                    incomplete,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::CacheConfig;

    const DEADLINE: Nanos = Nanos::from_secs(15);

    fn shard() -> Interposer {
        Interposer::new(
            Endpoint::new("shard", 3),
            InterposerConfig {
                memoize: true,
                node_local_timeouts: true,
                propagate_timeout: Nanos::from_millis(100),
                termination: TerminationMatcher::default(),
            },
        )
    }

    fn cache() -> MemoCache {
        MemoCache::new(CacheConfig {
            capacity_bytes: 1 << 20,
            ttl: Nanos::from_secs(60),
            per_context_limit: None,
        })
    }

    fn record_ctx(id: u64) -> ExecutionContext {
        ExecutionContext::new(Mode::Record, ContextId(id), Nanos::ZERO, DEADLINE).unwrap()
    }

    fn conn(id: u64, ctx: ExecutionContext) -> Connection {
        Connection {
            connection_id: ConnectionId(id),
            caller: Endpoint::new("front", 80),
            callee: Endpoint::new("shard", 3),
            state: ConnectionState::Open,
            opened_under: ctx,
        }
    }

    fn install(ip: &mut Interposer, id: u64) {
        let msg = ControlMessage {
            context_id: ContextId(id),
            mode: ControlMode::Record,
            record_deadline: DEADLINE,
        };
        assert_eq!(ip.handle_control(&msg, Nanos::ZERO), ControlOutcome::Installed);
    }

    #[test]
    fn records_r0_r1_and_replays_them() {
        let mut ip = shard();
        let c = cache();
        install(&mut ip, 7);
        let ctx = record_ctx(7);
        let mut k = conn(1, ctx);
        assert!(matches!(
            ip.on_invocation(&k, b"q", Nanos(1)),
            Inbound::Participate {
                mode: Mode::Record,
                recording: Some(_),
                ..
            }
        ));
        let r0 = Frame::data(b"r0".to_vec());
        let r1 = Frame::data(b"r1".to_vec());
        ip.record_reply(k.connection_id, &r0, &c, Nanos(2)).unwrap();
        // Front times out after r0; the termination is withheld.
        assert_eq!(
            ip.extend_timeout(&mut k, &Frame::end_of_call(), Nanos(3)),
            TerminationOutcome::Blocked
        );
        assert_eq!(k.state, ConnectionState::CallerTerminated);
        ip.record_reply(k.connection_id, &r1, &c, Nanos(4)).unwrap();
        assert_eq!(
            ip.record_reply(k.connection_id, &Frame::end_of_call(), &c, Nanos(5))
                .unwrap(),
            RecordOutcome::Recorded { complete: true }
        );

        let mut front = shard();
        let replay = ctx.to_replay(Nanos(6), DEADLINE).unwrap();
        match front.replay_lookup(&Endpoint::new("shard", 3), b"q", &replay, &c, Nanos(7)) {
            ReplayLookup::Hit(frames) => assert_eq!(frames, vec![r0, r1, Frame::end_of_call()]),
            ReplayLookup::Miss => panic!("expected hit"),
        }
    }

    #[test]
    fn other_connections_not_recorded() {
        let mut ip = shard();
        let c = cache();
        install(&mut ip, 7);
        let initiating = conn(1, record_ctx(7));
        let other = conn(2, ExecutionContext::NORMAL);
        ip.on_invocation(&initiating, b"q", Nanos(1));
        ip.on_invocation(&other, b"q2", Nanos(1));
        assert_eq!(
            ip.record_reply(other.connection_id, &Frame::data(b"x".to_vec()), &c, Nanos(2))
                .unwrap(),
            RecordOutcome::NotRecorded
        );
        assert!(c.is_empty());
    }

    #[test]
    fn second_invocation_splits_key() {
        let mut ip = shard();
        let c = cache();
        install(&mut ip, 7);
        let k = conn(1, record_ctx(7));
        ip.on_invocation(&k, b"m1", Nanos(1));
        let first = ip.recording_key(k.connection_id).unwrap();
        ip.record_reply(k.connection_id, &Frame::data(b"a".to_vec()), &c, Nanos(2))
            .unwrap();
        ip.on_invocation(&k, b"m2", Nanos(3));
        let second = ip.recording_key(k.connection_id).unwrap();
        assert_ne!(first, second);
        assert_eq!(
            second,
            CacheKey::derive(ContextId(7), &Endpoint::new("shard", 3), b"m2")
        );
        ip.record_reply(k.connection_id, &Frame::data(b"b".to_vec()), &c, Nanos(4))
            .unwrap();
        assert_eq!(c.get_all(first, Nanos(5)).unwrap().len(), 1);
        assert_eq!(c.get_all(second, Nanos(5)).unwrap().len(), 1);
    }

    #[test]
    fn normal_mode_termination_is_delivered() {
        let mut ip = shard();
        let mut k = conn(1, ExecutionContext::NORMAL);
        assert_eq!(ip.on_invocation(&k, b"q", Nanos(1)), Inbound::Normal);
        assert_eq!(
            ip.extend_timeout(&mut k, &Frame::end_of_call(), Nanos(2)),
            TerminationOutcome::Delivered
        );
        assert_eq!(k.state, ConnectionState::Closed);
        assert_eq!(
            ip.extend_timeout(&mut k, &Frame::data(b"more".to_vec()), Nanos(2)),
            TerminationOutcome::NotATermination
        );
    }

    #[test]
    fn missing_context_is_reported() {
        let mut ip = shard();
        let k = conn(1, record_ctx(9));
        assert_eq!(
            ip.on_invocation(&k, b"q", Nanos(1)),
            Inbound::MissingContext(ContextId(9))
        );
    }

    #[test]
    fn replay_miss_cases() {
        let mut ip = shard();
        let c = cache();
        let replay = ExecutionContext::new(Mode::Replay, ContextId(5), Nanos::ZERO, DEADLINE).unwrap();
        assert_eq!(
            ip.replay_lookup(&Endpoint::new("shard", 3), b"q", &replay, &c, Nanos(1)),
            ReplayLookup::Miss
        );
        // Same bytes recorded under another context id miss as well.
        let key = CacheKey::derive(ContextId(6), &Endpoint::new("shard", 3), b"q");
        c.put_append(key, ContextId(6), &Frame::end_of_call().encode(), Nanos::ZERO)
            .unwrap();
        assert_eq!(
            ip.replay_lookup(&Endpoint::new("shard", 3), b"q", &replay, &c, Nanos(1)),
            ReplayLookup::Miss
        );
        // Incomplete recordings are not served.
        let key = CacheKey::derive(ContextId(5), &Endpoint::new("shard", 3), b"q");
        c.put_append(key, ContextId(5), &Frame::data(b"r0".to_vec()).encode(), Nanos::ZERO)
            .unwrap();
        assert_eq!(
            ip.replay_lookup(&Endpoint::new("shard", 3), b"q", &replay, &c, Nanos(1)),
            ReplayLookup::Miss
        );
    }

    #[test]
    fn expiry_reports_incomplete_recordings() {
        let mut ip = shard();
        let c = cache();
        install(&mut ip, 7);
        let k = conn(1, record_ctx(7));
        ip.on_invocation(&k, b"q", Nanos(1));
        ip.record_reply(k.connection_id, &Frame::data(b"r0".to_vec()), &c, Nanos(2))
            .unwrap();
        assert!(ip.expire(Nanos(3)).is_empty());
        let gone = ip.expire(DEADLINE);
        assert_eq!(
            gone,
            vec![Expired {
                context_id: ContextId(7),
                incomplete: vec![ConnectionId(1)]
            }]
        );
        assert!(ip.table().is_empty());
        assert_eq!(
            ip.record_reply(k.connection_id, &Frame::data(b"late".to_vec()), &c, DEADLINE)
                .unwrap(),
            RecordOutcome::NotRecorded
        );
    }

    #[test]
    fn propagation_once_per_destination() {
        let mut front = shard();
        let ctx = record_ctx(4);
        front.begin_context(&ctx, Nanos::ZERO);
        let s3 = Endpoint::new("shard", 3);
        let s5 = Endpoint::new("shard", 5);
        assert!(front.propagate_context(&s3, &ctx, Nanos(1)).is_some());
        assert!(front.propagate_context(&s3, &ctx, Nanos(2)).is_none());
        assert!(front.propagate_context(&s5, &ctx, Nanos::from_millis(100)).is_none());
        assert!(front
            .propagate_context(&s5, &ExecutionContext::NORMAL, Nanos(1))
            .is_none());
    }

    #[test]
    fn reset_clears_context() {
        let mut ip = shard();
        install(&mut ip, 7);
        let reset = ControlMessage {
            context_id: ContextId(7),
            mode: ControlMode::Reset,
            record_deadline: DEADLINE,
        };
        assert_eq!(ip.handle_control(&reset, Nanos(1)), ControlOutcome::Reset);
        assert!(ip.table().is_empty());
    }
}
