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

//! Message transport between components and the interposition layer on top of it.
//!
//! [`LoopbackTransport`] is an in-process stand-in for TCP connections plus UDP
//! datagrams: connections are reliable, ordered and bidirectional while open;
//! datagrams are unreliable and may be dropped with a configured probability.

mod context;
mod control;
mod frame;
mod interposer;
mod key;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use rand::RngExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use context::{ContextEntry, ContextTable, ControlOutcome};
pub use control::{ControlError, ControlMessage, ControlMode, CONTROL_LEN};
pub use frame::{Frame, FrameError, FrameKind, TerminationMatcher, FRAME_HEADER_LEN};
pub use interposer::{
    Expired, Inbound, Interposer, InterposerConfig, InterposerStats, RecordOutcome, ReplayLookup, TerminationOutcome,
};
pub use key::{CacheKey, CACHE_KEY_HASH};

use crate::model::ExecutionContext;
use crate::rng::SimRng;

/// Network identity of one component.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub address: String,
    pub port: u16,
}

impl Endpoint {
    pub fn new(address: impl Into<String>, port: u16) -> Self {
        Self {
            address: address.into(),
            port,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.address, self.port)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConnectionId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConnectionState {
    Open,
    /// The caller terminated but the termination was withheld from the callee.
    /// Callee messages are no longer delivered to the caller.
    CallerTerminated,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Connection {
    pub connection_id: ConnectionId,
    pub caller: Endpoint,
    pub callee: Endpoint,
    pub state: ConnectionState,
    /// Context of the caller when the connection was opened. The transport only
    /// carries it; whether the callee honors it is the interposer's decision.
    pub opened_under: ExecutionContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("no component registered at {0}")]
    UnknownEndpoint(Endpoint),
    #[error("unknown connection {0:?}")]
    UnknownConnection(ConnectionId),
    #[error("connection {0:?} is not open for caller messages")]
    NotOpen(ConnectionId),
}

/// Outcome of a callee-to-caller send.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    Queued,
    /// The caller already terminated; the message is not delivered.
    Withheld,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransportStats {
    pub connections_opened: u64,
    pub frames_sent: u64,
    pub bytes_sent: u64,
    pub datagrams_sent: u64,
    pub datagrams_dropped: u64,
}

#[derive(Debug)]
struct Slot {
    conn: Connection,
    to_callee: VecDeque<Frame>,
    to_caller: VecDeque<Frame>,
}

#[derive(Debug)]
pub struct LoopbackTransport {
    registered: BTreeSet<Endpoint>,
    slots: HashMap<ConnectionId, Slot>,
    next_id: u64,
    datagram_loss: f64,
    rng: SimRng,
    mailboxes: HashMap<Endpoint, VecDeque<Vec<u8>>>,
    stats: TransportStats,
}

impl LoopbackTransport {
    pub fn new(datagram_loss: f64, rng: SimRng) -> Self {
        Self {
            registered: BTreeSet::new(),
            slots: HashMap::new(),
            next_id: 1,
            datagram_loss: datagram_loss.clamp(0.0, 1.0),
            rng,
            mailboxes: HashMap::new(),
            stats: TransportStats::default(),
        }
    }

    pub fn register(&mut self, endpoint: Endpoint) {
        self.registered.insert(endpoint);
    }

    pub fn is_registered(&self, endpoint: &Endpoint) -> bool {
        self.registered.contains(endpoint)
    }

    pub fn stats(&self) -> TransportStats {
        self.stats
    }

    pub fn open_connection(
        &mut self,
        caller: &Endpoint,
        callee: &Endpoint,
        ctx: ExecutionContext,
    ) -> Result<Connection, TransportError> {
        if !self.registered.contains(callee) {
            return Err(TransportError::UnknownEndpoint(callee.clone()));
        }
        let id = ConnectionId(self.next_id);
        self.next_id += 1;
        let conn = Connection {
            connection_id: id,
            caller: caller.clone(),
            callee: callee.clone(),
            state: ConnectionState::Open,
            opened_under: ctx,
        };
        self.slots.insert(
            id,
            Slot {
                conn: conn.clone(),
                to_callee: VecDeque::new(),
                to_caller: VecDeque::new(),
            },
        );
        self.stats.connections_opened += 1;
        Ok(conn)
    }

    fn slot(&mut self, id: ConnectionId) -> Result<&mut Slot, TransportError> {
        self.slots.get_mut(&id).ok_or(TransportError::UnknownConnection(id))
    }

    pub fn connection(&self, id: ConnectionId) -> Option<&Connection> {
        self.slots.get(&id).map(|s| &s.conn)
    }

    pub fn connection_mut(&mut self, id: ConnectionId) -> Option<&mut Connection> {
        self.slots.get_mut(&id).map(|s| &mut s.conn)
    }

    pub fn send_to_callee(&mut self, id: ConnectionId, frame: Frame) -> Result<(), TransportError> {
        let slot = self.slot(id)?;
        if slot.conn.state != ConnectionState::Open {
            return Err(TransportError::NotOpen(id));
        }
        let len = frame.encoded_len() as u64;
        slot.to_callee.push_back(frame);
        self.stats.frames_sent += 1;
        self.stats.bytes_sent += len;
        Ok(())
    }

    pub fn send_to_caller(&mut self, id: ConnectionId, frame: Frame) -> Result<Delivery, TransportError> {
        let slot = self.slot(id)?;
        match slot.conn.state {
            ConnectionState::Open => {
                let len = frame.encoded_len() as u64;
                slot.to_caller.push_back(frame);
                self.stats.frames_sent += 1;
                self.stats.bytes_sent += len;
                Ok(Delivery::Queued)
            }
            ConnectionState::CallerTerminated | ConnectionState::Closed => Ok(Delivery::Withheld),
        }
    }

    pub fn recv_at_callee(&mut self, id: ConnectionId) -> Option<Frame> {
        self.slots.get_mut(&id)?.to_callee.pop_front()
    }

    pub fn recv_at_caller(&mut self, id: ConnectionId) -> Option<Frame> {
        self.slots.get_mut(&id)?.to_caller.pop_front()
    }

    pub fn set_state(&mut self, id: ConnectionId, state: ConnectionState) -> Result<(), TransportError> {
        self.slot(id)?.conn.state = state;
        Ok(())
    }

    /// Forgets a connection once both sides are done with it.
    pub fn release(&mut self, id: ConnectionId) {
        self.slots.remove(&id);
    }

    pub fn open_connections(&self) -> usize {
        self.slots.len()
    }

    /// Sends a datagram; returns false if it was dropped.
    pub fn send_datagram(&mut self, to: &Endpoint, bytes: &[u8]) -> bool {
        self.stats.datagrams_sent += 1;
        let dropped = self.datagram_loss > 0.0 && self.rng.random_bool(self.datagram_loss);
        if dropped || !self.registered.contains(to) {
            self.stats.datagrams_dropped += 1;
            return false;
        }
        self.mailboxes.entry(to.clone()).or_default().push_back(bytes.to_vec());
        true
    }

    pub fn recv_datagram(&mut self, at: &Endpoint) -> Option<Vec<u8>> {
        self.mailboxes.get_mut(at)?.pop_front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSplitter;

    fn transport(loss: f64) -> LoopbackTransport {
        let mut t = LoopbackTransport::new(loss, RngSplitter::new(3).stream("net"));
        t.register(Endpoint::new("front", 80));
        t.register(Endpoint::new("shard", 1064));
        t
    }

    #[test]
    fn open_to_registered_and_unregistered() {
        let mut t = transport(0.0);
        let f = Endpoint::new("front", 80);
        let c = t
            .open_connection(&f, &Endpoint::new("shard", 1064), ExecutionContext::NORMAL)
            .unwrap();
        assert_eq!(c.state, ConnectionState::Open);
        let err = t
            .open_connection(&f, &Endpoint::new("nowhere", 1), ExecutionContext::NORMAL)
            .unwrap_err();
        assert_eq!(err, TransportError::UnknownEndpoint(Endpoint::new("nowhere", 1)));
    }

    #[test]
    fn concurrent_opens_get_distinct_ids() {
        let mut t = transport(0.0);
        let f = Endpoint::new("front", 80);
        let s = Endpoint::new("shard", 1064);
        let a = t.open_connection(&f, &s, ExecutionContext::NORMAL).unwrap();
        let b = t.open_connection(&f, &s, ExecutionContext::NORMAL).unwrap();
        assert_ne!(a.connection_id, b.connection_id);
    }

    #[test]
    fn ordered_delivery_and_withholding() {
        let mut t = transport(0.0);
        let f = Endpoint::new("front", 80);
        let s = Endpoint::new("shard", 1064);
        let c = t.open_connection(&f, &s, ExecutionContext::NORMAL).unwrap();
        let id = c.connection_id;
        t.send_to_callee(id, Frame::data(b"q".to_vec())).unwrap();
        assert_eq!(t.send_to_caller(id, Frame::data(b"r0".to_vec())), Ok(Delivery::Queued));
        assert_eq!(t.send_to_caller(id, Frame::data(b"r1".to_vec())), Ok(Delivery::Queued));
        assert_eq!(t.recv_at_callee(id), Some(Frame::data(b"q".to_vec())));
        assert_eq!(t.recv_at_caller(id), Some(Frame::data(b"r0".to_vec())));
        assert_eq!(t.recv_at_caller(id), Some(Frame::data(b"r1".to_vec())));
        t.set_state(id, ConnectionState::CallerTerminated).unwrap();
        assert_eq!(
            t.send_to_caller(id, Frame::data(b"r2".to_vec())),
            Ok(Delivery::Withheld)
        );
        assert_eq!(t.recv_at_caller(id), None);
        assert_eq!(
            t.send_to_callee(id, Frame::data(b"late".to_vec())),
            Err(TransportError::NotOpen(id))
        );
    }

    #[test]
    fn datagram_loss() {
        let mut t = transport(1.0);
        assert!(!t.send_datagram(&Endpoint::new("shard", 1064), b"x"));
        assert_eq!(t.stats().datagrams_dropped, 1);
        let mut t = transport(0.0);
        assert!(t.send_datagram(&Endpoint::new("shard", 1064), b"x"));
        assert_eq!(t.recv_datagram(&Endpoint::new("shard", 1064)), Some(b"x".to_vec()));
    }
}
