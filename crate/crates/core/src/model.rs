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

//! Domain types shared across the crate.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::Nanos;

/// Query priority class. High-priority queries are never shed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Priority {
    High,
    Low,
}

impl Priority {
    pub fn as_str(self) -> &'static str {
        match self {
            Priority::High => "high",
            Priority::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Option<Priority> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" | "h" => Some(Priority::High),
            "low" | "l" => Some(Priority::Low),
            _ => None,
        }
    }
}

/// An arriving request. `params` is opaque to everything except the target service.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub query_id: u64,
    pub priority: Priority,
    pub params: Vec<u8>,
    pub arrival_time: Nanos,
    sampled: bool,
}

impl Query {
    pub fn new(query_id: u64, priority: Priority, params: Vec<u8>, arrival_time: Nanos) -> Self {
        Self {
            query_id,
            priority,
            params,
            arrival_time,
            sampled: false,
        }
    }

    pub fn sampled(&self) -> bool {
        self.sampled
    }

    /// Returns a copy carrying the sampler decision. The decision is fixed once the
    /// query is admitted, so the only way to set it is to produce the admitted value.
    pub fn admitted(mut self, sampled: bool) -> Self {
        self.sampled = sampled;
        self
    }
}

/// Identifier of a component within one mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentId(pub u32);

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// One ranked result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Item {
    pub id: u64,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerKind {
    Online,
    Mature,
}

/// A ranked answer. Item ids are unique; a mature answer never lists timed-out components.
#[derive(Clone, Debug, PartialEq)]
pub struct Answer {
    items: Vec<Item>,
    pub produced_at: Nanos,
    pub kind: AnswerKind,
    timed_out_components: BTreeSet<ComponentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnswerError {
    #[error("duplicate item id {0} in answer")]
    DuplicateItem(u64),
    #[error("mature answer cannot list timed-out components")]
    MatureWithTimeouts,
}

impl Answer {
    pub fn new(
        items: Vec<Item>,
        produced_at: Nanos,
        kind: AnswerKind,
        timed_out_components: BTreeSet<ComponentId>,
    ) -> Result<Self, AnswerError> {
        let mut seen = std::collections::HashSet::with_capacity(items.len());
        for item in &items {
            if !seen.insert(item.id) {
                return Err(AnswerError::DuplicateItem(item.id));
            }
        }
        if kind == AnswerKind::Mature && !timed_out_components.is_empty() {
            return Err(AnswerError::MatureWithTimeouts);
        }
        Ok(Self {
            items,
            produced_at,
            kind,
            timed_out_components,
        })
    }

    /// Convenience constructor for tests and callbacks that only care about ids.
    pub fn from_ids(ids: &[u64], kind: AnswerKind) -> Result<Self, AnswerError> {
        let items = ids.iter().map(|&id| Item { id, score: 0.0 }).collect();
        Answer::new(items, Nanos::ZERO, kind, BTreeSet::new())
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.items.iter().map(|i| i.id)
    }

    pub fn timed_out_components(&self) -> &BTreeSet<ComponentId> {
        &self.timed_out_components
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Per-query execution mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Normal,
    Record,
    Replay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextId(pub u64);

impl ContextId {
    pub const NORMAL: ContextId = ContextId(0);
}

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ctx{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("context id 0 is reserved for normal mode")]
    ReservedId,
    #[error("record deadline must be after creation time")]
    DeadlineNotAfterCreation,
}

/// The unit propagated between components: a mode and the id that names it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExecutionContext {
    mode: Mode,
    context_id: ContextId,
    record_deadline: Nanos,
    created_at: Nanos,
}

impl ExecutionContext {
    pub const NORMAL: ExecutionContext = ExecutionContext {
        mode: Mode::Normal,
        context_id: ContextId::NORMAL,
        record_deadline: Nanos::ZERO,
        created_at: Nanos::ZERO,
    };

    pub fn new(
        mode: Mode,
        context_id: ContextId,
        created_at: Nanos,
        record_deadline: Nanos,
    ) -> Result<Self, ContextError> {
        if mode == Mode::Normal {
            return Ok(ExecutionContext::NORMAL);
        }
        if context_id == ContextId::NORMAL {
            return Err(ContextError::ReservedId);
        }
        if record_deadline <= created_at {
            return Err(ContextError::DeadlineNotAfterCreation);
        }
        Ok(Self {
            mode,
            context_id,
            record_deadline,
            created_at,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn context_id(&self) -> ContextId {
        self.context_id
    }

    pub fn record_deadline(&self) -> Nanos {
        self.record_deadline
    }

    pub fn created_at(&self) -> Nanos {
        self.created_at
    }

    pub fn is_normal(&self) -> bool {
        self.mode == Mode::Normal
    }

    /// Same context id, switched to replay with a fresh deadline window.
    pub fn to_replay(&self, now: Nanos, deadline: Nanos) -> Result<Self, ContextError> {
        ExecutionContext::new(Mode::Replay, self.context_id, now, deadline)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_rejects_duplicates() {
        assert_eq!(
            Answer::from_ids(&[1, 2, 1], AnswerKind::Online),
            Err(AnswerError::DuplicateItem(1))
        );
    }

    #[test]
    fn mature_answer_has_no_timeouts() {
        let mut t = BTreeSet::new();
        t.insert(ComponentId(3));
        assert_eq!(
            Answer::new(vec![], Nanos::ZERO, AnswerKind::Mature, t.clone()).unwrap_err(),
            AnswerError::MatureWithTimeouts
        );
        assert!(Answer::new(vec![], Nanos::ZERO, AnswerKind::Online, t).is_ok());
    }

    #[test]
    fn normal_context_has_id_zero() {
        let c = ExecutionContext::new(Mode::Normal, ContextId(9), Nanos(1), Nanos(2)).unwrap();
        assert_eq!(c.context_id(), ContextId::NORMAL);
        assert_eq!(
            ExecutionContext::new(Mode::Record, ContextId(0), Nanos(1), Nanos(2)),
            Err(ContextError::ReservedId)
        );
        assert_eq!(
            ExecutionContext::new(Mode::Record, ContextId(4), Nanos(2), Nanos(2)),
            Err(ContextError::DeadlineNotAfterCreation)
        );
    }

    #[test]
    fn sampled_flag_set_at_admission() {
        let q = Query::new(1, Priority::Low, vec![], Nanos(5));
        assert!(!q.sampled());
        assert!(q.admitted(true).sampled());
    }
}
