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

//! Per-component table of active execution contexts.

use std::collections::{BTreeMap, BTreeSet};

use super::Endpoint;
use crate::model::{ContextId, Mode};
use crate::time::Nanos;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextEntry {
    pub mode: Mode,
    pub record_deadline: Nanos,
    pub propagated_destinations: BTreeSet<Endpoint>,
    pub propagate_deadline: Nanos,
    pub installed_at: Nanos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlOutcome {
    Installed,
    /// Existing entry switched mode (record to replay).
    Updated,
    Duplicate,
    /// Arrived at or after its deadline; ignored.
    Expired,
    Reset,
}

/// Contexts known to one component. With local expiry enabled, an entry is
/// never observable at or after its record deadline.
#[derive(Clone, Debug)]
pub struct ContextTable {
    entries: BTreeMap<ContextId, ContextEntry>,
    propagate_timeout: Nanos,
    expire_locally: bool,
}

impl ContextTable {
    pub fn new(propagate_timeout: Nanos, expire_locally: bool) -> Self {
        Self {
            entries: BTreeMap::new(),
            propagate_timeout,
            expire_locally,
        }
    }

    /// Installs or switches a context. Mode changes restart the propagation window.
    pub fn install(&mut self, id: ContextId, mode: Mode, record_deadline: Nanos, now: Nanos) -> ControlOutcome {
        self.purge(now);
        if mode == Mode::Normal || id == ContextId::NORMAL {
            return ControlOutcome::Duplicate;
        }
        if self.expire_locally && now >= record_deadline {
            return ControlOutcome::Expired;
        }
        let fresh = ContextEntry {
            mode,
            record_deadline,
            propagated_destinations: BTreeSet::new(),
            propagate_deadline: now + self.propagate_timeout,
            installed_at: now,
        };
        match self.entries.get_mut(&id) {
            Some(e) if e.mode == mode => ControlOutcome::Duplicate,
            Some(e) => {
                *e = fresh;
                ControlOutcome::Updated
            }
            None => {
                self.entries.insert(id, fresh);
                ControlOutcome::Installed
            }
        }
    }

    pub fn get(&self, id: ContextId, now: Nanos) -> Option<&ContextEntry> {
        self.entries
            .get(&id)
            .filter(|e| !self.expire_locally || now < e.record_deadline)
    }

    pub fn remove(&mut self, id: ContextId) -> Option<ContextEntry> {
        self.entries.remove(&id)
    }

    /// Drops entries whose record deadline has passed; returns their ids.
    pub fn purge(&mut self, now: Nanos) -> Vec<ContextId> {
        if !self.expire_locally {
            return Vec::new();
        }
        let stale: Vec<ContextId> = self
            .entries
            .iter()
            .filter(|(_, e)| now >= e.record_deadline)
            .map(|(id, _)| *id)
            .collect();
        for id in &stale {
            self.entries.remove(id);
        }
        stale
    }

    /// Marks `dest` as contacted; true iff it was new and the propagation window is open.
    pub fn propagate(&mut self, id: ContextId, dest: &Endpoint, now: Nanos) -> bool {
        self.purge(now);
        match self.entries.get_mut(&id) {
            Some(e) if now < e.propagate_deadline && !e.propagated_destinations.contains(dest) => {
                e.propagated_destinations.insert(dest.clone());
                true
            }
            _ => false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries still visible at `now`.
    pub fn live_len(&self, now: Nanos) -> usize {
        self.entries
            .values()
            .filter(|e| !self.expire_locally || now < e.record_deadline)
            .count()
    }

    pub fn ids(&self) -> impl Iterator<Item = ContextId> + '_ {
        self.entries.keys().copied()
    }
}
