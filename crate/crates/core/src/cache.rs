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

//! In-memory store of recorded reply sequences.
//!
//! Entries expire `ttl` after creation (half-open: an entry created at `t` is
//! readable strictly before `t + ttl`). The sum of entry sizes never exceeds the
//! configured capacity; an append that does not fit is rejected, the entry it
//! targeted is dropped whole and its context is flagged as failed.

use std::collections::{HashMap, HashSet};
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use crate::model::ContextId;
use crate::time::Nanos;
use crate::transport::CacheKey;

const SHARDS: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub replies: Vec<Vec<u8>>,
    pub created_at: Nanos,
    pub context_id: ContextId,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CacheError {
    #[error("cache capacity exceeded; entry for {0} rejected")]
    CapacityExceeded(ContextId),
    #[error("per-context footprint limit exceeded for {0}")]
    ContextLimitExceeded(ContextId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheConfig {
    pub capacity_bytes: u64,
    pub ttl: Nanos,
    /// Largest footprint one context may occupy. `None` means the whole capacity.
    pub per_context_limit: Option<u64>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CacheStats {
    pub appends: u64,
    pub rejects: u64,
    pub hits: u64,
    pub misses: u64,
    pub evicted: u64,
}

#[derive(Debug)]
pub struct MemoCache {
    config: CacheConfig,
    shards: Vec<Mutex<HashMap<CacheKey, CacheEntry>>>,
    used: AtomicU64,
    per_context: Vec<Mutex<HashMap<ContextId, u64>>>,
    failed: Mutex<HashSet<ContextId>>,
    stats: Mutex<CacheStats>,
}

impl MemoCache {
    pub fn new(config: CacheConfig) -> Self {
        Self {
            config,
            shards: (0..SHARDS).map(|_| Mutex::new(HashMap::new())).collect(),
            used: AtomicU64::new(0),
            per_context: (0..SHARDS).map(|_| Mutex::new(HashMap::new())).collect(),
            failed: Mutex::new(HashSet::new()),
            stats: Mutex::new(CacheStats::default()),
        }
    }

    pub fn config(&self) -> CacheConfig {
        self.config
    }

    fn shard(&self, key: &CacheKey) -> &Mutex<HashMap<CacheKey, CacheEntry>> {
        &self.shards[(key.0 as usize) % SHARDS]
    }

    fn ctx_shard(&self, ctx: ContextId) -> &Mutex<HashMap<ContextId, u64>> {
        &self.per_context[(ctx.0 as usize) % SHARDS]
    }

    fn expired(&self, entry: &CacheEntry, now: Nanos) -> bool {
        now >= entry.created_at + self.config.ttl
    }

    fn release(&self, entry: &CacheEntry) {
        self.used.fetch_sub(entry.size_bytes, Ordering::AcqRel);
        let mut pc = self.ctx_shard(entry.context_id).lock();
        if let Some(v) = pc.get_mut(&entry.context_id) {
            *v -= entry.size_bytes;
            if *v == 0 {
                pc.remove(&entry.context_id);
            }
        }
    }

    fn reserve(&self, bytes: u64) -> bool {
        let cap = self.config.capacity_bytes;
        self.used
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |u| {
                (u + bytes <= cap).then_some(u + bytes)
            })
            .is_ok()
    }

    fn reserve_context(&self, ctx: ContextId, bytes: u64) -> bool {
        let mut pc = self.ctx_shard(ctx).lock();
        let cur = pc.entry(ctx).or_insert(0);
        let limit = self.config.per_context_limit.unwrap_or(u64::MAX);
        if *cur + bytes > limit {
            if *cur == 0 {
                pc.remove(&ctx);
            }
            return false;
        }
        *cur += bytes;
        true
    }

    fn reject(&self, key: CacheKey, ctx: ContextId, err: CacheError) -> Result<(), CacheError> {
        if let Some(old) = self.shard(&key).lock().remove(&key) {
            self.release(&old);
        }
        self.failed.lock().insert(ctx);
        self.stats.lock().rejects += 1;
        Err(err)
    }

    /// Appends one reply under `key`, creating the entry if absent or expired.
    pub fn put_append(&self, key: CacheKey, context_id: ContextId, reply: &[u8], now: Nanos) -> Result<(), CacheError> {
        let bytes = reply.len() as u64;
        if self.used.load(Ordering::Acquire) + bytes > self.config.capacity_bytes {
            self.evict_expired(now);
        }
        // Bytes are accounted to the context that owns the entry; keys embed the
        // context id, so owner and caller differ only on a hash collision.
        let owner = {
            let mut shard = self.shard(&key).lock();
            if shard.get(&key).is_some_and(|e| self.expired(e, now)) {
                let old = shard.remove(&key).expect("present");
                self.release(&old);
            }
            shard.get(&key).map_or(context_id, |e| e.context_id)
        };
        if !self.reserve(bytes) {
            return self.reject(key, context_id, CacheError::CapacityExceeded(context_id));
        }
        if !self.reserve_context(owner, bytes) {
            self.used.fetch_sub(bytes, Ordering::AcqRel);
            return self.reject(key, context_id, CacheError::ContextLimitExceeded(context_id));
        }
        let mut shard = self.shard(&key).lock();
        let entry = shard.entry(key).or_insert_with(|| CacheEntry {
            key,
            replies: Vec::new(),
            created_at: now,
            context_id: owner,
            size_bytes: 0,
        });
        entry.replies.push(reply.to_vec());
        entry.size_bytes += bytes;
        drop(shard);
        self.stats.lock().appends += 1;
        Ok(())
    }

    /// All replies recorded under `key`, in insertion order, if the entry is live.
    pub fn get_all(&self, key: CacheKey, now: Nanos) -> Option<Vec<Vec<u8>>> {
        let shard = self.shard(&key).lock();
        let hit = shard
            .get(&key)
            .filter(|e| !self.expired(e, now))
            .map(|e| e.replies.clone());
        drop(shard);
        let mut stats = self.stats.lock();
        if hit.is_some() {
            stats.hits += 1;
        } else {
            stats.misses += 1;
        }
        hit
    }

    pub fn contains_live(&self, key: CacheKey, now: Nanos) -> bool {
        self.shard(&key).lock().get(&key).is_some_and(|e| !self.expired(e, now))
    }

    /// Removes every entry past its TTL; returns how many were removed.
    pub fn evict_expired(&self, now: Nanos) -> usize {
        let mut removed = 0;
        for shard in &self.shards {
            let mut shard = shard.lock();
            let stale: Vec<CacheKey> = shard.values().filter(|e| self.expired(e, now)).map(|e| e.key).collect();
            for k in stale {
                let e = shard.remove(&k).expect("present");
                self.release(&e);
                removed += 1;
            }
        }
        self.stats.lock().evicted += removed as u64;
        removed
    }

    /// Drops an entry regardless of age.
    pub fn remove(&self, key: CacheKey) -> bool {
        match self.shard(&key).lock().remove(&key) {
            Some(e) => {
                self.release(&e);
                true
            }
            None => false,
        }
    }

    pub fn used_bytes(&self) -> u64 {
        self.used.load(Ordering::Acquire)
    }

    pub fn context_bytes(&self, ctx: ContextId) -> u64 {
        self.ctx_shard(ctx).lock().get(&ctx).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.lock().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_failed(&self, ctx: ContextId) -> bool {
        self.failed.lock().contains(&ctx)
    }

    pub fn stats(&self) -> CacheStats {
        *self.stats.lock()
    }

    /// Debug dump: one line per entry, `hex-key context-id size,size,...`, sorted by key.
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut rows: Vec<(CacheKey, ContextId, Vec<usize>)> = self
            .shards
            .iter()
            .flat_map(|s| {
                s.lock()
                    .values()
                    .map(|e| (e.key, e.context_id, e.replies.iter().map(Vec::len).collect()))
                    .collect::<Vec<_>>()
            })
            .collect();
        rows.sort_by_key(|r| r.0);
        for (key, ctx, sizes) in rows {
            let sizes: Vec<String> = sizes.iter().map(usize::to_string).collect();
            writeln!(out, "{} {} {}", key.to_hex(), ctx.0, sizes.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cache(cap: u64, ttl_s: u64) -> MemoCache {
        MemoCache::new(CacheConfig {
            capacity_bytes: cap,
            ttl: Nanos::from_secs(ttl_s),
            per_context_limit: None,
        })
    }

    const K1: CacheKey = CacheKey(1);
    const K2: CacheKey = CacheKey(2);
    const C: ContextId = ContextId(7);

    #[test]
    fn append_preserves_order() {
        let c = cache(1024, 60);
        c.put_append(K1, C, b"r0", Nanos::ZERO).unwrap();
        c.put_append(K1, C, b"r1", Nanos(5)).unwrap();
        assert_eq!(c.get_all(K1, Nanos(6)), Some(vec![b"r0".to_vec(), b"r1".to_vec()]));
        assert_eq!(c.used_bytes(), 4);
    }

    #[test]
    fn expiry_is_half_open() {
        let c = cache(1024, 1);
        c.put_append(K1, C, b"x", Nanos::ZERO).unwrap();
        assert!(c.get_all(K1, Nanos::from_secs(1) - Nanos(1)).is_some());
        assert!(c.get_all(K1, Nanos::from_secs(1)).is_none());
        assert!(c.get_all(K2, Nanos::ZERO).is_none());
    }

    #[test]
    fn append_to_expired_key_starts_fresh() {
        let c = cache(1024, 1);
        c.put_append(K1, C, b"old", Nanos::ZERO).unwrap();
        let later = Nanos::from_secs(2);
        c.put_append(K1, C, b"new", later).unwrap();
        assert_eq!(c.get_all(K1, later), Some(vec![b"new".to_vec()]));
        assert_eq!(c.used_bytes(), 3);
        // The fresh entry lives a full TTL from its own creation.
        assert!(c.get_all(K1, later + Nanos::from_millis(999)).is_some());
    }

    #[test]
    fn overflow_rejects_and_evicts_whole_entry() {
        let c = cache(10, 60);
        c.put_append(K1, C, b"aaaa", Nanos::ZERO).unwrap();
        c.put_append(K2, ContextId(8), b"bbbb", Nanos::ZERO).unwrap();
        // 8 used; 4 more would make 12 > 10.
        let err = c.put_append(K1, C, b"cccc", Nanos::ZERO).unwrap_err();
        assert_eq!(err, CacheError::CapacityExceeded(C));
        assert!(c.get_all(K1, Nanos::ZERO).is_none());
        assert_eq!(c.used_bytes(), 4);
        assert!(c.is_failed(C));
        assert!(!c.is_failed(ContextId(8)));
    }

    #[test]
    fn overflow_reclaims_expired_space_first() {
        let c = cache(8, 1);
        c.put_append(K1, C, b"aaaaaaaa", Nanos::ZERO).unwrap();
        c.put_append(K2, C, b"bbbb", Nanos::from_secs(2)).unwrap();
        assert_eq!(c.used_bytes(), 4);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn evict_counts() {
        let c = cache(1024, 1);
        assert_eq!(c.evict_expired(Nanos::ZERO), 0);
        c.put_append(K1, C, b"a", Nanos::ZERO).unwrap();
        c.put_append(K2, C, b"b", Nanos::ZERO).unwrap();
        assert_eq!(c.evict_expired(Nanos::from_millis(500)), 0);
        assert_eq!(c.evict_expired(Nanos::from_secs(2)), 2);
        assert_eq!(c.used_bytes(), 0);
        assert!(c.is_empty());
    }

    #[test]
    fn per_context_limit() {
        let c = MemoCache::new(CacheConfig {
            capacity_bytes: 100,
            ttl: Nanos::from_secs(60),
            per_context_limit: Some(5),
        });
        c.put_append(K1, C, b"abc", Nanos::ZERO).unwrap();
        assert_eq!(
            c.put_append(K2, C, b"abc", Nanos::ZERO),
            Err(CacheError::ContextLimitExceeded(C))
        );
        assert_eq!(c.context_bytes(C), 3);
        c.put_append(K2, ContextId(9), b"abc", Nanos::ZERO).unwrap();
        assert_eq!(c.used_bytes(), 6);
    }

    #[test]
    fn dump_format() {
        let c = cache(1024, 60);
        c.put_append(K2, ContextId(3), b"xy", Nanos::ZERO).unwrap();
        c.put_append(K2, ContextId(3), b"z", Nanos::ZERO).unwrap();
        c.put_append(K1, ContextId(4), b"", Nanos::ZERO).unwrap();
        let mut out = Vec::new();
        c.dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], format!("{} 4 0", K1.to_hex()));
        assert_eq!(lines[1], format!("{} 3 2,1", K2.to_hex()));
    }
}
