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

//! Memoization keys.

use std::fmt;

use xxhash_rust::xxh3::xxh3_128;

use super::Endpoint;
use crate::model::ContextId;

/// Name of the hash recorded in run manifests.
pub const CACHE_KEY_HASH: &str = "xxh3-128";

/// 128-bit hash of (context id, callee endpoint, invocation bytes).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(pub u128);

impl CacheKey {
    pub fn derive(context_id: ContextId, callee: &Endpoint, invocation: &[u8]) -> CacheKey {
        let mut buf = Vec::with_capacity(8 + callee.address.len() + 3 + invocation.len());
        buf.extend_from_slice(&context_id.0.to_be_bytes());
        buf.extend_from_slice(callee.address.as_bytes());
        buf.push(0);
        buf.extend_from_slice(&callee.port.to_be_bytes());
        buf.extend_from_slice(invocation);
        CacheKey(xxh3_128(&buf))
    }

    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_part() {
        let e = Endpoint::new("10.0.0.1", 80);
        let base = CacheKey::derive(ContextId(1), &e, b"q");
        assert_eq!(base, CacheKey::derive(ContextId(1), &e, b"q"));
        assert_ne!(base, CacheKey::derive(ContextId(2), &e, b"q"));
        assert_ne!(
            base,
            CacheKey::derive(ContextId(1), &Endpoint::new("10.0.0.1", 81), b"q")
        );
        assert_ne!(base, CacheKey::derive(ContextId(1), &e, b"r"));
        assert_eq!(base.to_hex().len(), 32);
    }
}
