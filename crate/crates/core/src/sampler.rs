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

//! Query sampler: decides which admitted queries get a mature execution.

use rand::{Rng, RngExt};

use crate::config::SamplingRate;
use crate::time::Nanos;

const MINUTE: Nanos = Nanos::from_secs(60);

/// Token bucket refilled continuously at `capacity` tokens per minute.
#[derive(Clone, Debug)]
pub struct TokenBucket {
    capacity: f64,
    tokens: f64,
    last: Nanos,
}

impl TokenBucket {
    /// A full bucket holding `per_minute` tokens.
    pub fn new(per_minute: f64, now: Nanos) -> Self {
        let capacity = per_minute.max(0.0);
        Self {
            capacity,
            tokens: capacity,
            last: now,
        }
    }

    fn refill(&mut self, now: Nanos) {
        if now > self.last {
            let elapsed_min = (now - self.last).as_secs_f64() / 60.0;
            self.tokens = (self.tokens + elapsed_min * self.capacity).min(self.capacity);
            self.last = now;
        }
    }

    pub fn available(&mut self, now: Nanos) -> f64 {
        self.refill(now);
        self.tokens
    }

    /// Takes one token if available.
    pub fn try_take(&mut self, now: Nanos) -> bool {
        self.refill(now);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    pub fn fill_level(&mut self, now: Nanos) -> f64 {
        self.refill(now);
        if self.capacity == 0.0 {
            0.0
        } else {
            self.tokens / self.capacity
        }
    }
}

/// Stateful sampler used by the mesh.
#[derive(Clone, Debug)]
pub struct Sampler {
    rate: SamplingRate,
    bucket: Option<TokenBucket>,
}

impl Sampler {
    pub fn new(rate: SamplingRate, now: Nanos) -> Self {
        let bucket = match rate {
            SamplingRate::PerMinute(v) => Some(TokenBucket::new(v, now)),
            SamplingRate::Fraction(_) => None,
        };
        Self { rate, bucket }
    }

    pub fn rate(&self) -> SamplingRate {
        self.rate
    }

    /// Decides whether the query arriving at `now` is sampled.
    ///
    /// Fractional rates draw an independent Bernoulli. Per-minute rates sample only
    /// when a token is available, and then with probability equal to the bucket's
    /// fill level, so samples spread across arrivals instead of clustering right
    /// after each refill.
    pub fn decide<R: Rng + ?Sized>(&mut self, rng: &mut R, now: Nanos) -> bool {
        match (self.rate, self.bucket.as_mut()) {
            (SamplingRate::Fraction(p), _) => draw(rng, p),
            (SamplingRate::PerMinute(_), Some(bucket)) => {
                if bucket.available(now) < 1.0 {
                    return false;
                }
                let level = bucket.fill_level(now);
                draw(rng, level) && bucket.try_take(now)
            }
            (SamplingRate::PerMinute(_), None) => false,
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random_bool(p)
    }
}

/// Stateless form of [`Sampler::decide`]: the token bucket is reconstructed from
/// the sample times of the last minute, starting full one minute ago.
pub fn sampler_decide<R: Rng + ?Sized>(
    rng: &mut R,
    rate: SamplingRate,
    now: Nanos,
    recent_sample_times: &[Nanos],
) -> bool {
    debug_assert!(recent_sample_times.windows(2).all(|w| w[0] <= w[1]));
    match rate {
        SamplingRate::Fraction(p) => draw(rng, p),
        SamplingRate::PerMinute(per_minute) => {
            let start = now.saturating_sub(MINUTE);
            let mut bucket = TokenBucket::new(per_minute, start);
            for &t in recent_sample_times.iter().filter(|&&t| t >= start && t <= now) {
                bucket.try_take(t);
            }
            let mut sampler = Sampler {
                rate,
                bucket: Some(bucket),
            };
            sampler.decide(rng, now)
        }
    }
}
