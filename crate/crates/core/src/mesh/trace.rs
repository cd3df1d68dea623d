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

//! Workload traces: Poisson arrivals under a diurnal profile, priority split
//! and query-mix shifts; CSV load and save.

use std::io::{Read, Write};

use rand::RngExt;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

use crate::config::{ConfigError, Section};
use crate::model::{Priority, Query};
use crate::rng::SimRng;
use crate::time::Nanos;

/// Light queries touch few terms; heavy ones take longer everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryClass {
    Light,
    Heavy,
}

impl QueryClass {
    /// Query params: class byte followed by the term seed (u64 BE).
    pub fn encode(self, seed: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(9);
        out.push(match self {
            QueryClass::Light => 0,
            QueryClass::Heavy => 1,
        });
        out.extend_from_slice(&seed.to_be_bytes());
        out
    }

    /// Unknown or short params decode as light.
    pub fn decode(params: &[u8]) -> (QueryClass, u64) {
        let class = match params.first() {
            Some(1) => QueryClass::Heavy,
            _ => QueryClass::Light,
        };
        let seed = params
            .get(1..9)
            .map(|b| u64::from_be_bytes(b.try_into().unwrap()))
            .unwrap_or(0);
        (class, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub duration: Nanos,
    /// Queries per second before the profile multiplier.
    pub base_arrival_rate: f64,
    /// Piecewise-linear multiplier: (fraction of duration, multiplier) points.
    /// Empty means constant 1.
    pub diurnal_profile: Vec<(f64, f64)>,
    pub heavy_fraction: f64,
    /// (time, new heavy fraction) events.
    pub mix_shift_events: Vec<(Nanos, f64)>,
    /// Fraction of high-priority queries.
    pub high_low_split: f64,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            duration: Nanos::from_secs(60),
            base_arrival_rate: 10.0,
            diurnal_profile: Vec::new(),
            heavy_fraction: 0.0,
            mix_shift_events: Vec::new(),
            high_low_split: 1.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid trace spec: {0}")]
    Invalid(String),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace csv row {row}: {message}")]
    Row { row: usize, message: String },
}

impl TraceSpec {
    /// The compressed three-hour day used for admission-control experiments:
    /// a diurnal swell peaking mid-trace and two shifts toward heavy queries.
    pub fn compressed_day(duration: Nanos, peak_rate: f64) -> Self {
        let at = |frac: f64| duration.mul_f64(frac);
        TraceSpec {
            duration,
            base_arrival_rate: peak_rate,
            diurnal_profile: vec![
                (0.0, 0.35),
                (0.15, 0.5),
                (0.3, 0.8),
                (0.45, 1.0),
                (0.8, 1.0),
                (0.9, 0.6),
                (1.0, 0.35),
            ],
            heavy_fraction: 0.1,
            // 45 minutes and 2 hours into a 3-hour day.
            mix_shift_events: vec![(at(0.25), 0.4), (at(2.0 / 3.0), 0.8)],
            high_low_split: 0.4,
        }
    }

    pub fn from_section(s: &Section) -> Result<Self, ConfigError> {
        let d = TraceSpec::default();
        let duration = s.duration("duration")?.map(Nanos::from_secs_f64).unwrap_or(d.duration);
        let mut spec = match s.scalar("profile").map(|p| p.trim().to_ascii_lowercase()) {
            Some(p) if p == "diurnal" => {
                TraceSpec::compressed_day(duration, s.parsed("rate")?.unwrap_or(d.base_arrival_rate))
            }
            Some(p) if p == "constant" => TraceSpec { duration, ..d.clone() },
            None => TraceSpec { duration, ..d.clone() },
            Some(p) => return Err(ConfigError::invalid(format!("unknown trace profile `{p}`"))),
        };
        if let Some(r) = s.parsed("rate")? {
            spec.base_arrival_rate = r;
        }
        if let Some(h) = s.parsed("heavyFraction")? {
            spec.heavy_fraction = h;
        }
        if let Some(h) = s.parsed("highFraction")? {
            spec.high_low_split = h;
        }
        spec.validate().map_err(|e| ConfigError::invalid(e.to_string()))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::Invalid(m.to_string()));
        if !(self.base_arrival_rate >= 0.0 && self.base_arrival_rate.is_finite()) {
            return bad("arrival rate must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.heavy_fraction) || !(0.0..=1.0).contains(&self.high_low_split) {
            return bad("fractions must be in [0, 1]");
        }
        if self
            .diurnal_profile
            .iter()
            .any(|&(x, m)| !(0.0..=1.0).contains(&x) || !(m >= 0.0 && m.is_finite()))
        {
            return bad("profile points must have x in [0, 1] and multiplier >= 0");
        }
        if self.diurnal_profile.windows(2).any(|w| w[1].0 < w[0].0) {
            return bad("profile points must be sorted");
        }
        if self.mix_shift_events.iter().any(|&(_, f)| !(0.0..=1.0).contains(&f)) {
            return bad("mix shift fractions must be in [0, 1]");
        }
        Ok(())
    }

    /// Profile multiplier at time `t`.
    pub fn multiplier(&self, t: Nanos) -> f64 {
        let p = &self.diurnal_profile;
        if p.is_empty() || self.duration == Nanos::ZERO {
            return 1.0;
        }
        let x = t.as_secs_f64() / self.duration.as_secs_f64();
        if x <= p[0].0 {
            return p[0].1;
        }
        for w in p.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x <= x1 {
                return if x1 > x0 {
                    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                } else {
                    y1
                };
            }
        }
        p[p.len() - 1].1
    }

    pub fn rate_at(&self, t: Nanos) -> f64 {
        self.base_arrival_rate * self.multiplier(t)
    }

    pub fn heavy_fraction_at(&self, t: Nanos) -> f64 {
        self.mix_shift_events
            .iter()
            .filter(|(at, _)| *at <= t)
            .max_by_key(|(at, _)| *at)
            .map(|&(_, f)| f)
            .unwrap_or(self.heavy_fraction)
    }

    fn peak_multiplier(&self) -> f64 {
        if self.diurnal_profile.is_empty() {
            1.0
        } else {
            self.diurnal_profile.iter().map(|&(_, m)| m).fold(0.0, f64::max)
        }
    }
}

/// Poisson arrivals by thinning against the peak rate.
pub fn generate_trace(spec: &TraceSpec, rng: &mut SimRng) -> Result<Vec<Query>, TraceError> {
    spec.validate()?;
    let peak = spec.base_arrival_rate * spec.peak_multiplier();
    let mut out = Vec::new();
    if peak <= 0.0 {
        return Ok(out);
    }
    let gap = Exp::new(peak).map_err(|e| TraceError::Invalid(e.to_string()))?;
    let mut t = 0.0f64;
    let end = spec.duration.as_secs_f64();
    let mut last = None::<Nanos>;
    loop {
        t += gap.sample(rng);
        if t >= end {
            break;
        }
        let at = Nanos::from_secs_f64(t);
        let accept: f64 = rng.random();
        let class_draw: f64 = rng.random();
        let priority_draw: f64 = rng.random();
        let seed: u64 = rng.random();
        if accept * peak > spec.rate_at(at) {
            continue;
        }
        let at = match last {
            Some(prev) if at <= prev => Nanos(prev.0 + 1),
            _ => at,
        };
        last = Some(at);
        let class = if class_draw < spec.heavy_fraction_at(at) {
            QueryClass::Heavy
        } else {
            QueryClass::Light
        };
        let priority = if priority_draw < spec.high_low_split {
            Priority::High
        } else {
            Priority::Low
        };
        out.push(Query::new(out.len() as u64 + 1, priority, class.encode(seed), at));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    arrival_time_ns: u64,
    priority: String,
    params: String,
}

pub fn write_trace_csv<W: Write>(out: W, queries: &[Query]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    for q in queries {
        w.serialize(TraceRow {
            arrival_time_ns: q.arrival_time.0,
            priority: q.priority.as_str().to_string(),
            params: hex::encode(&q.params),
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads `arrival_time_ns,priority,params` rows; params are hex. Query ids are
/// assigned in file order and arrivals must be strictly increasing.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<Query>, TraceError> {
    let mut out: Vec<Query> = Vec::new();
    for (i, row) in csv::Reader::from_reader(input).deserialize::<TraceRow>().enumerate() {
        let row = row?;
        let err = |message: String| TraceError::Row { row: i + 1, message };
        let priority = Priority::parse(&row.priority).ok_or_else(|| err(format!("bad priority `{}`", row.priority)))?;
        let params = hex::decode(row.params.trim()).map_err(|e| err(format!("bad params: {e}")))?;
        let at = Nanos(row.arrival_time_ns);
        if out.last().is_some_and(|q| q.arrival_time >= at) {
            return Err(err("arrival times must be strictly increasing".into()));
        }
        out.push(Query::new(i as u64 + 1, priority, params, at));
    }
    Ok(out)
}

/// Content hash of a trace, used to match runs for comparison.
pub fn trace_hash(queries: &[Query]) -> String {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, queries).expect("writing to memory");
    format!("{:016x}", xxh3_64(&buf))
}
