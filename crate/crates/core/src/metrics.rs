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

//! Per-query run logs, throughput and slowdown.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ComponentId, Priority};
use crate::time::Nanos;

pub const RUNLOG_SCHEMA: &str = "v1";
const SCHEMA_LINE: &str = "# runlog schema v1";

/// Outcome of the mature execution of a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatureOutcome {
    NotSampled,
    Success(Nanos),
    Failed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub query_id: u64,
    pub priority: Priority,
    pub arrival: Nanos,
    pub admitted: bool,
    pub sampled: bool,
    /// `None` for rejected queries.
    pub online_latency: Option<Nanos>,
    pub mature: MatureOutcome,
    pub timed_out_components: Vec<ComponentId>,
    pub quality: Option<f64>,
}

impl RunRecord {
    pub fn had_timeout(&self) -> bool {
        !self.timed_out_components.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("run log is empty")]
    EmptyLog,
    #[error("run logs cover different query sequences")]
    Mismatched,
    #[error("run log schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean: f64,
    pub p50: f64,
    pub p75: f64,
    pub count: usize,
}

impl LatencySummary {
    pub fn of(values: &mut [f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Some(Self {
            mean,
            p50: percentile(values, 0.5),
            p75: percentile(values, 0.75),
            count: values.len(),
        })
    }
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Relative latency increase of one run over a baseline, per group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slowdown {
    pub unsampled: Option<f64>,
    pub sampled: Option<f64>,
    pub unsampled_p50: Option<f64>,
    pub unsampled_p75: Option<f64>,
    pub sampled_p50: Option<f64>,
    pub sampled_p75: Option<f64>,
}

impl RunLog {
    pub fn new(records: Vec<RunRecord>) -> Self {
        Self { records }
    }

    pub fn admitted(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| r.admitted)
    }

    /// Successful online executions over admitted queries.
    pub fn throughput(&self) -> Result<f64, MetricsError> {
        let admitted = self.admitted().count();
        if admitted == 0 {
            return Err(MetricsError::EmptyLog);
        }
        let ok = self
            .admitted()
            .filter(|r| matches!(r.mature, MatureOutcome::Success(_)))
            .count();
        Ok(ok as f64 / admitted as f64)
    }

    pub fn fraction_sampled(&self) -> f64 {
        let admitted = self.admitted().count();
        if admitted == 0 {
            return 0.0;
        }
        self.admitted().filter(|r| r.sampled).count() as f64 / admitted as f64
    }

    pub fn mature_counts(&self) -> (usize, usize) {
        let mut ok = 0;
        let mut failed = 0;
        for r in &self.records {
            match r.mature {
                MatureOutcome::Success(_) => ok += 1,
                MatureOutcome::Failed => failed += 1,
                MatureOutcome::NotSampled => {}
            }
        }
        (ok, failed)
    }

    pub fn mature_failure_rate(&self) -> f64 {
        let (ok, failed) = self.mature_counts();
        if ok + failed == 0 {
            0.0
        } else {
            failed as f64 / (ok + failed) as f64
        }
    }

    /// Fraction of admitted queries with at least one timed-out component.
    pub fn timeout_frequency(&self) -> f64 {
        let admitted = self.admitted().count();
        if admitted == 0 {
            return 0.0;
        }
        self.admitted().filter(|r| r.had_timeout()).count() as f64 / admitted as f64
    }

    pub fn mean_quality(&self) -> Option<f64> {
        let q: Vec<f64> = self.records.iter().filter_map(|r| r.quality).collect();
        (!q.is_empty()).then(|| q.iter().sum::<f64>() / q.len() as f64)
    }

    /// Slowdown of `self` against `baseline`, which must replay the same queries.
    /// Groups follow the sampling decision in `self`.
    pub fn slowdown(&self, baseline: &RunLog) -> Result<Slowdown, MetricsError> {
        if self.records.len() != baseline.records.len()
            || self
                .records
                .iter()
                .zip(&baseline.records)
                .any(|(a, b)| a.query_id != b.query_id || a.arrival != b.arrival)
        {
            return Err(MetricsError::Mismatched);
        }
        let mut groups: [(Vec<f64>, Vec<f64>); 2] = Default::default();
        for (a, b) in self.records.iter().zip(&baseline.records) {
            if let (Some(la), Some(lb)) = (a.online_latency, b.online_latency) {
                let g = &mut groups[a.sampled as usize];
                g.0.push(la.as_secs_f64());
                g.1.push(lb.as_secs_f64());
            }
        }
        let ratio = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(x), Some(y)) if y > 0.0 => Some(x / y - 1.0),
            _ => None,
        };
        let mut out = Slowdown {
            unsampled: None,
            sampled: None,
            unsampled_p50: None,
            unsampled_p75: None,
            sampled_p50: None,
            sampled_p75: None,
        };
        for (idx, (with, without)) in groups.iter_mut().enumerate() {
            let a = LatencySummary::of(with);
            let b = LatencySummary::of(without);
            let mean = ratio(a.map(|s| s.mean), b.map(|s| s.mean));
            let p50 = ratio(a.map(|s| s.p50), b.map(|s| s.p50));
            let p75 = ratio(a.map(|s| s.p75), b.map(|s| s.p75));
            if idx == 1 {
                (out.sampled, out.sampled_p50, out.sampled_p75) = (mean, p50, p75);
            } else {
                (out.unsampled, out.unsampled_p50, out.unsampled_p75) = (mean, p50, p75);
            }
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), MetricsError> {
        writeln!(out, "{SCHEMA_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(CsvRow::from(r))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, MetricsError> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        if first.trim_end() != SCHEMA_LINE {
            return Err(MetricsError::Schema(format!(
                "expected `{SCHEMA_LINE}`, found `{}`",
                first.trim_end()
            )));
        }
        let mut records = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize::<CsvRow>() {
            records.push(row?.try_into().map_err(MetricsError::Schema)?);
        }
        Ok(Self { records })
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    query_id: u64,
    priority: String,
    arrival_ns: u64,
    admitted: u8,
    sampled: u8,
    online_latency_ns: Option<u64>,
    mature_latency_ns: Option<u64>,
    mature_failed: u8,
    timed_out_components: String,
    quality: Option<f64>,
}

impl From<&RunRecord> for CsvRow {
    fn from(r: &RunRecord) -> Self {
        let (mature_latency_ns, mature_failed) = match r.mature {
            MatureOutcome::NotSampled => (None, 0),
            MatureOutcome::Success(t) => (Some(t.0), 0),
            MatureOutcome::Failed => (None, 1),
        };
        CsvRow {
            query_id: r.query_id,
            priority: r.priority.as_str().to_string(),
            arrival_ns: r.arrival.0,
            admitted: r.admitted as u8,
            sampled: r.sampled as u8,
            online_latency_ns: r.online_latency.map(|t| t.0),
            mature_latency_ns,
            mature_failed,
            timed_out_components: r
                .timed_out_components
                .iter()
                .map(|c| c.0.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            quality: r.quality,
        }
    }
}

impl TryFrom<CsvRow> for RunRecord {
    type Error = String;
    fn try_from(r: CsvRow) -> Result<Self, String> {
        let priority = Priority::parse(&r.priority).ok_or_else(|| format!("bad priority `{}`", r.priority))?;
        let mature = match (r.sampled, r.mature_latency_ns, r.mature_failed) {
            (_, _, 1) => MatureOutcome::Failed,
            (_, Some(t), _) => MatureOutcome::Success(Nanos(t)),
            _ => MatureOutcome::NotSampled,
        };
        let timed_out_components = r
            .timed_out_components
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map(ComponentId).map_err(|_| format!("bad component `{s}`")))
            .collect::<Result<_, _>>()?;
        Ok(RunRecord {
            query_id: r.query_id,
            priority,
            arrival: Nanos(r.arrival_ns),
            admitted: r.admitted != 0,
            sampled: r.sampled != 0,
            online_latency: r.online_latency_ns.map(Nanos),
            mature,
            timed_out_components,
            quality: r.quality,
        })
    }
}
