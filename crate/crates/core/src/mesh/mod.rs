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

//! The simulated service mesh: synthetic services, workload traces and the
//! discrete-event engine that runs them under each design mode.

pub mod engine;
pub mod profile;
pub mod service;
pub mod trace;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Section};
use crate::time::Nanos;

pub use engine::{run_mesh, EngineStats, MeshError, MeshInput, PhaseTiming, RunOutcome};
pub use profile::{profile_roles, ProfileMatrix, RoleAssignment};
pub use service::{
    ComponentSpec, MergeRule, RecommenderSpec, Role, Service, ServiceSpec, ServiceTimeModel, ShardedSearchSpec,
    TopologyOptions, Work,
};
pub use trace::{generate_trace, read_trace_csv, trace_hash, write_trace_csv, QueryClass, TraceError, TraceSpec};

/// The measurement designs that can be run against a service.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignMode {
    Ubora,
    UboraLowSamples,
    UboraNoOpt,
    QueryTagging,
    QueryTaggingCaching,
    TimeoutToggling,
    /// No measurement at all; the baseline for slowdown.
    Off,
}

/// Sampling-rate factor applied by the low-samples variant.
pub const LOW_SAMPLES_FACTOR: f64 = 0.25;

impl DesignMode {
    pub const ALL: [DesignMode; 7] = [
        DesignMode::Ubora,
        DesignMode::UboraLowSamples,
        DesignMode::UboraNoOpt,
        DesignMode::QueryTagging,
        DesignMode::QueryTaggingCaching,
        DesignMode::TimeoutToggling,
        DesignMode::Off,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DesignMode::Ubora => "ubora",
            DesignMode::UboraLowSamples => "ubora-low-samples",
            DesignMode::UboraNoOpt => "ubora-no-opt",
            DesignMode::QueryTagging => "query-tagging",
            DesignMode::QueryTaggingCaching => "query-tagging-caching",
            DesignMode::TimeoutToggling => "timeout-toggling",
            DesignMode::Off => "off",
        }
    }

    /// Replies are recorded and replayed from the memo cache.
    pub fn memoizes(self) -> bool {
        matches!(
            self,
            DesignMode::Ubora | DesignMode::UboraLowSamples | DesignMode::UboraNoOpt | DesignMode::QueryTaggingCaching
        )
    }

    /// Context travels in control datagrams rather than in the payload.
    pub fn uses_datagrams(self) -> bool {
        matches!(
            self,
            DesignMode::Ubora | DesignMode::UboraLowSamples | DesignMode::UboraNoOpt
        )
    }

    pub fn tags_payload(self) -> bool {
        matches!(self, DesignMode::QueryTagging | DesignMode::QueryTaggingCaching)
    }

    /// Contexts are broadcast to every component and reset explicitly.
    pub fn broadcasts(self) -> bool {
        self == DesignMode::UboraNoOpt
    }

    pub fn node_local_timeouts(self) -> bool {
        self != DesignMode::UboraNoOpt
    }

    pub fn samples(self) -> bool {
        self != DesignMode::Off
    }

    pub fn sample_factor(self) -> f64 {
        if self == DesignMode::UboraLowSamples {
            LOW_SAMPLES_FACTOR
        } else {
            1.0
        }
    }
}

impl FromStr for DesignMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        let mode = match norm.as_str() {
            "ubora" => DesignMode::Ubora,
            "ubora-low-samples" | "ubora-lowsamples" | "low-samples" => DesignMode::UboraLowSamples,
            "ubora-no-opt" | "ubora-noopt" | "no-opt" => DesignMode::UboraNoOpt,
            "query-tagging" | "tagging" => DesignMode::QueryTagging,
            "query-tagging-caching" | "tagging-caching" | "query-tagging+caching" => DesignMode::QueryTaggingCaching,
            "timeout-toggling" | "toggling" => DesignMode::TimeoutToggling,
            "off" | "none" | "baseline" => DesignMode::Off,
            other => return Err(format!("unknown mode `{other}`")),
        };
        Ok(mode)
    }
}

/// Network and interposition costs of the simulated mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub network_latency: Nanos,
    pub datagram_latency: Nanos,
    pub datagram_loss: f64,
    /// Worker time a component spends handling one control datagram.
    pub control_cost: Nanos,
    /// Worker time added per recorded reply frame.
    pub record_cost: Nanos,
    /// Latency of one replay lookup.
    pub cache_latency: Nanos,
    /// Fraction of the record timeout the front waits past the deadline.
    pub deadline_margin: f64,
    /// When set, a context is also mature-ready after this long without a cache write.
    pub settle_window: Option<Nanos>,
    /// Timeout multiplier while a toggled mature execution is running.
    pub toggle_factor: f64,
    /// Only high-priority queries are eligible for sampling.
    pub sample_high_only: bool,
    /// Replay reads the memo cache; when false every replayed call goes to a shadow connection.
    pub replay_from_cache: bool,
    /// Real-time pacing: wall seconds per simulated second.
    pub time_scale: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            network_latency: Nanos::from_micros(250),
            datagram_latency: Nanos::from_micros(250),
            datagram_loss: 0.0,
            control_cost: Nanos::from_millis(2),
            record_cost: Nanos::from_micros(500),
            cache_latency: Nanos::from_millis(1),
            deadline_margin: 0.05,
            settle_window: None,
            toggle_factor: 4.0,
            sample_high_only: false,
            replay_from_cache: true,
            time_scale: 1.0,
        }
    }
}

impl EngineConfig {
    pub fn from_section(s: &Section) -> Result<Self, ConfigError> {
        let d = EngineConfig::default();
        let dur = |key: &str, default: Nanos| -> Result<Nanos, ConfigError> {
            Ok(s.duration(key)?.map(Nanos::from_secs_f64).unwrap_or(default))
        };
        let c = EngineConfig {
            network_latency: dur("latency", d.network_latency)?,
            datagram_latency: dur("datagramLatency", d.datagram_latency)?,
            datagram_loss: s.parsed("datagramLoss")?.unwrap_or(d.datagram_loss),
            control_cost: dur("controlCost", d.control_cost)?,
            record_cost: dur("recordCost", d.record_cost)?,
            cache_latency: dur("cacheLatency", d.cache_latency)?,
            deadline_margin: s.parsed("deadlineMargin")?.unwrap_or(d.deadline_margin),
            settle_window: s.duration("settleWindow")?.map(Nanos::from_secs_f64),
            toggle_factor: s.parsed("toggleFactor")?.unwrap_or(d.toggle_factor),
            sample_high_only: s.parsed("sampleHighOnly")?.unwrap_or(d.sample_high_only),
            replay_from_cache: true,
            time_scale: s.parsed("timeScale")?.unwrap_or(d.time_scale),
        };
        if !(0.0..=1.0).contains(&c.datagram_loss) {
            return Err(ConfigError::invalid("datagramLoss must be in [0, 1]"));
        }
        if c.deadline_margin < 0.0 || c.toggle_factor < 1.0 || c.time_scale <= 0.0 {
            return Err(ConfigError::invalid(
                "deadlineMargin >= 0, toggleFactor >= 1, timeScale > 0 required",
            ));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in DesignMode::ALL {
            assert_eq!(m.as_str().parse::<DesignMode>().unwrap(), m);
        }
        assert!("bogus".parse::<DesignMode>().is_err());
    }

    #[test]
    fn mode_properties() {
        assert!(DesignMode::Ubora.memoizes() && DesignMode::Ubora.uses_datagrams());
        assert!(DesignMode::UboraNoOpt.broadcasts() && !DesignMode::UboraNoOpt.node_local_timeouts());
        assert!(DesignMode::QueryTaggingCaching.memoizes() && !DesignMode::QueryTaggingCaching.uses_datagrams());
        assert!(!DesignMode::QueryTagging.memoizes() && DesignMode::QueryTagging.tags_payload());
        assert!(!DesignMode::Off.samples());
        assert_eq!(DesignMode::UboraLowSamples.sample_factor(), LOW_SAMPLES_FACTOR);
    }
}
