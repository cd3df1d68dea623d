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

use aqsim::config::{parse_config, RunConfig};
use aqsim::controller::ControllerKind;
use aqsim::mesh::DesignMode;
use aqsim::metrics::MatureOutcome;
use aqsim::runner::{Experiment, RunSummary};
use proptest::prelude::*;

fn config(body: &str) -> RunConfig {
    parse_config(&format!(
        "IPAddresses\n- front: 10.0.0.1\n- back: 10.0.0.2\nrecordTimeout: 2 seconds\n{body}"
    ))
    .unwrap()
}

fn small(seed: u64, samples: &str) -> Experiment {
    Experiment::from_config(&config(&format!(
        "samples: {samples}\nrngSeed: {seed}\ntrace:\n  duration: 4 seconds\n  rate: 30\n"
    )))
    .unwrap()
}

const ALL_MODES: [DesignMode; 7] = [
    DesignMode::Ubora,
    DesignMode::UboraLowSamples,
    DesignMode::UboraNoOpt,
    DesignMode::QueryTagging,
    DesignMode::QueryTaggingCaching,
    DesignMode::TimeoutToggling,
    DesignMode::Off,
];

#[test]
fn runs_are_deterministic() {
    let exp = small(5, "40%");
    let a = exp.run(DesignMode::Ubora, ControllerKind::None).unwrap();
    let b = exp.run(DesignMode::Ubora, ControllerKind::None).unwrap();
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.log, b.log);
    let c = small(6, "40%").run(DesignMode::Ubora, ControllerKind::None).unwrap();
    assert_ne!(a.stats.wire_digest, c.stats.wire_digest);
}

#[test]
fn off_mode_measures_nothing() {
    let out = small(3, "50%").run(DesignMode::Off, ControllerKind::None).unwrap();
    assert_eq!(out.stats.sampled, 0);
    assert_eq!(out.stats.datagrams_sent, 0);
    assert_eq!(out.stats.cache.appends, 0);
    assert!(out
        .log
        .records
        .iter()
        .all(|r| !r.sampled && r.mature == MatureOutcome::NotSampled));
    assert!(out.phases.is_empty());
}

#[test]
fn every_mode_leaves_no_context_behind() {
    let exp = small(9, "50%");
    for mode in ALL_MODES {
        let out = exp.run(mode, ControllerKind::None).unwrap();
        assert_eq!(out.stats.residual_contexts, 0, "{mode:?}");
        assert_eq!(out.stats.audit_violations, 0, "{mode:?}");
        let s = RunSummary::of(&out);
        assert_eq!(s.mature_success + s.mature_failed, s.sampled, "{mode:?}");
        assert_eq!(s.admitted, s.queries, "{mode:?}");
    }
}

#[test]
fn low_samples_samples_less() {
    let exp = small(4, "60%");
    let full = exp.run(DesignMode::Ubora, ControllerKind::None).unwrap();
    let low = exp.run(DesignMode::UboraLowSamples, ControllerKind::None).unwrap();
    assert!(
        low.stats.sampled * 2 < full.stats.sampled,
        "{} vs {}",
        low.stats.sampled,
        full.stats.sampled
    );
}

#[test]
fn broadcast_control_sends_more_datagrams() {
    let exp = small(8, "30%");
    let scoped = exp.run(DesignMode::Ubora, ControllerKind::None).unwrap();
    let broadcast = exp.run(DesignMode::UboraNoOpt, ControllerKind::None).unwrap();
    let sent = |u: &[(u64, usize)]| u.iter().map(|&(n, _)| n).sum::<u64>();
    assert!(sent(&broadcast.control_usage) > sent(&scoped.control_usage));
    let per = |o: &aqsim::mesh::RunOutcome| o.stats.datagrams_sent as f64 / o.stats.sampled.max(1) as f64;
    assert!(per(&broadcast) > per(&scoped));
}

#[test]
fn tagging_without_cache_never_touches_the_cache() {
    let out = small(2, "50%")
        .run(DesignMode::QueryTagging, ControllerKind::None)
        .unwrap();
    assert_eq!(out.stats.cache.appends, 0);
    assert!(out.stats.sampled > 0);
    let cached = small(2, "50%")
        .run(DesignMode::QueryTaggingCaching, ControllerKind::None)
        .unwrap();
    assert!(cached.stats.cache.appends > 0);
}

#[test]
fn admission_without_controller_keeps_everything() {
    let out = small(1, "10%")
        .run(DesignMode::Ubora, ControllerKind::FullSharing)
        .unwrap();
    assert!(out.log.records.iter().all(|r| r.admitted));
    assert!(out.log.records.iter().all(|r| r.online_latency.is_some()));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn outcome_invariants_hold(seed in 0u64..10_000, pct in 0u32..=100, mode_ix in 0usize..ALL_MODES.len()) {
        let mode = ALL_MODES[mode_ix];
        let out = small(seed, &format!("{pct}%")).run(mode, ControllerKind::None).unwrap();
        let s = RunSummary::of(&out);
        prop_assert_eq!(s.mature_success + s.mature_failed, s.sampled);
        prop_assert_eq!(out.stats.residual_contexts, 0);
        prop_assert!(out.stats.cache_peak_bytes >= out.stats.cache.appends.min(1));
        for q in out.oracle_quality.iter().flatten() {
            prop_assert!((0.0..=1.0).contains(q));
        }
        for u in &out.stats.utilization {
            prop_assert!((0.0..=1.0 + 1e-9).contains(u));
        }
        let mut last = None;
        for r in &out.log.records {
            prop_assert!(last.is_none_or(|t| t <= r.arrival));
            last = Some(r.arrival);
            if let MatureOutcome::Success(_) = r.mature {
                prop_assert!(r.sampled);
            }
        }
        if pct == 0 || mode == DesignMode::Off {
            prop_assert_eq!(s.sampled, 0);
        }
    }
}
