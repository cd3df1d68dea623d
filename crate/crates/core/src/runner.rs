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

//! Experiment plumbing: plans, run artifacts, comparisons and the evaluation
//! helpers shared by the CLI and the experiment tests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

use crate::config::{ConfigError, RunConfig, SamplingRate, TimeMode};
use crate::controller::{write_controller_csv, ControllerConfig, ControllerKind};
use crate::mesh::{
    generate_trace, read_trace_csv, run_mesh, trace_hash, write_trace_csv, DesignMode, EngineConfig, MeshError,
    MeshInput, Role, RunOutcome, Service, TraceError, TraceSpec,
};
use crate::metrics::{MetricsError, RunLog};
use crate::model::{Priority, Query};
use crate::quality::write_quality_csv;
use crate::rng::RngSplitter;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNLOG_FILE: &str = "runlog.csv";
pub const QUALITY_FILE: &str = "quality.csv";
pub const CONTROLLER_FILE: &str = "controller.csv";
pub const TRACE_FILE: &str = "trace.csv";
const MANIFEST_SCHEMA: &str = "aqsim-run/1";

/// Fraction of failed mature executions above which a run counts as broken.
pub const FAILURE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("runs replay different traces: {0} has {1}, {2} has {3}")]
    TraceMismatch(String, String, String, String),
}

impl RunnerError {
    /// Problems the user can fix by editing the configuration or flags.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            RunnerError::Config(_) | RunnerError::Plan(_) | RunnerError::Trace(_)
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where the queries of a run come from.
#[derive(Clone, Debug, PartialEq)]
pub enum TraceSource {
    /// Generated from a spec with the run's `trace` random stream.
    Spec(TraceSpec),
    /// A recorded trace CSV.
    File(PathBuf),
}

/// One experiment: configuration, design mode, controller and where to write.
#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub config: RunConfig,
    pub mode: DesignMode,
    pub controller: ControllerKind,
    pub trace: TraceSource,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentPlan {
    /// A plan whose trace comes from the config's `trace:` section.
    pub fn new(config: RunConfig, mode: DesignMode, controller: ControllerKind) -> Result<Self, RunnerError> {
        let spec = TraceSpec::from_section(&config.section("trace"))?;
        Ok(Self {
            config,
            mode,
            controller,
            trace: TraceSource::Spec(spec),
            out_dir: None,
        })
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let sampling = match self.config.samples {
            SamplingRate::PerMinute(v) | SamplingRate::Fraction(v) => v,
        };
        if self.controller == ControllerKind::QualityPid && (self.mode == DesignMode::Off || sampling == 0.0) {
            return Err(RunnerError::Plan(format!(
                "controller {} needs sampled queries, but mode is {} with sampling {}",
                self.controller.as_str(),
                self.mode.as_str(),
                self.config.samples
            )));
        }
        if matches!(
            self.controller,
            ControllerKind::QualityPid | ControllerKind::TimeoutFreqPid
        ) {
            if let TraceSource::Spec(spec) = &self.trace {
                if spec.high_low_split >= 1.0 {
                    return Err(RunnerError::Plan(
                        "admission control needs low-priority queries; set trace highFraction below 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A built service, engine settings and query trace, ready to run under any
/// mode and controller.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: RunConfig,
    pub service: Service,
    pub engine: EngineConfig,
    pub controller_config: ControllerConfig,
    pub queries: Vec<Query>,
    pub trace_hash: String,
}

impl Experiment {
    pub fn from_config(config: &RunConfig) -> Result<Self, RunnerError> {
        let spec = TraceSpec::from_section(&config.section("trace"))?;
        Self::with_trace(config, &TraceSource::Spec(spec))
    }

    pub fn with_trace(config: &RunConfig, trace: &TraceSource) -> Result<Self, RunnerError> {
        let service = Service::from_config(config)?;
        let engine = EngineConfig::from_section(&config.section("engine"))?;
        let controller_config = ControllerConfig::from_section(&config.section("controller"))?;
        let queries = match trace {
            TraceSource::Spec(spec) => {
                let mut rng = RngSplitter::new(config.rng_seed).stream("trace");
                generate_trace(spec, &mut rng)?
            }
            TraceSource::File(path) => read_trace_csv(File::open(path).map_err(io_err(path))?)?,
        };
        Ok(Self::from_parts(
            config.clone(),
            service,
            engine,
            controller_config,
            queries,
        ))
    }

    pub fn from_parts(
        config: RunConfig,
        service: Service,
        engine: EngineConfig,
        controller_config: ControllerConfig,
        queries: Vec<Query>,
    ) -> Self {
        let trace_hash = trace_hash(&queries);
        Self {
            config,
            service,
            engine,
            controller_config,
            queries,
            trace_hash,
        }
    }

    pub fn run(&self, mode: DesignMode, controller: ControllerKind) -> Result<RunOutcome, RunnerError> {
        self.run_with(mode, controller, &self.controller_config)
    }

    pub fn run_with(
        &self,
        mode: DesignMode,
        controller: ControllerKind,
        controller_config: &ControllerConfig,
    ) -> Result<RunOutcome, RunnerError> {
        Ok(run_mesh(&MeshInput {
            config: &self.config,
            service: &self.service,
            mode,
            controller,
            controller_config: controller_config.clone(),
            engine: self.engine.clone(),
            queries: &self.queries,
        })?)
    }

    /// The same experiment at another sampling rate.
    pub fn with_samples(&self, samples: SamplingRate) -> Self {
        Self {
            config: self.config.clone().with_samples(samples),
            ..self.clone()
        }
    }

    /// Mean busy fraction of the back-end components over a run.
    pub fn back_utilization(&self, outcome: &RunOutcome) -> f64 {
        let backs: Vec<f64> = self
            .service
            .components()
            .iter()
            .zip(&outcome.stats.utilization)
            .filter(|(c, _)| c.role == Role::Back)
            .map(|(_, &u)| u)
            .collect();
        if backs.is_empty() {
            0.0
        } else {
            backs.iter().sum::<f64>() / backs.len() as f64
        }
    }
}

/// Headline numbers of one run, stored in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub queries: usize,
    pub admitted: usize,
    pub low_admitted: usize,
    pub sampled: usize,
    pub mature_success: usize,
    pub mature_failed: usize,
    pub throughput: Option<f64>,
    pub mature_failure_rate: f64,
    pub mean_quality: Option<f64>,
    pub timeout_frequency: f64,
    pub wire_digest: String,
}

impl RunSummary {
    pub fn of(outcome: &RunOutcome) -> Self {
        let log = &outcome.log;
        let (ok, failed) = log.mature_counts();
        Self {
            queries: log.records.len(),
            admitted: log.admitted().count(),
            low_admitted: low_admitted(log),
            sampled: log.admitted().filter(|r| r.sampled).count(),
            mature_success: ok,
            mature_failed: failed,
            throughput: log.throughput().ok(),
            mature_failure_rate: log.mature_failure_rate(),
            mean_quality: log.mean_quality(),
            timeout_frequency: log.timeout_frequency(),
            wire_digest: format!("{:032x}", outcome.stats.wire_digest),
        }
    }

    /// More than half of the mature executions failed.
    pub fn failed_threshold(&self) -> bool {
        self.mature_failure_rate > FAILURE_THRESHOLD
    }
}

/// Everything needed to re-run an experiment exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub mode: String,
    pub controller: String,
    pub service: String,
    pub seed: u64,
    pub time_mode: String,
    pub config_hash: String,
    pub trace_hash: String,
    /// Canonical configuration document.
    pub config: String,
    pub summary: RunSummary,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, RunnerError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| RunnerError::Artifact {
            path,
            message: e.to_string(),
        })
    }
}

pub fn config_hash(config: &RunConfig) -> String {
    format!("{:016x}", xxh3_64(config.document().render().as_bytes()))
}

pub fn low_admitted(log: &RunLog) -> usize {
    log.admitted().filter(|r| r.priority == Priority::Low).count()
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunReport {
    pub manifest: Manifest,
    pub outcome: RunOutcome,
}

/// Runs a plan and, when it has an output directory, writes the manifest,
/// run log, quality trace, controller trace and query trace there.
pub fn run(plan: &ExperimentPlan) -> Result<RunReport, RunnerError> {
    plan.validate()?;
    let exp = Experiment::with_trace(&plan.config, &plan.trace)?;
    let outcome = exp.run(plan.mode, plan.controller)?;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        mode: plan.mode.as_str().to_string(),
        controller: plan.controller.as_str().to_string(),
        service: exp.service.spec().name().to_string(),
        seed: plan.config.rng_seed,
        time_mode: match plan.config.time_mode {
            TimeMode::Virtual => "virtual",
            TimeMode::Real => "real",
        }
        .to_string(),
        config_hash: config_hash(&plan.config),
        trace_hash: exp.trace_hash.clone(),
        config: plan.config.document().render(),
        summary: RunSummary::of(&outcome),
    };
    if let Some(dir) = &plan.out_dir {
        write_artifacts(dir, &manifest, &outcome, &exp.queries)?;
    }
    Ok(RunReport { manifest, outcome })
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), RunnerError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(io_err(&path))?;
    Ok((path, BufWriter::new(f)))
}

fn artifact_err(path: &Path, e: impl ToString) -> RunnerError {
    RunnerError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_artifacts(
    dir: &Path,
    manifest: &Manifest,
    outcome: &RunOutcome,
    queries: &[Query],
) -> Result<(), RunnerError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let (path, mut w) = create(dir, MANIFEST_FILE)?;
    serde_json::to_writer_pretty(&mut w, manifest).map_err(|e| artifact_err(&path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))?;

    let (path, w) = create(dir, RUNLOG_FILE)?;
    outcome.log.write_csv(w).map_err(|e| artifact_err(&path, e))?;

    let (path, w) = create(dir, QUALITY_FILE)?;
    write_quality_csv(w, &outcome.quality_rows).map_err(|e| artifact_err(&path, e))?;

    let (path, w) = create(dir, CONTROLLER_FILE)?;
    write_controller_csv(w, &outcome.controller_rows).map_err(|e| artifact_err(&path, e))?;

    let (path, w) = create(dir, TRACE_FILE)?;
    write_trace_csv(w, queries).map_err(|e| artifact_err(&path, e))?;
    Ok(())
}

/// One row of a side-by-side comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub run: String,
    pub mode: String,
    pub controller: String,
    pub throughput: Option<f64>,
    /// Throughput of the first run divided by this run's.
    pub gain: f64,
    pub unsampled_slowdown: Option<f64>,
    pub sampled_slowdown: Option<f64>,
    pub mean_quality: Option<f64>,
    pub low_admitted: usize,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        a / b
    }
}

/// Compares runs written by [`run`]. Slowdown is against the first run.
pub fn compare(dirs: &[PathBuf]) -> Result<Vec<CompareRow>, RunnerError> {
    if dirs.len() < 2 {
        return Err(RunnerError::Plan("compare needs at least two run directories".into()));
    }
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let manifest = Manifest::read(dir)?;
        let path = dir.join(RUNLOG_FILE);
        let log = RunLog::read_csv(File::open(&path).map_err(io_err(&path))?)?;
        runs.push((dir.display().to_string(), manifest, log));
    }
    let (first_name, first, first_log) = &runs[0];
    let base = first.summary.throughput.unwrap_or(0.0);
    let mut rows = Vec::with_capacity(runs.len());
    for (name, m, log) in &runs {
        if m.trace_hash != first.trace_hash {
            return Err(RunnerError::TraceMismatch(
                first_name.clone(),
                first.trace_hash.clone(),
                name.clone(),
                m.trace_hash.clone(),
            ));
        }
        let sd = log.slowdown(first_log)?;
        rows.push(CompareRow {
            run: name.clone(),
            mode: m.mode.clone(),
            controller: m.controller.clone(),
            throughput: m.summary.throughput,
            gain: ratio(base, m.summary.throughput.unwrap_or(0.0)),
            unsampled_slowdown: sd.unsampled,
            sampled_slowdown: sd.sampled,
            mean_quality: m.summary.mean_quality,
            low_admitted: m.summary.low_admitted,
        });
    }
    Ok(rows)
}

pub fn write_compare_csv<W: Write>(out: W, rows: &[CompareRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Number of high-priority arrivals per evaluation window.
pub const WINDOW_BLOCK: usize = 100;

/// Answer quality per evaluation window: the mean TPR of every high-priority
/// online answer against the no-timeout reference, in blocks of arrivals.
/// Trailing partial blocks are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowReport {
    pub windows: Vec<f64>,
    pub floor: f64,
}

impl WindowReport {
    pub fn of(outcome: &RunOutcome, block: usize, floor: f64) -> Self {
        let mut windows = Vec::new();
        let mut acc = 0.0;
        let mut n = 0;
        for (r, q) in outcome.log.records.iter().zip(&outcome.oracle_quality) {
            if r.priority != Priority::High {
                continue;
            }
            acc += q.unwrap_or(0.0);
            n += 1;
            if n == block {
                windows.push(acc / block as f64);
                acc = 0.0;
                n = 0;
            }
        }
        Self { windows, floor }
    }

    pub fn violated(&self) -> usize {
        self.windows.iter().filter(|&&w| w < self.floor).count()
    }

    /// Fraction of windows at or above the floor; 1 when there are none.
    pub fn good_fraction(&self) -> f64 {
        if self.windows.is_empty() {
            1.0
        } else {
            1.0 - self.violated() as f64 / self.windows.len() as f64
        }
    }

    pub fn min(&self) -> Option<f64> {
        self.windows.iter().copied().reduce(f64::min)
    }
}

/// One point of a setpoint sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetpointTrial {
    pub setpoint: f64,
    pub good_fraction: f64,
    pub violated: usize,
    pub min_window: Option<f64>,
    pub low_admitted: usize,
}

/// Runs `kind` at each setpoint and returns every trial plus the index of the
/// one admitting the most low-priority queries while keeping at least
/// `required` of the windows at or above `floor`.
pub fn tune_setpoint(
    exp: &Experiment,
    mode: DesignMode,
    kind: ControllerKind,
    grid: &[f64],
    floor: f64,
    required: f64,
) -> Result<(Vec<SetpointTrial>, Option<usize>), RunnerError> {
    let mut trials = Vec::with_capacity(grid.len());
    for &setpoint in grid {
        let cc = ControllerConfig {
            target_quality: setpoint,
            ..exp.controller_config.clone()
        };
        let out = exp.run_with(mode, kind, &cc)?;
        let w = WindowReport::of(&out, WINDOW_BLOCK, floor);
        trials.push(SetpointTrial {
            setpoint,
            good_fraction: w.good_fraction(),
            violated: w.violated(),
            min_window: w.min(),
            low_admitted: low_admitted(&out.log),
        });
    }
    let best = trials
        .iter()
        .enumerate()
        .filter(|(_, t)| t.good_fraction >= required)
        .max_by_key(|(_, t)| t.low_admitted)
        .map(|(i, _)| i);
    Ok((trials, best))
}

/// `lo, lo + step, ...` up to `hi` inclusive, rounded to avoid drift.
pub fn setpoint_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "grid step must be positive");
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6).collect()
}

/// Bisects the trace's arrival rate until the back ends run at `target`
/// utilization with measurement off. Returns the rate and the utilization it
/// achieved.
pub fn calibrate_rate(
    config: &RunConfig,
    spec: &TraceSpec,
    target: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(f64, f64), RunnerError> {
    if !(0.0 < target && target < 1.0) {
        return Err(RunnerError::Plan(format!("utilization target {target} outside (0, 1)")));
    }
    let measure = |rate: f64| -> Result<f64, RunnerError> {
        let spec = TraceSpec {
            base_arrival_rate: rate,
            ..spec.clone()
        };
        let exp = Experiment::with_trace(config, &TraceSource::Spec(spec))?;
        let out = exp.run(DesignMode::Off, ControllerKind::None)?;
        Ok(exp.back_utilization(&out))
    };
    let mut lo = 0.0;
    let mut hi = spec.base_arrival_rate.max(1.0);
    let mut u_hi = measure(hi)?;
    while u_hi < target {
        lo = hi;
        hi *= 2.0;
        u_hi = measure(hi)?;
        if hi > 1e7 {
            return Err(RunnerError::Plan("utilization target unreachable".into()));
        }
    }
    let (mut best, mut best_u) = (hi, u_hi);
    for _ in 0..max_iterations {
        if (best_u - target).abs() <= tolerance {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let u = measure(mid)?;
        if (u - target).abs() < (best_u - target).abs() {
            (best, best_u) = (mid, u);
        }
        if u < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((best, best_u))
}

/// One cell of a role/sampling profile.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileRow {
    pub assignment: String,
    pub sampling: String,
    pub mode: String,
    pub throughput: Option<f64>,
}

/// Throughput for every middle-tier role assignment and sampling rate.
pub fn profile(exp: &Experiment, rates: &[SamplingRate], modes: &[DesignMode]) -> Result<Vec<ProfileRow>, RunnerError> {
    let assignments: Vec<_> = [Role::Front, Role::Middle, Role::Back]
        .into_iter()
        .map(|r| crate::mesh::RoleAssignment::uniform(&exp.service, r))
        .collect();
    let mut rows = Vec::new();
    for &rate in rates {
        let e = exp.with_samples(rate);
        let m = crate::mesh::profile_roles(&e.config, &e.service, &e.engine, &e.queries, &assignments, modes)?;
        for (a, name) in m.assignments.iter().enumerate() {
            for (i, mode) in m.modes.iter().enumerate() {
                rows.push(ProfileRow {
                    assignment: name.clone(),
                    sampling: rate.to_string(),
                    mode: mode.as_str().to_string(),
                    throughput: m.values[a][i],
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_rows_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    const SMALL: &str = "IPAddresses\n- front: 10.0.0.1:80\n- back: 10.1.0.*:1064\nsamples: 20%\nrecordTimeout: 2 seconds\nrngSeed: 3\ntrace:\n  duration: 5 seconds\n  rate: 40\n";

    fn small() -> RunConfig {
        parse_config(SMALL).unwrap()
    }

    #[test]
    fn grid_is_inclusive() {
        assert_eq!(setpoint_grid(0.3, 0.5, 0.1), vec![0.3, 0.4, 0.5]);
        assert_eq!(setpoint_grid(0.3, 0.5, 0.02).len(), 11);
        assert_eq!(setpoint_grid(0.5, 0.5, 0.02), vec![0.5]);
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(ratio(0.0, 0.0), 1.0);
        assert_eq!(ratio(0.2, 0.1), 2.0);
        assert!(ratio(0.2, 0.0).is_infinite());
    }

    #[test]
    fn quality_controller_needs_samples() {
        let cfg = small().with_samples(SamplingRate::Fraction(0.0));
        let plan = ExperimentPlan::new(cfg, DesignMode::Ubora, ControllerKind::QualityPid).unwrap();
        assert!(matches!(plan.validate(), Err(RunnerError::Plan(_))));
        let plan = ExperimentPlan::new(small(), DesignMode::Off, ControllerKind::QualityPid).unwrap();
        assert!(plan.validate().unwrap_err().is_config());
    }

    #[test]
    fn controller_needs_low_priority_traffic() {
        let plan = ExperimentPlan::new(small(), DesignMode::Ubora, ControllerKind::TimeoutFreqPid).unwrap();
        assert!(plan.validate().is_err());
        assert!(ExperimentPlan::new(small(), DesignMode::Ubora, ControllerKind::None)
            .unwrap()
            .validate()
            .is_ok());
    }

    #[test]
    fn windows_use_high_priority_blocks() {
        let exp = Experiment::from_config(&small()).unwrap();
        let out = exp.run(DesignMode::Off, ControllerKind::None).unwrap();
        let w = WindowReport::of(&out, 10, 0.9);
        assert_eq!(w.windows.len(), out.log.records.len() / 10);
        assert!(w.windows.iter().all(|q| (0.0..=1.0).contains(q)));
        assert_eq!(
            WindowReport {
                windows: vec![],
                floor: 0.9
            }
            .good_fraction(),
            1.0
        );
        let w = WindowReport {
            windows: vec![0.95, 0.5, 0.9],
            floor: 0.9,
        };
        assert_eq!(w.violated(), 1);
        assert_eq!(w.min(), Some(0.5));
    }

    #[test]
    fn summary_counts_are_consistent() {
        let exp = Experiment::from_config(&small()).unwrap();
        let out = exp.run(DesignMode::Ubora, ControllerKind::None).unwrap();
        let s = RunSummary::of(&out);
        assert_eq!(s.queries, exp.queries.len());
        assert_eq!(s.admitted, s.queries);
        assert_eq!(s.mature_success + s.mature_failed, s.sampled);
        assert!(!s.failed_threshold());
    }
}
