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

//! C ABI over the aqsim toolkit.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_parse`
//! and released by the matching `*_free`. Every fallible call returns an
//! [`AqsimStatus`]; on failure a message is kept per thread and can be read
//! with [`aqsim_last_error_message`]. Panics never unwind into the caller.
//!
//! Handles are not synchronized: use one handle from one thread at a time.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use aqsim::cache::{CacheConfig, CacheError, MemoCache};
use aqsim::config::{parse_config, RunConfig, SamplingRate};
use aqsim::controller::{AdmissionController, ControllerConfig, ControllerKind};
use aqsim::mesh::DesignMode;
use aqsim::model::{Answer, AnswerKind, ContextId, Priority};
use aqsim::quality::true_positive_rate;
use aqsim::rng::{RngSplitter, SimRng};
use aqsim::runner::{self, ExperimentPlan, RunnerError};
use aqsim::time::Nanos;
use aqsim::transport::CacheKey;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AqsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    InvalidArgument = 4,
    CapacityExceeded = 5,
    NotFound = 6,
    BufferTooSmall = 7,
    RunFailed = 8,
    Panic = 99,
}

/// Admission controller kinds, passed as `uint32_t`.
#[repr(u32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AqsimControllerKind {
    None = 0,
    QualityPid = 1,
    TimeoutFreqPid = 2,
    NoSharing = 3,
    FullSharing = 4,
}

/// Query priorities, passed as `uint32_t`.
#[repr(u32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AqsimPriority {
    Low = 0,
    High = 1,
}

/// Controller tuning. Fill with [`aqsim_controller_params_default`] first.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AqsimControllerParams {
    pub target: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
    pub evaluation_interval: u64,
    pub quality_window: u64,
}

/// Headline numbers of a run. Undefined ratios are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AqsimRunSummary {
    pub queries: u64,
    pub admitted: u64,
    pub low_admitted: u64,
    pub sampled: u64,
    pub mature_success: u64,
    pub mature_failed: u64,
    pub throughput: f64,
    pub mature_failure_rate: f64,
    pub mean_quality: f64,
    pub timeout_frequency: f64,
}

/// A parsed run configuration.
pub struct AqsimConfig {
    inner: RunConfig,
}

/// A memo cache of recorded replies.
pub struct AqsimCache {
    inner: MemoCache,
}

/// An admission controller with its own random stream.
pub struct AqsimController {
    inner: AdmissionController,
    rng: SimRng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (AqsimStatus, String);

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AqsimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AqsimStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            AqsimStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (AqsimStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (AqsimStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn key_of(hi: u64, lo: u64) -> CacheKey {
    CacheKey(((hi as u128) << 64) | lo as u128)
}

fn invalid(msg: impl Into<String>) -> Failure {
    (AqsimStatus::InvalidArgument, msg.into())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aqsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of this thread's last error message, 0 if none.
#[no_mangle]
pub extern "C" fn aqsim_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |m| m.as_bytes().len()))
}

/// Copies this thread's last error message into `buf` (truncated to
/// `capacity - 1` bytes, always NUL-terminated when `capacity > 0`).
/// Returns the full message length.
#[no_mangle]
pub unsafe extern "C" fn aqsim_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |m| m.as_bytes());
        if !buf.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Parses a configuration document.
#[no_mangle]
pub unsafe extern "C" fn aqsim_config_parse(text: *const c_char, out: *mut *mut AqsimConfig) -> AqsimStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let inner = parse_config(text).map_err(|e| (AqsimStatus::ConfigError, e.to_string()))?;
        *out = Box::into_raw(Box::new(AqsimConfig { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aqsim_config_free(config: *mut AqsimConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

#[no_mangle]
pub unsafe extern "C" fn aqsim_config_set_seed(config: *mut AqsimConfig, seed: u64) -> AqsimStatus {
    guard(|| {
        let c = handle_mut(config, "config")?;
        c.inner = c.inner.clone().with_seed(seed);
        Ok(())
    })
}

/// Overrides the sampling rate, e.g. `"20%"` or `"8 per minute"`.
#[no_mangle]
pub unsafe extern "C" fn aqsim_config_set_samples(config: *mut AqsimConfig, samples: *const c_char) -> AqsimStatus {
    guard(|| {
        let c = handle_mut(config, "config")?;
        let s = str_arg(samples, "samples")?;
        let rate =
            SamplingRate::parse(s).ok_or_else(|| (AqsimStatus::ConfigError, format!("bad sampling rate `{s}`")))?;
        c.inner = c.inner.clone().with_samples(rate);
        Ok(())
    })
}

/// True positive rate of an online answer against a mature one, both given
/// as item ids. Duplicate ids are an error.
#[no_mangle]
pub unsafe extern "C" fn aqsim_tpr(
    online: *const u64,
    online_len: usize,
    mature: *const u64,
    mature_len: usize,
    out: *mut f64,
) -> AqsimStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let online = slice_arg(online, online_len, "online")?;
        let mature = slice_arg(mature, mature_len, "mature")?;
        let a = Answer::from_ids(online, AnswerKind::Online).map_err(|e| invalid(e.to_string()))?;
        let b = Answer::from_ids(mature, AnswerKind::Mature).map_err(|e| invalid(e.to_string()))?;
        *out = true_positive_rate(&a, &b);
        Ok(())
    })
}

/// Creates a cache holding at most `capacity_bytes` whose entries live `ttl_ns`.
#[no_mangle]
pub unsafe extern "C" fn aqsim_cache_new(capacity_bytes: u64, ttl_ns: u64, out: *mut *mut AqsimCache) -> AqsimStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if capacity_bytes == 0 || ttl_ns == 0 {
            return Err(invalid("capacity and ttl must be positive"));
        }
        let inner = MemoCache::new(CacheConfig {
            capacity_bytes,
            ttl: Nanos(ttl_ns),
            per_context_limit: None,
        });
        *out = Box::into_raw(Box::new(AqsimCache { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aqsim_cache_free(cache: *mut AqsimCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}

/// Appends one reply under the 128-bit key `(key_hi, key_lo)`. On
/// `CapacityExceeded` the whole entry for the key has been dropped.
#[no_mangle]
pub unsafe extern "C" fn aqsim_cache_append(
    cache: *const AqsimCache,
    key_hi: u64,
    key_lo: u64,
    context: u64,
    data: *const u8,
    len: usize,
    now_ns: u64,
) -> AqsimStatus {
    guard(|| {
        let c = handle(cache, "cache")?;
        let data = slice_arg(data, len, "data")?;
        c.inner
            .put_append(key_of(key_hi, key_lo), ContextId(context), data, Nanos(now_ns))
            .map_err(|e| match e {
                CacheError::CapacityExceeded(_) | CacheError::ContextLimitExceeded(_) => {
                    (AqsimStatus::CapacityExceeded, e.to_string())
                }
            })
    })
}

/// Number of replies recorded under the key; 0 when absent or expired.
#[no_mangle]
pub unsafe extern "C" fn aqsim_cache_reply_count(
    cache: *const AqsimCache,
    key_hi: u64,
    key_lo: u64,
    now_ns: u64,
    out: *mut usize,
) -> AqsimStatus {
    guard(|| {
        let c = handle(cache, "cache")?;
        let out = out_arg(out, "out")?;
        *out = c
            .inner
            .get_all(key_of(key_hi, key_lo), Nanos(now_ns))
            .map_or(0, |r| r.len());
        Ok(())
    })
}

/// Copies reply `index` of the key into `buf`. `out_len` always receives the
/// reply's length; `BufferTooSmall` is returned if it exceeds `capacity`.
#[no_mangle]
pub unsafe extern "C" fn aqsim_cache_copy_reply(
    cache: *const AqsimCache,
    key_hi: u64,
    key_lo: u64,
    now_ns: u64,
    index: usize,
    buf: *mut u8,
    capacity: usize,
    out_len: *mut usize,
) -> AqsimStatus {
    guard(|| {
        let c = handle(cache, "cache")?;
        let out_len = out_arg(out_len, "out_len")?;
        let replies = c
            .inner
            .get_all(key_of(key_hi, key_lo), Nanos(now_ns))
            .ok_or_else(|| (AqsimStatus::NotFound, "no live entry for key".to_string()))?;
        let reply = replies
            .get(index)
            .ok_or_else(|| (AqsimStatus::NotFound, format!("reply {index} of {}", replies.len())))?;
        *out_len = reply.len();
        if reply.len() > capacity {
            return Err((AqsimStatus::BufferTooSmall, format!("need {} bytes", reply.len())));
        }
        if !reply.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(reply.as_ptr(), buf, reply.len());
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aqsim_cache_used_bytes(cache: *const AqsimCache, out: *mut u64) -> AqsimStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(cache, "cache")?.inner.used_bytes();
        Ok(())
    })
}

/// Drops expired entries; `removed` (nullable) receives how many.
#[no_mangle]
pub unsafe extern "C" fn aqsim_cache_evict_expired(
    cache: *const AqsimCache,
    now_ns: u64,
    removed: *mut usize,
) -> AqsimStatus {
    guard(|| {
        let n = handle(cache, "cache")?.inner.evict_expired(Nanos(now_ns));
        if let Some(r) = removed.as_mut() {
            *r = n;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aqsim_controller_params_default(out: *mut AqsimControllerParams) -> AqsimStatus {
    guard(|| {
        let d = ControllerConfig::default();
        *out_arg(out, "out")? = AqsimControllerParams {
            target: d.target_quality,
            kp: d.kp,
            ki: d.ki,
            kd: d.kd,
            integral_limit: d.integral_limit,
            evaluation_interval: d.evaluation_interval,
            quality_window: d.quality_window as u64,
        };
        Ok(())
    })
}

fn controller_kind(kind: u32) -> Result<ControllerKind, Failure> {
    Ok(match kind {
        0 => ControllerKind::None,
        1 => ControllerKind::QualityPid,
        2 => ControllerKind::TimeoutFreqPid,
        3 => ControllerKind::NoSharing,
        4 => ControllerKind::FullSharing,
        other => return Err(invalid(format!("unknown controller kind {other}"))),
    })
}

/// Creates an admission controller; `kind` is an [`AqsimControllerKind`].
#[no_mangle]
pub unsafe extern "C" fn aqsim_controller_new(
    kind: u32,
    params: *const AqsimControllerParams,
    seed: u64,
    out: *mut *mut AqsimController,
) -> AqsimStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let kind = controller_kind(kind)?;
        let p = handle(params, "params")?;
        if p.evaluation_interval == 0 || p.quality_window == 0 || !(0.0..=1.0).contains(&p.target) {
            return Err(invalid("interval and window must be positive, target in [0, 1]"));
        }
        let cfg = ControllerConfig {
            target_quality: p.target,
            kp: p.kp,
            ki: p.ki,
            kd: p.kd,
            integral_limit: p.integral_limit,
            evaluation_interval: p.evaluation_interval,
            quality_window: p.quality_window as usize,
        };
        *out = Box::into_raw(Box::new(AqsimController {
            inner: AdmissionController::new(kind, &cfg),
            rng: RngSplitter::new(seed).stream("admission"),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aqsim_controller_free(controller: *mut AqsimController) {
    if !controller.is_null() {
        drop(Box::from_raw(controller));
    }
}

/// Feeds one answer-quality sample in [0, 1].
#[no_mangle]
pub unsafe extern "C" fn aqsim_controller_observe_quality(controller: *mut AqsimController, score: f64) -> AqsimStatus {
    guard(|| {
        let c = handle_mut(controller, "controller")?;
        if !(0.0..=1.0).contains(&score) {
            return Err(invalid(format!("score {score} outside [0, 1]")));
        }
        c.inner.observe_quality(score);
        Ok(())
    })
}

/// Feeds one completed online execution.
#[no_mangle]
pub unsafe extern "C" fn aqsim_controller_observe_online(
    controller: *mut AqsimController,
    had_timeout: bool,
) -> AqsimStatus {
    guard(|| {
        handle_mut(controller, "controller")?.inner.observe_online(had_timeout);
        Ok(())
    })
}

/// Admission decision for an arriving query; `priority` is an [`AqsimPriority`].
#[no_mangle]
pub unsafe extern "C" fn aqsim_controller_admit(
    controller: *mut AqsimController,
    priority: u32,
    now_ns: u64,
    admitted: *mut bool,
) -> AqsimStatus {
    guard(|| {
        let c = handle_mut(controller, "controller")?;
        let out = out_arg(admitted, "admitted")?;
        let priority = match priority {
            0 => Priority::Low,
            1 => Priority::High,
            other => return Err(invalid(format!("unknown priority {other}"))),
        };
        *out = c.inner.on_arrival(priority, &mut c.rng, Nanos(now_ns));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aqsim_controller_shed_probability(
    controller: *const AqsimController,
    out: *mut f64,
) -> AqsimStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(controller, "controller")?.inner.state().shed_probability;
        Ok(())
    })
}

/// Runs one experiment. `mode` and `controller` are names as accepted by the
/// CLI (`"ubora"`, `"quality-pid"`, ...). When `out_dir` is non-null the run
/// artifacts are written there.
#[no_mangle]
pub unsafe extern "C" fn aqsim_run(
    config: *const AqsimConfig,
    mode: *const c_char,
    controller: *const c_char,
    out_dir: *const c_char,
    summary: *mut AqsimRunSummary,
) -> AqsimStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        let summary = out_arg(summary, "summary")?;
        let mode: DesignMode = str_arg(mode, "mode")?.parse().map_err(invalid)?;
        let kind: ControllerKind = str_arg(controller, "controller")?.parse().map_err(invalid)?;
        let run_err = |e: RunnerError| {
            let status = if e.is_config() {
                AqsimStatus::ConfigError
            } else {
                AqsimStatus::RunFailed
            };
            (status, e.to_string())
        };
        let mut plan = ExperimentPlan::new(cfg.inner.clone(), mode, kind).map_err(run_err)?;
        if !out_dir.is_null() {
            plan.out_dir = Some(PathBuf::from(str_arg(out_dir, "out_dir")?));
        }
        let report = runner::run(&plan).map_err(run_err)?;
        let s = &report.manifest.summary;
        *summary = AqsimRunSummary {
            queries: s.queries as u64,
            admitted: s.admitted as u64,
            low_admitted: s.low_admitted as u64,
            sampled: s.sampled as u64,
            mature_success: s.mature_success as u64,
            mature_failed: s.mature_failed as u64,
            throughput: s.throughput.unwrap_or(f64::NAN),
            mature_failure_rate: s.mature_failure_rate,
            mean_quality: s.mean_quality.unwrap_or(f64::NAN),
            timeout_frequency: s.timeout_frequency,
        };
        Ok(())
    })
}
