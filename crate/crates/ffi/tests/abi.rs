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

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use aqsim_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe { aqsim_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

const SMALL: &str = "IPAddresses
- front: 10.0.0.1
- back: 10.0.0.2
samples: 50%
rngSeed: 3
recordTimeout: 2 seconds
service:
  backMedian: 10ms
  frontTimeout: 40ms
  middleTimeout: 35ms
trace:
  duration: 3 seconds
  rate: 40
";

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(aqsim_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    let mut out = 0.0;
    let s = unsafe { aqsim_tpr(ptr::null(), 3, ptr::null(), 0, &mut out) };
    assert_eq!(s, AqsimStatus::NullPointer);
    assert!(last_error().contains("online"));
    assert!(aqsim_last_error_length() > 0);
    let s = unsafe { aqsim_config_parse(ptr::null(), ptr::null_mut()) };
    assert_eq!(s, AqsimStatus::NullPointer);
    unsafe {
        aqsim_config_free(ptr::null_mut());
        aqsim_cache_free(ptr::null_mut());
        aqsim_controller_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_the_last_error() {
    let mut out = 0.0;
    unsafe { aqsim_tpr(ptr::null(), 1, ptr::null(), 0, &mut out) };
    assert!(aqsim_last_error_length() > 0);
    let ids = [1u64, 2, 3, 4];
    let s = unsafe { aqsim_tpr(ids.as_ptr(), 2, ids.as_ptr(), 4, &mut out) };
    assert_eq!(s, AqsimStatus::Ok);
    assert_eq!(out, 0.5);
    assert_eq!(aqsim_last_error_length(), 0);
}

#[test]
fn error_message_truncates_and_terminates() {
    let mut out = 0.0;
    unsafe { aqsim_tpr(ptr::null(), 1, ptr::null(), 0, &mut out) };
    let full = aqsim_last_error_length();
    let mut buf = [1 as c_char; 4];
    let n = unsafe { aqsim_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert_eq!(buf[3], 0);
    assert_eq!(unsafe { aqsim_last_error_message(ptr::null_mut(), 0) }, full);
}

#[test]
fn tpr_rejects_duplicate_ids() {
    let dup = [7u64, 7];
    let mut out = 0.0;
    let s = unsafe { aqsim_tpr(dup.as_ptr(), 2, dup.as_ptr(), 1, &mut out) };
    assert_eq!(s, AqsimStatus::InvalidArgument);
}

#[test]
fn config_errors_carry_a_message() {
    let bad = CString::new("IPAddresses\n- front: 1.2.3.4\nsamples: lots\n").unwrap();
    let mut cfg = ptr::null_mut();
    let s = unsafe { aqsim_config_parse(bad.as_ptr(), &mut cfg) };
    assert_eq!(s, AqsimStatus::ConfigError);
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn cache_round_trip_and_expiry() {
    let mut cache = ptr::null_mut();
    assert_eq!(unsafe { aqsim_cache_new(1 << 20, 1_000, &mut cache) }, AqsimStatus::Ok);
    let a = b"first";
    let b = b"second reply";
    unsafe {
        assert_eq!(
            aqsim_cache_append(cache, 1, 2, 9, a.as_ptr(), a.len(), 0),
            AqsimStatus::Ok
        );
        assert_eq!(
            aqsim_cache_append(cache, 1, 2, 9, b.as_ptr(), b.len(), 10),
            AqsimStatus::Ok
        );
        let mut n = 0;
        assert_eq!(aqsim_cache_reply_count(cache, 1, 2, 20, &mut n), AqsimStatus::Ok);
        assert_eq!(n, 2);

        let mut buf = [0u8; 4];
        let mut len = 0;
        let s = aqsim_cache_copy_reply(cache, 1, 2, 20, 1, buf.as_mut_ptr(), buf.len(), &mut len);
        assert_eq!(s, AqsimStatus::BufferTooSmall);
        assert_eq!(len, b.len());
        let mut buf = vec![0u8; len];
        let s = aqsim_cache_copy_reply(cache, 1, 2, 20, 1, buf.as_mut_ptr(), buf.len(), &mut len);
        assert_eq!(s, AqsimStatus::Ok);
        assert_eq!(&buf, b);
        let s = aqsim_cache_copy_reply(cache, 1, 2, 20, 2, buf.as_mut_ptr(), buf.len(), &mut len);
        assert_eq!(s, AqsimStatus::NotFound);

        let mut used = 0;
        aqsim_cache_used_bytes(cache, &mut used);
        assert!(used >= (a.len() + b.len()) as u64);

        aqsim_cache_reply_count(cache, 1, 2, 5_000, &mut n);
        assert_eq!(n, 0);
        let mut removed = 0;
        assert_eq!(aqsim_cache_evict_expired(cache, 5_000, &mut removed), AqsimStatus::Ok);
        assert_eq!(removed, 1);
        aqsim_cache_used_bytes(cache, &mut used);
        assert_eq!(used, 0);
        aqsim_cache_free(cache);
    }
}

#[test]
fn cache_overflow_is_reported() {
    let mut cache = ptr::null_mut();
    unsafe {
        aqsim_cache_new(64, 1_000_000, &mut cache);
        let big = [0u8; 128];
        let s = aqsim_cache_append(cache, 0, 1, 1, big.as_ptr(), big.len(), 0);
        assert_eq!(s, AqsimStatus::CapacityExceeded);
        let mut n = 1;
        aqsim_cache_reply_count(cache, 0, 1, 0, &mut n);
        assert_eq!(n, 0);
        aqsim_cache_free(cache);
    }
    assert_eq!(
        unsafe { aqsim_cache_new(0, 1, &mut cache) },
        AqsimStatus::InvalidArgument
    );
}

#[test]
fn controller_sheds_low_priority_when_quality_is_poor() {
    let mut p = unsafe { std::mem::zeroed::<AqsimControllerParams>() };
    unsafe { aqsim_controller_params_default(&mut p) };
    p.evaluation_interval = 10;
    p.quality_window = 5;
    let mut c = ptr::null_mut();
    let kind = AqsimControllerKind::QualityPid as u32;
    assert_eq!(unsafe { aqsim_controller_new(kind, &p, 1, &mut c) }, AqsimStatus::Ok);
    unsafe {
        for _ in 0..5 {
            aqsim_controller_observe_quality(c, 0.2);
        }
        let mut admitted = false;
        for t in 0..200u64 {
            assert_eq!(
                aqsim_controller_admit(c, AqsimPriority::High as u32, t, &mut admitted),
                AqsimStatus::Ok
            );
            assert!(admitted);
        }
        let mut shed = 0.0;
        aqsim_controller_shed_probability(c, &mut shed);
        assert!(shed > 0.5, "shed {shed}");
        assert_eq!(aqsim_controller_observe_quality(c, 1.5), AqsimStatus::InvalidArgument);
        assert_eq!(
            aqsim_controller_admit(c, 7, 0, &mut admitted),
            AqsimStatus::InvalidArgument
        );
        assert_eq!(aqsim_controller_observe_online(c, true), AqsimStatus::Ok);
        aqsim_controller_free(c);
    }
    assert_eq!(
        unsafe { aqsim_controller_new(42, &p, 1, &mut c) },
        AqsimStatus::InvalidArgument
    );
    assert!(c.is_null());
}

#[test]
fn run_matches_between_calls_and_writes_artifacts() {
    let text = CString::new(SMALL).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { aqsim_config_parse(text.as_ptr(), &mut cfg) }, AqsimStatus::Ok);
    let mode = CString::new("ubora").unwrap();
    let ctl = CString::new("none").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut a = unsafe { std::mem::zeroed::<AqsimRunSummary>() };
    let mut b = a;
    unsafe {
        assert_eq!(
            aqsim_run(cfg, mode.as_ptr(), ctl.as_ptr(), out.as_ptr(), &mut a),
            AqsimStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(
            aqsim_run(cfg, mode.as_ptr(), ctl.as_ptr(), ptr::null(), &mut b),
            AqsimStatus::Ok
        );
    }
    assert_eq!(a, b);
    assert!(a.queries > 0);
    assert_eq!(a.admitted, a.queries);
    assert!(a.sampled > 0 && a.mature_success + a.mature_failed == a.sampled);
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("runlog.csv").exists());

    let seed_changed = unsafe { aqsim_config_set_seed(cfg, 99) };
    assert_eq!(seed_changed, AqsimStatus::Ok);
    let rate = CString::new("10%").unwrap();
    assert_eq!(unsafe { aqsim_config_set_samples(cfg, rate.as_ptr()) }, AqsimStatus::Ok);
    unsafe { aqsim_run(cfg, mode.as_ptr(), ctl.as_ptr(), ptr::null(), &mut b) };
    assert!(b.sampled < a.sampled);

    let bogus = CString::new("sideways").unwrap();
    let s = unsafe { aqsim_run(cfg, bogus.as_ptr(), ctl.as_ptr(), ptr::null(), &mut b) };
    assert_eq!(s, AqsimStatus::InvalidArgument);
    let off = CString::new("off").unwrap();
    let qpid = CString::new("quality-pid").unwrap();
    let s = unsafe { aqsim_run(cfg, off.as_ptr(), qpid.as_ptr(), ptr::null(), &mut b) };
    assert_eq!(s, AqsimStatus::ConfigError);
    unsafe { aqsim_config_free(cfg) };
}
