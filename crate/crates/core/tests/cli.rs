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

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use aqsim::runner::{Manifest, CONTROLLER_FILE, MANIFEST_FILE, QUALITY_FILE, RUNLOG_FILE, TRACE_FILE};

const SMALL: &str = "IPAddresses
- front: 10.0.0.1
- back: 10.0.0.2
samples: 30%
rngSeed: 2
recordTimeout: 2 seconds
trace:
  duration: 4 seconds
  rate: 30
";

fn aqsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aqsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.yaml");
    fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = aqsim(
        &["run", "--config", &cfg, "--time", "virtual", "--out", "a"],
        dir.path(),
    );
    ok(&out);
    let a = dir.path().join("a");
    for f in [MANIFEST_FILE, RUNLOG_FILE, QUALITY_FILE, CONTROLLER_FILE, TRACE_FILE] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    let m = Manifest::read(&a).unwrap();
    assert_eq!(m.mode, "ubora");
    assert_eq!(m.seed, 2);
    assert!(m.summary.queries > 0);
}

#[test]
fn seed_flag_overrides_config_and_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&aqsim(
        &["run", "--config", &cfg, "--seed", "2", "--out", "a"],
        dir.path(),
    ));
    ok(&aqsim(
        &["run", "--config", &cfg, "--seed", "3", "--out", "b"],
        dir.path(),
    ));
    let a = Manifest::read(&dir.path().join("a")).unwrap();
    let b = Manifest::read(&dir.path().join("b")).unwrap();
    assert_eq!(b.seed, 3);
    assert_ne!(a.trace_hash, b.trace_hash);
}

#[test]
fn replaying_a_saved_trace_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&aqsim(&["run", "--config", &cfg, "--out", "a"], dir.path()));
    let trace = dir.path().join("a").join(TRACE_FILE);
    ok(&aqsim(
        &[
            "run",
            "--config",
            &cfg,
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            "b",
        ],
        dir.path(),
    ));
    let a = Manifest::read(&dir.path().join("a")).unwrap();
    let b = Manifest::read(&dir.path().join("b")).unwrap();
    assert_eq!(a.trace_hash, b.trace_hash);
    assert_eq!(a.summary.wire_digest, b.summary.wire_digest);
}

#[test]
fn compare_reports_gain_against_the_first_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&aqsim(
        &["run", "--config", &cfg, "--mode", "ubora", "--out", "u"],
        dir.path(),
    ));
    ok(&aqsim(
        &["run", "--config", &cfg, "--mode", "query-tagging", "--out", "t"],
        dir.path(),
    ));
    let out = aqsim(&["compare", "u", "t"], dir.path());
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let headers = rows.headers().unwrap().clone();
    let gain = headers.iter().position(|h| h == "gain").expect("gain column");
    let records: Vec<_> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0][gain].parse::<f64>().unwrap(), 1.0);

    ok(&aqsim(&["compare", "u", "t", "--out", "cmp.csv"], dir.path()));
    assert_eq!(fs::read_to_string(dir.path().join("cmp.csv")).unwrap(), text);
}

#[test]
fn compare_refuses_runs_over_different_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&aqsim(
        &["run", "--config", &cfg, "--seed", "1", "--out", "a"],
        dir.path(),
    ));
    ok(&aqsim(
        &["run", "--config", &cfg, "--seed", "9", "--out", "b"],
        dir.path(),
    ));
    let out = aqsim(&["compare", "a", "b"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_problems_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.yaml");
    fs::write(&bad, "samples: 10%\n").unwrap();
    let out = aqsim(&["run", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let cfg = small_config(dir.path());
    let out = aqsim(
        &["run", "--config", &cfg, "--mode", "off", "--controller", "quality-pid"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = aqsim(&["run", "--config", &cfg, "--samples", "often"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = aqsim(&["run", "--bogus"], dir.path());
    assert!(!out.status.success());
    let out = aqsim(&["compare", "only-one"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn profile_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = aqsim(
        &[
            "profile",
            "--config",
            &cfg,
            "--rates",
            "10%,50%",
            "--modes",
            "ubora,query-tagging",
            "--out",
            "p",
        ],
        dir.path(),
    );
    ok(&out);
    let mut rdr = csv::Reader::from_path(dir.path().join("p").join("profile.csv")).unwrap();
    let n = rdr.records().count();
    assert!(n >= 4 && n.is_multiple_of(4), "{n} rows");
}
