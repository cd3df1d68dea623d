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

use std::path::Path;
use std::process::Command;

fn header() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("aqsim.h")
}

#[test]
fn header_declares_every_entry_point() {
    let text = std::fs::read_to_string(header()).expect("header generated by build script");
    for name in [
        "aqsim_version",
        "aqsim_last_error_message",
        "aqsim_config_parse",
        "aqsim_cache_append",
        "aqsim_cache_copy_reply",
        "aqsim_controller_admit",
        "aqsim_tpr",
        "aqsim_run",
        "AQSIM_STATUS_BUFFER_TOO_SMALL",
        "typedef struct AqsimCache AqsimCache;",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let probe = Command::new(compiler)
            .args(["-x", lang, "-fsyntax-only", "-Wall", "-Werror"])
            .arg(header())
            .output();
        match probe {
            Ok(out) => assert!(
                out.status.success(),
                "{compiler}: {}",
                String::from_utf8_lossy(&out.stderr)
            ),
            Err(_) => eprintln!("{compiler} not found, skipping"),
        }
    }
}
