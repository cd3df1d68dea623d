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

//! Run configuration: document parsing, defaults and validation.
//!
//! The document format is a small indentation-based subset of YAML that accepts
//! the deployment listing verbatim, including the bare `IPAddresses` header:
//!
//! ```text
//! IPAddresses
//! -  front: 10.243.2.*:80
//! -  back: 10.244.2.*; 10.245.2.*:1064
//!
//! samples: 8 per minute
//! recordTimeout: 15 seconds
//! propagateTimeout: 0.1 seconds
//! answerQualityFunction: default
//! ```
//!
//! Nested sections (`service:`, `trace:`, `controller:`, `network:`) hold
//! `key: value` pairs indented under the section name and are interpreted by the
//! modules that own them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::time::Nanos;

pub const DEFAULT_RECORD_TIMEOUT_SECS: f64 = 15.0;
pub const DEFAULT_PROPAGATE_TIMEOUT_SECS: f64 = 0.1;
pub const DEFAULT_CACHE_CAPACITY_BYTES: u64 = 1 << 30;
pub const DEFAULT_CACHE_TTL_SECS: f64 = 60.0;
pub const DEFAULT_QUALITY_FUNCTION: &str = "tpr";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

impl ConfigError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        ConfigError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        ConfigError::Validation(message.into())
    }
}

/// A `key: value` line, a nested section, or a list item.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(String),
    Section(Section),
    List(Vec<Section>),
}

/// Ordered key/value pairs of one nesting level, with source line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    entries: Vec<(String, Value, usize)>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries
            .iter()
            .find(|(k, _, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v, _)| v)
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries
            .iter()
            .find(|(k, _, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, _, l)| *l)
            .unwrap_or(0)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _, _)| k.as_str())
    }

    pub fn scalar(&self, key: &str) -> Option<&str> {
        match self.get(key) {
            Some(Value::Scalar(s)) => Some(s.as_str()),
            _ => None,
        }
    }

    pub fn section(&self, key: &str) -> Option<&Section> {
        match self.get(key) {
            Some(Value::Section(s)) => Some(s),
            _ => None,
        }
    }

    /// Parses a scalar with `FromStr`; absent keys yield `None`.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.scalar(key) {
            None => Ok(None),
            Some(s) => s
                .trim()
                .parse::<T>()
                .map(Some)
                .map_err(|_| ConfigError::parse(self.line_of(key), format!("cannot parse `{key}: {s}`"))),
        }
    }

    pub fn duration(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.scalar(key) {
            None => Ok(None),
            Some(s) => parse_duration_secs(s)
                .map(Some)
                .ok_or_else(|| ConfigError::parse(self.line_of(key), format!("bad duration `{s}`"))),
        }
    }

    pub fn insert_scalar(&mut self, key: &str, value: &str) {
        self.entries.retain(|(k, _, _)| !k.eq_ignore_ascii_case(key));
        self.entries
            .push((key.to_string(), Value::Scalar(value.to_string()), 0));
    }

    /// The nested section under `key`, created empty when absent.
    pub fn section_mut(&mut self, key: &str) -> &mut Section {
        let pos = match self.entries.iter().position(|(k, _, _)| k.eq_ignore_ascii_case(key)) {
            Some(i) if matches!(self.entries[i].1, Value::Section(_)) => i,
            found => {
                if let Some(i) = found {
                    self.entries.remove(i);
                }
                self.entries
                    .push((key.to_string(), Value::Section(Section::default()), 0));
                self.entries.len() - 1
            }
        };
        match &mut self.entries[pos].1 {
            Value::Section(sec) => sec,
            _ => unreachable!(),
        }
    }

    fn render_into(&self, out: &mut String, indent: usize) {
        for (k, v, _) in &self.entries {
            match v {
                Value::Scalar(s) => {
                    out.push_str(&format!("{:indent$}{k}: {s}\n", ""));
                }
                Value::Section(sec) => {
                    out.push_str(&format!("{:indent$}{k}:\n", ""));
                    sec.render_into(out, indent + 2);
                }
                Value::List(items) => {
                    out.push_str(&format!("{:indent$}{k}\n", ""));
                    for item in items {
                        for (i, (ik, iv, _)) in item.entries.iter().enumerate() {
                            let lead = if i == 0 { "- " } else { "  " };
                            if let Value::Scalar(s) = iv {
                                out.push_str(&format!("{:indent$}{lead}{ik}: {s}\n", ""));
                            }
                        }
                    }
                }
            }
        }
    }

    /// Canonical text form, used for hashing and manifests.
    pub fn render(&self) -> String {
        let mut s = String::new();
        self.render_into(&mut s, 0);
        s
    }
}

struct Line<'a> {
    no: usize,
    indent: usize,
    text: &'a str,
}

/// Parses the document into a tree of sections.
pub fn parse_document(text: &str) -> Result<Section, ConfigError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let without_comment = match raw.find(" #") {
            Some(pos) => &raw[..pos],
            None if raw.trim_start().starts_with('#') => "",
            None => raw,
        };
        if without_comment.trim().is_empty() {
            continue;
        }
        if without_comment.contains('\t') {
            return Err(ConfigError::parse(no, "tabs are not allowed for indentation"));
        }
        let indent = without_comment.len() - without_comment.trim_start().len();
        lines.push(Line {
            no,
            indent,
            text: without_comment.trim(),
        });
    }
    let mut pos = 0;
    let root = parse_block(&lines, &mut pos, 0)?;
    if pos < lines.len() {
        return Err(ConfigError::parse(lines[pos].no, "unexpected indentation"));
    }
    Ok(root)
}

fn split_key_value(line: &Line<'_>) -> Result<(String, Option<String>), ConfigError> {
    match line.text.split_once(':') {
        Some((k, v)) => {
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(ConfigError::parse(line.no, format!("invalid key `{k}`")));
            }
            let v = v.trim();
            Ok((k.to_string(), (!v.is_empty()).then(|| v.to_string())))
        }
        None => {
            if line.text.contains(char::is_whitespace) {
                Err(ConfigError::parse(
                    line.no,
                    format!("expected `key: value`, found `{}`", line.text),
                ))
            } else {
                Ok((line.text.to_string(), None))
            }
        }
    }
}

fn parse_block(lines: &[Line<'_>], pos: &mut usize, indent: usize) -> Result<Section, ConfigError> {
    let mut section = Section::default();
    while *pos < lines.len() {
        let line = &lines[*pos];
        if line.indent < indent {
            break;
        }
        if line.indent > indent {
            return Err(ConfigError::parse(line.no, "unexpected indentation"));
        }
        if line.text.starts_with('-') {
            return Err(ConfigError::parse(line.no, "list item without a header"));
        }
        let (key, value) = split_key_value(line)?;
        if section.get(&key).is_some() {
            return Err(ConfigError::parse(line.no, format!("duplicate key `{key}`")));
        }
        *pos += 1;
        match value {
            Some(v) => section.entries.push((key, Value::Scalar(v), line.no)),
            None => {
                let next = lines.get(*pos);
                match next {
                    Some(n) if n.text.starts_with('-') && n.indent >= indent => {
                        let items = parse_list(lines, pos, n.indent)?;
                        section.entries.push((key, Value::List(items), line.no));
                    }
                    Some(n) if n.indent > indent => {
                        let inner = parse_block(lines, pos, n.indent)?;
                        section.entries.push((key, Value::Section(inner), line.no));
                    }
                    _ => section.entries.push((key, Value::Section(Section::default()), line.no)),
                }
            }
        }
    }
    Ok(section)
}

fn parse_list(lines: &[Line<'_>], pos: &mut usize, indent: usize) -> Result<Vec<Section>, ConfigError> {
    let mut items = Vec::new();
    while *pos < lines.len() {
        let line = &lines[*pos];
        if line.indent != indent || !line.text.starts_with('-') {
            break;
        }
        let body = line.text[1..].trim_start();
        let item_line = Line {
            no: line.no,
            indent: 0,
            text: body,
        };
        let (k, v) = split_key_value(&item_line)?;
        let v = v.ok_or_else(|| ConfigError::parse(line.no, "list item needs `key: value`"))?;
        let mut item = Section::default();
        item.entries.push((k, Value::Scalar(v), line.no));
        *pos += 1;
        items.push(item);
    }
    Ok(items)
}

/// Parses `15 seconds`, `0.1s`, `500 ms`, `2 min`, or a bare number of seconds.
pub fn parse_duration_secs(s: &str) -> Option<f64> {
    let s = s.trim();
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E'))
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value: f64 = num.trim().parse().ok()?;
    let scale = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "s" | "sec" | "secs" | "second" | "seconds" => 1.0,
        "ms" | "msec" | "millisecond" | "milliseconds" => 1e-3,
        "us" | "microsecond" | "microseconds" => 1e-6,
        "ns" | "nanosecond" | "nanoseconds" => 1e-9,
        "m" | "min" | "mins" | "minute" | "minutes" => 60.0,
        "h" | "hour" | "hours" => 3600.0,
        _ => return None,
    };
    value.is_finite().then_some(value * scale)
}

/// How many queries to sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SamplingRate {
    /// Mature executions per minute, enforced by a token bucket.
    PerMinute(f64),
    /// Independent per-query probability.
    Fraction(f64),
}

impl SamplingRate {
    pub fn parse(s: &str) -> Option<SamplingRate> {
        let t = s.trim().to_ascii_lowercase();
        if let Some(p) = t.strip_suffix('%') {
            return p.trim().parse::<f64>().ok().map(|v| SamplingRate::Fraction(v / 100.0));
        }
        if let Some(f) = t.strip_prefix("fraction") {
            return f.trim().parse::<f64>().ok().map(SamplingRate::Fraction);
        }
        let (num, rest) = match t.find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-')) {
            Some(i) => t.split_at(i),
            None => (t.as_str(), ""),
        };
        let v: f64 = num.trim().parse().ok()?;
        let rest = rest.trim().trim_start_matches("per").trim_start_matches('/').trim();
        match rest {
            "" | "minute" | "min" | "m" => Some(SamplingRate::PerMinute(v)),
            "second" | "sec" | "s" => Some(SamplingRate::PerMinute(v * 60.0)),
            "hour" | "h" => Some(SamplingRate::PerMinute(v / 60.0)),
            _ => None,
        }
    }

    /// Returns the same kind of rate multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> SamplingRate {
        match self {
            SamplingRate::PerMinute(v) => SamplingRate::PerMinute(v * factor),
            SamplingRate::Fraction(v) => SamplingRate::Fraction((v * factor).clamp(0.0, 1.0)),
        }
    }
}

impl fmt::Display for SamplingRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingRate::PerMinute(v) => write!(f, "{v} per minute"),
            SamplingRate::Fraction(v) => write!(f, "{}%", v * 100.0),
        }
    }
}

/// One `host[:port]` pattern; `*` in the host expands to 1, 2, 3, ...
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressPattern {
    pub host: String,
    pub port: Option<u16>,
}

impl AddressPattern {
    /// Parses `10.244.2.*; 10.245.2.*:1064`. A trailing port applies to earlier
    /// patterns in the same entry that lack one.
    pub fn parse_list(s: &str) -> Option<Vec<AddressPattern>> {
        let mut out = Vec::new();
        for part in s.split([';', ',']) {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (host, port) = match part.rsplit_once(':') {
                Some((h, p)) => (h.trim(), Some(p.trim().parse::<u16>().ok()?)),
                None => (part, None),
            };
            if host.is_empty() || host.contains(char::is_whitespace) {
                return None;
            }
            out.push(AddressPattern {
                host: host.to_string(),
                port,
            });
        }
        let trailing = out.iter().rev().find_map(|p| p.port);
        for p in &mut out {
            if p.port.is_none() {
                p.port = trailing;
            }
        }
        (!out.is_empty()).then_some(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeMode {
    Virtual,
    Real,
}

impl FromStr for TimeMode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "virtual" => Ok(TimeMode::Virtual),
            "real" => Ok(TimeMode::Real),
            _ => Err(()),
        }
    }
}

/// Everything needed to build and drive one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub front_addresses: Vec<AddressPattern>,
    pub middle_addresses: Vec<AddressPattern>,
    pub back_addresses: Vec<AddressPattern>,
    pub samples: SamplingRate,
    pub record_timeout: Nanos,
    pub propagate_timeout: Nanos,
    pub quality_function: String,
    pub cache_capacity_bytes: u64,
    pub cache_ttl: Nanos,
    pub rng_seed: u64,
    pub time_mode: TimeMode,
    /// Remaining sections (`service`, `trace`, `controller`, `network`, ...).
    pub sections: BTreeMap<String, Section>,
    document: Section,
}

impl RunConfig {
    /// The parsed document in canonical form.
    pub fn document(&self) -> &Section {
        &self.document
    }

    pub fn section(&self, name: &str) -> Section {
        self.sections
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.clone())
            .unwrap_or_default()
    }

    /// Overrides the seed and keeps the canonical document in sync.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self.document.insert_scalar("rngSeed", &seed.to_string());
        self
    }

    pub fn with_time_mode(mut self, mode: TimeMode) -> Self {
        self.time_mode = mode;
        let s = match mode {
            TimeMode::Virtual => "virtual",
            TimeMode::Real => "real",
        };
        self.document.insert_scalar("timeMode", s);
        self
    }

    pub fn with_samples(mut self, samples: SamplingRate) -> Self {
        self.samples = samples;
        self.document.insert_scalar("samples", &samples.to_string());
        self
    }

    /// Sets `key` inside the named section, keeping the document in sync.
    pub fn with_setting(mut self, section: &str, key: &str, value: &str) -> Self {
        self.document.section_mut(section).insert_scalar(key, value);
        let name = self
            .sections
            .keys()
            .find(|k| k.eq_ignore_ascii_case(section))
            .cloned()
            .unwrap_or_else(|| section.to_string());
        self.sections.entry(name).or_default().insert_scalar(key, value);
        self
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.front_addresses.is_empty() {
            return Err(ConfigError::invalid("at least one front address is required"));
        }
        if self.propagate_timeout == Nanos::ZERO {
            return Err(ConfigError::invalid("propagateTimeout must be positive"));
        }
        if self.record_timeout <= self.propagate_timeout {
            return Err(ConfigError::invalid(
                "recordTimeout must be greater than propagateTimeout",
            ));
        }
        match self.samples {
            SamplingRate::PerMinute(v) if !(v >= 0.0 && v.is_finite()) => {
                return Err(ConfigError::invalid("samples per minute must be >= 0"))
            }
            SamplingRate::Fraction(v) if !(0.0..=1.0).contains(&v) => {
                return Err(ConfigError::invalid("sampling fraction must be in [0, 1]"))
            }
            _ => {}
        }
        if self.cache_capacity_bytes == 0 {
            return Err(ConfigError::invalid("cacheCapacityBytes must be positive"));
        }
        if self.cache_ttl <= self.record_timeout {
            return Err(ConfigError::invalid(
                "cacheTtlSeconds must exceed recordTimeout so recordings survive until replay",
            ));
        }
        if self.quality_function.trim().is_empty() {
            return Err(ConfigError::invalid("answerQualityFunction must not be empty"));
        }
        Ok(())
    }
}

const ADDRESS_HEADERS: [&str; 2] = ["IPAddresses", "addresses"];

fn signed_duration(section: &Section, key: &str) -> Result<Option<f64>, ConfigError> {
    let v = section.duration(key)?;
    if let Some(secs) = v {
        if secs < 0.0 {
            return Err(ConfigError::invalid(format!("{key} must not be negative")));
        }
    }
    Ok(v)
}

/// Parses and validates a configuration document, applying defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let doc = parse_document(text)?;

    let mut front = Vec::new();
    let mut middle = Vec::new();
    let mut back = Vec::new();
    let mut sections = BTreeMap::new();
    for key in doc.keys() {
        let line = doc.line_of(key);
        match doc.get(key) {
            Some(Value::List(items)) if ADDRESS_HEADERS.iter().any(|h| h.eq_ignore_ascii_case(key)) => {
                for item in items {
                    for (role, value, l) in &item.entries {
                        let Value::Scalar(v) = value else { continue };
                        let patterns = AddressPattern::parse_list(v)
                            .ok_or_else(|| ConfigError::parse(*l, format!("bad address list `{v}`")))?;
                        match role.to_ascii_lowercase().as_str() {
                            "front" => front.extend(patterns),
                            "middle" => middle.extend(patterns),
                            "back" => back.extend(patterns),
                            other => return Err(ConfigError::parse(*l, format!("unknown role `{other}`"))),
                        }
                    }
                }
            }
            Some(Value::List(_)) => return Err(ConfigError::parse(line, format!("unexpected list under `{key}`"))),
            Some(Value::Section(s)) if ADDRESS_HEADERS.iter().any(|h| h.eq_ignore_ascii_case(key)) => {
                if !s.keys().any(|_| true) {
                    continue;
                }
                return Err(ConfigError::parse(line, "addresses must be a `- role: pattern` list"));
            }
            Some(Value::Section(s)) => {
                sections.insert(key.to_string(), s.clone());
            }
            _ => {}
        }
    }

    let samples = match doc.scalar("samples") {
        Some(s) => SamplingRate::parse(s)
            .ok_or_else(|| ConfigError::parse(doc.line_of("samples"), format!("bad sampling rate `{s}`")))?,
        None => match doc.parsed::<f64>("sampleRate")? {
            Some(f) => SamplingRate::Fraction(f),
            None => SamplingRate::PerMinute(0.0),
        },
    };

    let record = signed_duration(&doc, "recordTimeout")?.unwrap_or(DEFAULT_RECORD_TIMEOUT_SECS);
    let propagate = signed_duration(&doc, "propagateTimeout")?.unwrap_or(DEFAULT_PROPAGATE_TIMEOUT_SECS);
    let ttl = signed_duration(&doc, "cacheTtlSeconds")?.unwrap_or(DEFAULT_CACHE_TTL_SECS);

    let quality_function = doc
        .scalar("answerQualityFunction")
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| DEFAULT_QUALITY_FUNCTION.to_string());

    let time_mode = match doc.scalar("timeMode") {
        Some(s) => s
            .parse::<TimeMode>()
            .map_err(|_| ConfigError::parse(doc.line_of("timeMode"), format!("bad timeMode `{s}`")))?,
        None => TimeMode::Virtual,
    };

    let cfg = RunConfig {
        front_addresses: front,
        middle_addresses: middle,
        back_addresses: back,
        samples,
        record_timeout: Nanos::from_secs_f64(record),
        propagate_timeout: Nanos::from_secs_f64(propagate),
        quality_function,
        cache_capacity_bytes: doc
            .parsed::<u64>("cacheCapacityBytes")?
            .unwrap_or(DEFAULT_CACHE_CAPACITY_BYTES),
        cache_ttl: Nanos::from_secs_f64(ttl),
        rng_seed: doc.parsed::<u64>("rngSeed")?.unwrap_or(0),
        time_mode,
        sections,
        document: doc,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const LISTING: &str = "IPAddresses
-  front: 10.243.2.*:80
-  back: 10.244.2.*; 10.245.2.*:1064

samples: 8 per minute
recordTimeout: 15 seconds
propagateTimeout: 0.1 seconds
answerQualityFunction: default
";

    #[test]
    fn listing_parses_with_defaults() {
        let cfg = parse_config(LISTING).unwrap();
        assert_eq!(cfg.samples, SamplingRate::PerMinute(8.0));
        assert_eq!(cfg.record_timeout, Nanos::from_secs(15));
        assert_eq!(cfg.propagate_timeout, Nanos::from_millis(100));
        assert_eq!(cfg.quality_function, "default");
        assert_eq!(cfg.cache_capacity_bytes, 1 << 30);
        assert_eq!(cfg.cache_ttl, Nanos::from_secs(60));
        assert_eq!(cfg.time_mode, TimeMode::Virtual);
        assert_eq!(cfg.front_addresses.len(), 1);
        assert_eq!(cfg.front_addresses[0].port, Some(80));
        assert_eq!(cfg.back_addresses.len(), 2);
        assert!(cfg.back_addresses.iter().all(|a| a.port == Some(1064)));
    }

    #[test]
    fn empty_document_needs_front() {
        assert!(matches!(parse_config(""), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn ordering_violation_is_rejected() {
        let text = "IPAddresses\n- front: a:1\nrecordTimeout: 0.05\npropagateTimeout: 0.1\n";
        assert!(matches!(parse_config(text), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn negative_timeout_is_validation_error() {
        let text = "IPAddresses\n- front: a:1\nrecordTimeout: -3 seconds\n";
        assert!(matches!(parse_config(text), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "IPAddresses\n- front: a:1\nsamples 8 per minute\n";
        match parse_config(text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "IPAddresses\n- front: a:1\nrecordTimeout: soon\n";
        match parse_config(text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn extensions_and_sections() {
        let text = "IPAddresses\n- front: f:1\n- middle: m*:2\nsamples: 20%\ncacheCapacityBytes: 4096\ncacheTtlSeconds: 30\nrngSeed: 7\ntimeMode: real\nservice:\n  kind: recommender\n  workers: 3\ntrace:\n  rate: 12\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.samples, SamplingRate::Fraction(0.2));
        assert_eq!(cfg.cache_capacity_bytes, 4096);
        assert_eq!(cfg.cache_ttl, Nanos::from_secs(30));
        assert_eq!(cfg.rng_seed, 7);
        assert_eq!(cfg.time_mode, TimeMode::Real);
        assert_eq!(cfg.middle_addresses.len(), 1);
        assert_eq!(cfg.section("service").scalar("kind"), Some("recommender"));
        assert_eq!(cfg.section("trace").parsed::<f64>("rate").unwrap(), Some(12.0));
    }

    #[test]
    fn sampling_rate_forms() {
        assert_eq!(SamplingRate::parse("8 per minute"), Some(SamplingRate::PerMinute(8.0)));
        assert_eq!(SamplingRate::parse("8/min"), Some(SamplingRate::PerMinute(8.0)));
        assert_eq!(SamplingRate::parse("1 per second"), Some(SamplingRate::PerMinute(60.0)));
        assert_eq!(SamplingRate::parse("5%"), Some(SamplingRate::Fraction(0.05)));
        assert_eq!(SamplingRate::parse("fraction 0.3"), Some(SamplingRate::Fraction(0.3)));
        assert_eq!(SamplingRate::parse("lots"), None);
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration_secs("15 seconds"), Some(15.0));
        assert_eq!(parse_duration_secs("500ms"), Some(0.5));
        assert_eq!(parse_duration_secs("2 min"), Some(120.0));
        assert_eq!(parse_duration_secs("0.1"), Some(0.1));
        assert_eq!(parse_duration_secs("3 fortnights"), None);
    }

    #[test]
    fn render_round_trips() {
        let cfg = parse_config(LISTING).unwrap();
        let again = parse_config(&cfg.document().render()).unwrap();
        assert_eq!(again.samples, cfg.samples);
        assert_eq!(again.back_addresses, cfg.back_addresses);
        assert_eq!(again.document().render(), cfg.document().render());
    }

    #[test]
    fn seed_override_updates_document() {
        let cfg = parse_config(LISTING).unwrap().with_seed(99);
        assert!(cfg.document().render().contains("rngSeed: 99"));
    }

    #[test]
    fn nested_setting_round_trips() {
        let text = format!("{LISTING}controller:\n  kp: 0.5\n");
        let cfg = parse_config(&text)
            .unwrap()
            .with_setting("controller", "target", "0.4")
            .with_setting("trace", "rate", "7");
        assert_eq!(cfg.section("controller").scalar("target"), Some("0.4"));
        assert_eq!(cfg.section("controller").scalar("kp"), Some("0.5"));
        let again = parse_config(&cfg.document().render()).unwrap();
        assert_eq!(again.section("trace").scalar("rate"), Some("7"));
        assert_eq!(again.section("controller").render(), cfg.section("controller").render());
    }
}
