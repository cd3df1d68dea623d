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

//! Answer-quality measurement for online data-intensive services.
//!
//! Sampled queries run twice: online, under the service's normal timeouts, and
//! to maturity, re-executing the front end while back-end replies recorded
//! during the online run are replayed from an in-memory cache. The similarity of
//! the two answers is the query's answer quality, which in turn can drive
//! admission control.

pub mod cache;
pub mod config;
pub mod controller;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod quality;
pub mod rng;
pub mod runner;
pub mod sampler;
pub mod time;
pub mod transport;

pub use config::{parse_config, RunConfig};
