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

//! Synthetic OLDI services: a data-parallel sharded search and a recommender
//! with partial redundancy. Both are described as a tree of components; the
//! engine drives the tree and calls back here for service times, leaf replies
//! and merges.

use std::cmp::Ordering;

use rand::seq::index;
use rand::RngExt;
use rand_distr::{Distribution, LogNormal, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::config::{AddressPattern, ConfigError, RunConfig, Section};
use crate::model::{Answer, AnswerError, AnswerKind, ComponentId, Item};
use crate::rng::RngSplitter;
use crate::time::Nanos;
use crate::transport::Endpoint;

use super::trace::QueryClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Front,
    Middle,
    Back,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        match s.trim().to_ascii_lowercase().as_str() {
            "front" => Some(Role::Front),
            "middle" => Some(Role::Middle),
            "back" => Some(Role::Back),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Front => "front",
            Role::Middle => "middle",
            Role::Back => "back",
        }
    }
}

/// Lognormal body with a Pareto tail: with probability `tail_prob` a draw is
/// `tail_scale * median * Pareto(1, tail_alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceTimeModel {
    pub median: Nanos,
    pub sigma: f64,
    pub tail_prob: f64,
    pub tail_alpha: f64,
    pub tail_scale: f64,
}

impl ServiceTimeModel {
    pub fn lognormal(median: Nanos, sigma: f64) -> Self {
        Self {
            median,
            sigma,
            tail_prob: 0.0,
            tail_alpha: 2.0,
            tail_scale: 1.0,
        }
    }

    /// Model with the given body mean (tail excluded).
    pub fn with_mean(mean: Nanos, sigma: f64) -> Self {
        Self::lognormal(mean.mul_f64((-sigma * sigma / 2.0).exp()), sigma)
    }

    pub fn body_mean(&self) -> Nanos {
        self.median.mul_f64((self.sigma * self.sigma / 2.0).exp())
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Nanos {
        let median = self.median.as_secs_f64();
        if median <= 0.0 {
            return Nanos::ZERO;
        }
        let tail = self.tail_prob > 0.0 && rng.random_bool(self.tail_prob.min(1.0));
        let secs = if tail {
            let p = Pareto::new(1.0, self.tail_alpha).expect("tail alpha must be positive");
            self.tail_scale * median * p.sample(rng)
        } else if self.sigma > 0.0 {
            LogNormal::new(median.ln(), self.sigma)
                .expect("sigma must be finite")
                .sample(rng)
        } else {
            median
        };
        Nanos::from_secs_f64(secs)
    }
}

/// How a non-leaf component combines its children's replies.
#[derive(Clone, Debug, PartialEq)]
pub enum MergeRule {
    /// Top-k by (score desc, id asc) over all replies received.
    TopK(usize),
    /// The reply of the first child in `order` that answered; other children
    /// do not contribute.
    Prefer(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Work {
    Leaf(ServiceTimeModel),
    ScatterGather {
        children: Vec<usize>,
        merge: MergeRule,
        pre_cost: Nanos,
        merge_cost: Nanos,
        /// Per-child online timeout; `None` waits indefinitely.
        timeouts: Vec<Option<Nanos>>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSpec {
    pub id: ComponentId,
    pub name: String,
    pub endpoint: Endpoint,
    pub role: Role,
    pub memoize: bool,
    pub workers: usize,
    pub work: Work,
}

impl ComponentSpec {
    pub fn is_leaf(&self) -> bool {
        matches!(self.work, Work::Leaf(_))
    }

    pub fn children(&self) -> &[usize] {
        match &self.work {
            Work::Leaf(_) => &[],
            Work::ScatterGather { children, .. } => children,
        }
    }

    /// Re-executed during replay: fronts and middles.
    pub fn reexecuted(&self) -> bool {
        self.role != Role::Back
    }
}

/// Bound on the relevance factor applied to a shard's service time.
const MAX_RELEVANCE_FACTOR: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardedSearchSpec {
    pub shard_count: usize,
    pub docs_per_shard: usize,
    /// Zipf exponent of per-query shard relevance.
    pub score_skew: f64,
    /// Skew for heavy queries.
    pub heavy_skew: f64,
    pub k: usize,
    /// Aggregators between the front and the shards; 0 for a flat fan-out.
    pub middles: usize,
    /// Exponent on a shard's relative relevance in its service time; positive
    /// values make the shards holding the best documents the slow ones.
    pub relevance_time_corr: f64,
    /// The same exponent for heavy queries. Negative values make shards
    /// holding few relevant documents the slow ones.
    pub heavy_relevance_time_corr: f64,
}

impl Default for ShardedSearchSpec {
    fn default() -> Self {
        Self {
            shard_count: 8,
            docs_per_shard: 1000,
            score_skew: 0.6,
            heavy_skew: 1.8,
            k: 10,
            middles: 0,
            relevance_time_corr: 0.3,
            heavy_relevance_time_corr: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommenderSpec {
    pub small_db_latency_model: ServiceTimeModel,
    pub large_db_latency_model: ServiceTimeModel,
    pub online_timeout: Nanos,
    pub k: usize,
    /// Candidate items per query.
    pub pool: usize,
    /// Standard deviation of the small database's rating error.
    pub noise: f64,
    /// Cost of the engine sitting in front of each database.
    pub engine_cost: Nanos,
    /// Timeout on an auxiliary component whose reply never enters the answer.
    pub aux_timeout: Option<Nanos>,
}

impl Default for RecommenderSpec {
    fn default() -> Self {
        Self {
            small_db_latency_model: ServiceTimeModel::lognormal(Nanos::from_millis(80), 0.4),
            large_db_latency_model: ServiceTimeModel::lognormal(Nanos::from_millis(300), 0.45),
            online_timeout: Nanos::from_millis(500),
            k: 10,
            pool: 60,
            noise: 0.12,
            engine_cost: Nanos::from_millis(20),
            aux_timeout: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ServiceSpec {
    ShardedSearch(ShardedSearchSpec),
    Recommender(RecommenderSpec),
}

impl ServiceSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ServiceSpec::ShardedSearch(_) => "sharded-search",
            ServiceSpec::Recommender(_) => "recommender",
        }
    }
}

/// Shared knobs for building a topology.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologyOptions {
    pub front_endpoints: Vec<AddressPattern>,
    pub middle_endpoints: Vec<AddressPattern>,
    pub back_endpoints: Vec<AddressPattern>,
    pub front_workers: usize,
    pub middle_workers: usize,
    pub back_workers: usize,
    pub front_timeout: Nanos,
    pub middle_timeout: Nanos,
    pub front_cost: Nanos,
    pub merge_cost: Nanos,
    pub back_model: ServiceTimeModel,
    pub heavy_multiplier: f64,
    /// Role of aggregators and engines: `Middle` re-executes them in replay,
    /// `Back` memoizes them.
    pub middle_role: Role,
    /// Per-middle override of `middle_role`.
    pub middle_roles: Vec<Role>,
}

impl Default for TopologyOptions {
    fn default() -> Self {
        Self {
            front_endpoints: vec![AddressPattern {
                host: "front".into(),
                port: Some(80),
            }],
            middle_endpoints: Vec::new(),
            back_endpoints: Vec::new(),
            front_workers: 16,
            middle_workers: 8,
            back_workers: 4,
            front_timeout: Nanos::from_millis(400),
            middle_timeout: Nanos::from_millis(350),
            front_cost: Nanos::from_millis(1),
            merge_cost: Nanos::from_millis(2),
            back_model: ServiceTimeModel {
                median: Nanos::from_millis(120),
                sigma: 0.5,
                tail_prob: 0.02,
                tail_alpha: 1.5,
                tail_scale: 3.0,
            },
            heavy_multiplier: 1.6,
            middle_role: Role::Middle,
            middle_roles: Vec::new(),
        }
    }
}

/// A runnable service: the component tree plus the data model behind it.
#[derive(Clone, Debug)]
pub struct Service {
    spec: ServiceSpec,
    components: Vec<ComponentSpec>,
    fronts: Vec<usize>,
    heavy_multiplier: f64,
    rng: RngSplitter,
    shard_of: Vec<Option<usize>>,
}

fn expand(patterns: &[AddressPattern], default_host: &str, default_port: u16, i: usize) -> Endpoint {
    if patterns.is_empty() {
        return Endpoint::new(format!("{default_host}-{}", i + 1), default_port);
    }
    let p = &patterns[i % patterns.len()];
    let n = i / patterns.len() + 1;
    let host = if p.host.contains('*') {
        p.host.replacen('*', &n.to_string(), 1)
    } else if n > 1 {
        format!("{}#{n}", p.host)
    } else {
        p.host.clone()
    };
    Endpoint::new(host, p.port.unwrap_or(default_port))
}

fn ms(s: &Section, key: &str, default: Nanos) -> Result<Nanos, ConfigError> {
    Ok(s.duration(key)?.map(Nanos::from_secs_f64).unwrap_or(default))
}

fn role_of(s: &Section, key: &str, default: Role) -> Result<Role, ConfigError> {
    match s.scalar(key) {
        None => Ok(default),
        Some(v) => Role::parse(v).ok_or_else(|| ConfigError::invalid(format!("unknown role `{v}` for {key}"))),
    }
}

impl Service {
    /// Builds the service described by the `service:` section.
    pub fn from_config(cfg: &RunConfig) -> Result<Service, ConfigError> {
        let s = cfg.section("service");
        let d = TopologyOptions::default();
        let back_default = d.back_model;
        let back_model = ServiceTimeModel {
            median: match s.duration("backMean")? {
                Some(mean) => {
                    ServiceTimeModel::with_mean(
                        Nanos::from_secs_f64(mean),
                        s.parsed("backSigma")?.unwrap_or(back_default.sigma),
                    )
                    .median
                }
                None => ms(&s, "backMedian", back_default.median)?,
            },
            sigma: s.parsed("backSigma")?.unwrap_or(back_default.sigma),
            tail_prob: s.parsed("tailProbability")?.unwrap_or(back_default.tail_prob),
            tail_alpha: s.parsed("tailAlpha")?.unwrap_or(back_default.tail_alpha),
            tail_scale: s.parsed("tailScale")?.unwrap_or(back_default.tail_scale),
        };
        if back_model.sigma < 0.0 || !(0.0..=1.0).contains(&back_model.tail_prob) || back_model.tail_alpha <= 0.0 {
            return Err(ConfigError::invalid("service time model parameters out of range"));
        }
        let opts = TopologyOptions {
            front_endpoints: cfg.front_addresses.clone(),
            middle_endpoints: cfg.middle_addresses.clone(),
            back_endpoints: cfg.back_addresses.clone(),
            front_workers: s.parsed("frontWorkers")?.unwrap_or(d.front_workers),
            middle_workers: s.parsed("middleWorkers")?.unwrap_or(d.middle_workers),
            back_workers: s.parsed("backWorkers")?.unwrap_or(d.back_workers),
            front_timeout: ms(&s, "frontTimeout", d.front_timeout)?,
            middle_timeout: ms(&s, "middleTimeout", d.middle_timeout)?,
            front_cost: ms(&s, "frontCost", d.front_cost)?,
            merge_cost: ms(&s, "mergeCost", d.merge_cost)?,
            back_model,
            heavy_multiplier: s.parsed("heavyMultiplier")?.unwrap_or(d.heavy_multiplier),
            middle_role: role_of(&s, "middleRole", d.middle_role)?,
            middle_roles: Vec::new(),
        };
        if opts.front_workers == 0 || opts.middle_workers == 0 || opts.back_workers == 0 {
            return Err(ConfigError::invalid("worker pools must be non-empty"));
        }
        let kind = s.scalar("kind").unwrap_or("sharded-search").to_ascii_lowercase();
        let spec = match kind.as_str() {
            "sharded-search" | "search" | "shardedsearch" => {
                let dd = ShardedSearchSpec::default();
                ServiceSpec::ShardedSearch(ShardedSearchSpec {
                    shard_count: s.parsed("shards")?.unwrap_or(dd.shard_count),
                    docs_per_shard: s.parsed("docsPerShard")?.unwrap_or(dd.docs_per_shard),
                    score_skew: s.parsed("skew")?.unwrap_or(dd.score_skew),
                    heavy_skew: s.parsed("heavySkew")?.unwrap_or(dd.heavy_skew),
                    k: s.parsed("k")?.unwrap_or(dd.k),
                    middles: s.parsed("middles")?.unwrap_or(dd.middles),
                    relevance_time_corr: s.parsed("relevanceCorrelation")?.unwrap_or(dd.relevance_time_corr),
                    heavy_relevance_time_corr: s
                        .parsed("heavyRelevanceCorrelation")?
                        .unwrap_or(dd.heavy_relevance_time_corr),
                })
            }
            "recommender" => {
                let dd = RecommenderSpec::default();
                ServiceSpec::Recommender(RecommenderSpec {
                    small_db_latency_model: ServiceTimeModel::lognormal(
                        ms(&s, "smallMedian", dd.small_db_latency_model.median)?,
                        s.parsed("smallSigma")?.unwrap_or(dd.small_db_latency_model.sigma),
                    ),
                    large_db_latency_model: ServiceTimeModel::lognormal(
                        ms(&s, "largeMedian", dd.large_db_latency_model.median)?,
                        s.parsed("largeSigma")?.unwrap_or(dd.large_db_latency_model.sigma),
                    ),
                    online_timeout: ms(&s, "frontTimeout", dd.online_timeout)?,
                    k: s.parsed("k")?.unwrap_or(dd.k),
                    pool: s.parsed("pool")?.unwrap_or(dd.pool),
                    noise: s.parsed("noise")?.unwrap_or(dd.noise),
                    engine_cost: ms(&s, "engineCost", dd.engine_cost)?,
                    aux_timeout: s.duration("auxTimeout")?.map(Nanos::from_secs_f64),
                })
            }
            other => return Err(ConfigError::invalid(format!("unknown service kind `{other}`"))),
        };
        Service::build(spec, opts, cfg.rng_seed)
    }

    pub fn build(spec: ServiceSpec, opts: TopologyOptions, seed: u64) -> Result<Service, ConfigError> {
        let rng = RngSplitter::new(seed);
        let mut components = Vec::new();
        fn push(
            components: &mut Vec<ComponentSpec>,
            name: String,
            endpoint: Endpoint,
            role: Role,
            workers: usize,
            work: Work,
        ) -> usize {
            let id = components.len();
            components.push(ComponentSpec {
                id: ComponentId(id as u32),
                name,
                endpoint,
                role,
                memoize: role == Role::Back,
                workers,
                work,
            });
            id
        }
        let middle_role = |i: usize| opts.middle_roles.get(i).copied().unwrap_or(opts.middle_role);
        let mut shard_of;
        match &spec {
            ServiceSpec::ShardedSearch(ss) => {
                if ss.shard_count == 0 || ss.k == 0 || ss.docs_per_shard < ss.k {
                    return Err(ConfigError::invalid(
                        "sharded search needs shards > 0 and docsPerShard >= k > 0",
                    ));
                }
                if ss.middles > ss.shard_count {
                    return Err(ConfigError::invalid("more middles than shards"));
                }
                let front = push(
                    &mut components,
                    "front".into(),
                    expand(&opts.front_endpoints, "front", 80, 0),
                    Role::Front,
                    opts.front_workers,
                    Work::Leaf(ServiceTimeModel::lognormal(Nanos::ZERO, 0.0)),
                );
                let mut middles = Vec::new();
                for m in 0..ss.middles {
                    middles.push(push(
                        &mut components,
                        format!("middle-{}", m + 1),
                        expand(&opts.middle_endpoints, "middle", 8080, m),
                        middle_role(m),
                        opts.middle_workers,
                        Work::Leaf(ServiceTimeModel::lognormal(Nanos::ZERO, 0.0)),
                    ));
                }
                let mut shards = Vec::new();
                for i in 0..ss.shard_count {
                    let id = push(
                        &mut components,
                        format!("shard-{}", i + 1),
                        expand(&opts.back_endpoints, "shard", 1064, i),
                        Role::Back,
                        opts.back_workers,
                        Work::Leaf(opts.back_model),
                    );
                    shards.push(id);
                }
                shard_of = vec![None; components.len()];
                for (i, &c) in shards.iter().enumerate() {
                    shard_of[c] = Some(i);
                }
                let gather = |children: Vec<usize>, timeout: Nanos| Work::ScatterGather {
                    timeouts: vec![Some(timeout); children.len()],
                    children,
                    merge: MergeRule::TopK(ss.k),
                    pre_cost: opts.front_cost,
                    merge_cost: opts.merge_cost,
                };
                if middles.is_empty() {
                    components[front].work = gather(shards.clone(), opts.front_timeout);
                } else {
                    for (m, &mid) in middles.iter().enumerate() {
                        let group: Vec<usize> = shards
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| i % middles.len() == m)
                            .map(|(_, &c)| c)
                            .collect();
                        components[mid].work = gather(group, opts.middle_timeout);
                    }
                    components[front].work = gather(middles.clone(), opts.front_timeout);
                }
            }
            ServiceSpec::Recommender(rs) => {
                if rs.k == 0 || rs.pool < rs.k {
                    return Err(ConfigError::invalid("recommender needs pool >= k > 0"));
                }
                let front = push(
                    &mut components,
                    "front".into(),
                    expand(&opts.front_endpoints, "front", 80, 0),
                    Role::Front,
                    opts.front_workers,
                    Work::Leaf(ServiceTimeModel::lognormal(Nanos::ZERO, 0.0)),
                );
                let mut children = Vec::new();
                let mut timeouts = Vec::new();
                for (i, (name, model)) in [
                    ("small", rs.small_db_latency_model),
                    ("large", rs.large_db_latency_model),
                ]
                .into_iter()
                .enumerate()
                {
                    let engine = push(
                        &mut components,
                        format!("{name}-engine"),
                        expand(&opts.middle_endpoints, "engine", 8080, i),
                        middle_role(i),
                        opts.middle_workers,
                        Work::Leaf(ServiceTimeModel::lognormal(Nanos::ZERO, 0.0)),
                    );
                    let db = push(
                        &mut components,
                        format!("{name}-db"),
                        expand(&opts.back_endpoints, "db", 1064, i),
                        Role::Back,
                        opts.back_workers,
                        Work::Leaf(model),
                    );
                    components[engine].work = Work::ScatterGather {
                        children: vec![db],
                        merge: MergeRule::TopK(rs.k),
                        pre_cost: Nanos(rs.engine_cost.0 / 2),
                        merge_cost: Nanos(rs.engine_cost.0 / 2),
                        timeouts: vec![None],
                    };
                    children.push(engine);
                    timeouts.push(Some(rs.online_timeout));
                }
                if let Some(t) = rs.aux_timeout {
                    let aux = push(
                        &mut components,
                        "aux".into(),
                        expand(&opts.back_endpoints, "db", 1064, 2),
                        Role::Back,
                        opts.back_workers,
                        Work::Leaf(ServiceTimeModel::lognormal(Nanos::from_millis(150), 0.6)),
                    );
                    children.push(aux);
                    timeouts.push(Some(t));
                }
                components[front].work = Work::ScatterGather {
                    children,
                    merge: MergeRule::Prefer(vec![1, 0]),
                    pre_cost: opts.front_cost,
                    merge_cost: opts.merge_cost,
                    timeouts,
                };
                shard_of = vec![None; components.len()];
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &components {
            if !seen.insert(c.endpoint.clone()) {
                return Err(ConfigError::invalid(format!(
                    "duplicate endpoint {}:{}",
                    c.endpoint.address, c.endpoint.port
                )));
            }
        }
        Ok(Service {
            spec,
            fronts: vec![0],
            components,
            heavy_multiplier: opts.heavy_multiplier,
            rng,
            shard_of,
        })
    }

    pub fn spec(&self) -> &ServiceSpec {
        &self.spec
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.components
    }

    pub fn component(&self, idx: usize) -> &ComponentSpec {
        &self.components[idx]
    }

    pub fn fronts(&self) -> &[usize] {
        &self.fronts
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    /// Indices of the components whose role can be reassigned (aggregators, engines).
    pub fn assignable(&self) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role != Role::Front && !c.is_leaf())
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy of the service with the given components assigned a role.
    pub fn with_roles(&self, roles: &[(usize, Role)]) -> Service {
        let mut s = self.clone();
        for &(i, role) in roles {
            if s.components[i].role != Role::Front && role != Role::Front {
                s.components[i].role = role;
                s.components[i].memoize = role == Role::Back;
            }
        }
        s
    }

    /// Copy with a different online timeout on every child of `component`.
    pub fn with_timeout(&self, component: usize, timeout: Option<Nanos>) -> Service {
        let mut s = self.clone();
        if let Work::ScatterGather { timeouts, .. } = &mut s.components[component].work {
            timeouts.iter_mut().for_each(|t| *t = timeout);
        }
        s
    }

    /// Copy with a different timeout on the call from `component` to its child `child`.
    pub fn with_child_timeout(&self, component: usize, child: usize, timeout: Option<Nanos>) -> Service {
        let mut s = self.clone();
        if let Work::ScatterGather { children, timeouts, .. } = &mut s.components[component].work {
            if let Some(pos) = children.iter().position(|&c| c == child) {
                timeouts[pos] = timeout;
            }
        }
        s
    }

    fn shard_weights(&self, params: &[u8]) -> Vec<f64> {
        let ServiceSpec::ShardedSearch(ss) = &self.spec else {
            return Vec::new();
        };
        let (class, _) = QueryClass::decode(params);
        let skew = if class == QueryClass::Heavy {
            ss.heavy_skew
        } else {
            ss.score_skew
        };
        let mut rng = self.rng.keyed_rng("shard-rank", params);
        let ranks = index::sample(&mut rng, ss.shard_count, ss.shard_count);
        let mut w = vec![0.0; ss.shard_count];
        for (rank, shard) in ranks.iter().enumerate() {
            w[shard] = 1.0 / ((rank + 1) as f64).powf(skew);
        }
        w
    }

    /// Service time of a leaf for one invocation; a pure function of the query.
    pub fn leaf_time(&self, component: usize, params: &[u8]) -> Nanos {
        let c = &self.components[component];
        let Work::Leaf(model) = &c.work else {
            return Nanos::ZERO;
        };
        let mut key = params.to_vec();
        key.extend_from_slice(&c.id.0.to_le_bytes());
        let mut rng = self.rng.keyed_rng("leaf-time", &key);
        let mut t = model.sample(&mut rng).as_secs_f64();
        let (class, _) = QueryClass::decode(params);
        if class == QueryClass::Heavy {
            t *= self.heavy_multiplier;
        }
        if let (ServiceSpec::ShardedSearch(ss), Some(shard)) =
            (&self.spec, self.shard_of.get(component).copied().flatten())
        {
            let w = self.shard_weights(params);
            let total: f64 = w.iter().sum();
            let rel = w[shard] * w.len() as f64 / total;
            let corr = if class == QueryClass::Heavy {
                ss.heavy_relevance_time_corr
            } else {
                ss.relevance_time_corr
            };
            t *= rel.powf(corr).clamp(1.0 / MAX_RELEVANCE_FACTOR, MAX_RELEVANCE_FACTOR);
        }
        Nanos::from_secs_f64(t)
    }

    /// Reply payload of a leaf.
    pub fn leaf_reply(&self, component: usize, params: &[u8]) -> Vec<u8> {
        match &self.spec {
            ServiceSpec::ShardedSearch(ss) => match self.shard_of.get(component).copied().flatten() {
                Some(shard) => encode_items(&self.shard_top_k(ss, shard, params)),
                None => encode_items(&[]),
            },
            ServiceSpec::Recommender(rs) => {
                let name = &self.components[component].name;
                if name == "large-db" {
                    encode_items(&self.recommend(rs, params, false))
                } else if name == "small-db" {
                    encode_items(&self.recommend(rs, params, true))
                } else {
                    encode_items(&[])
                }
            }
        }
    }

    fn shard_top_k(&self, ss: &ShardedSearchSpec, shard: usize, params: &[u8]) -> Vec<Item> {
        let w = self.shard_weights(params)[shard];
        let mut key = params.to_vec();
        key.extend_from_slice(&(shard as u64).to_le_bytes());
        let mut rng = self.rng.keyed_rng("shard-docs", &key);
        // Order statistics of docs_per_shard uniforms, largest first.
        let mut top = Vec::with_capacity(ss.k);
        let mut cur = 1.0f64;
        for i in 0..ss.k {
            let u: f64 = rng.random();
            cur *= u.powf(1.0 / (ss.docs_per_shard - i) as f64);
            top.push(cur);
        }
        let picks = index::sample(&mut rng, ss.docs_per_shard, ss.k);
        let base = (shard * ss.docs_per_shard) as u64;
        top.into_iter()
            .zip(picks.iter())
            .map(|(score, local)| Item {
                id: base + local as u64,
                score: score * w,
            })
            .collect()
    }

    fn recommend(&self, rs: &RecommenderSpec, params: &[u8], small: bool) -> Vec<Item> {
        let mut rng = self.rng.keyed_rng("catalog", params);
        let ids = index::sample(&mut rng, 1_000_000, rs.pool);
        let noise = Normal::new(0.0, rs.noise.max(0.0)).expect("finite noise");
        let mut items: Vec<Item> = ids
            .iter()
            .map(|id| {
                let truth: f64 = rng.random();
                let err = noise.sample(&mut rng);
                Item {
                    id: id as u64,
                    score: if small { truth + err } else { truth },
                }
            })
            .collect();
        items.sort_by(rank_order);
        items.truncate(rs.k);
        items
    }

    /// Merge of the replies a component received; `replies[i]` belongs to
    /// `children[i]`.
    pub fn merge(&self, component: usize, replies: &[Option<Vec<u8>>]) -> Vec<u8> {
        let Work::ScatterGather { merge, .. } = &self.components[component].work else {
            return encode_items(&[]);
        };
        match merge {
            MergeRule::TopK(k) => {
                let mut all: Vec<Item> = replies
                    .iter()
                    .flatten()
                    .flat_map(|r| decode_items(r).unwrap_or_default())
                    .collect();
                all.sort_by(rank_order);
                all.dedup_by_key(|i| i.id);
                all.truncate(*k);
                encode_items(&all)
            }
            MergeRule::Prefer(order) => order
                .iter()
                .find_map(|&i| replies.get(i).cloned().flatten())
                .unwrap_or_else(|| encode_items(&[])),
        }
    }

    /// The mature answer computed directly, with every component contributing.
    pub fn reference(&self, params: &[u8]) -> Vec<Item> {
        match &self.spec {
            ServiceSpec::ShardedSearch(ss) => {
                let mut all: Vec<Item> = (0..ss.shard_count)
                    .flat_map(|s| self.shard_top_k(ss, s, params))
                    .collect();
                all.sort_by(rank_order);
                all.truncate(ss.k);
                all
            }
            ServiceSpec::Recommender(rs) => self.recommend(rs, params, false),
        }
    }

    /// Online answer when only the shards in `available` reply (flat search only).
    pub fn answer_from_shards(&self, params: &[u8], available: &[usize]) -> Vec<Item> {
        let ServiceSpec::ShardedSearch(ss) = &self.spec else {
            return Vec::new();
        };
        let mut all: Vec<Item> = available
            .iter()
            .flat_map(|&s| self.shard_top_k(ss, s, params))
            .collect();
        all.sort_by(rank_order);
        all.truncate(ss.k);
        all
    }
}

/// Ranking order: score descending, then item id ascending.
pub fn rank_order(a: &Item, b: &Item) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// Item list wire form: count u32 BE, then (id u64 BE, score f64 bits BE) per item.
pub fn encode_items(items: &[Item]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + items.len() * 16);
    out.extend_from_slice(&(items.len() as u32).to_be_bytes());
    for it in items {
        out.extend_from_slice(&it.id.to_be_bytes());
        out.extend_from_slice(&it.score.to_bits().to_be_bytes());
    }
    out
}

pub fn decode_items(buf: &[u8]) -> Option<Vec<Item>> {
    let n = u32::from_be_bytes(buf.get(..4)?.try_into().ok()?) as usize;
    let body = buf.get(4..)?;
    if body.len() != n * 16 {
        return None;
    }
    Some(
        body.chunks_exact(16)
            .map(|c| Item {
                id: u64::from_be_bytes(c[..8].try_into().unwrap()),
                score: f64::from_bits(u64::from_be_bytes(c[8..].try_into().unwrap())),
            })
            .collect(),
    )
}

pub fn answer_from_payload(
    buf: &[u8],
    produced_at: Nanos,
    kind: AnswerKind,
    timed_out: std::collections::BTreeSet<ComponentId>,
) -> Result<Answer, AnswerError> {
    Answer::new(decode_items(buf).unwrap_or_default(), produced_at, kind, timed_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::true_positive_rate;

    fn search(shards: usize) -> Service {
        Service::build(
            ServiceSpec::ShardedSearch(ShardedSearchSpec {
                shard_count: shards,
                ..ShardedSearchSpec::default()
            }),
            TopologyOptions::default(),
            5,
        )
        .unwrap()
    }

    fn params(i: u64, class: QueryClass) -> Vec<u8> {
        class.encode(i)
    }

    #[test]
    fn items_round_trip() {
        let items = vec![Item { id: 4, score: 0.5 }, Item { id: 9, score: -1.0 }];
        assert_eq!(decode_items(&encode_items(&items)).unwrap(), items);
        assert!(decode_items(&[0, 0, 0, 1]).is_none());
    }

    #[test]
    fn shards_hold_disjoint_ids_and_reference_is_global_top_k() {
        let s = search(8);
        let p = params(3, QueryClass::Light);
        let mut all = Vec::new();
        for c in 0..s.components().len() {
            if s.component(c).role == Role::Back {
                all.extend(decode_items(&s.leaf_reply(c, &p)).unwrap());
            }
        }
        let mut ids: Vec<u64> = all.iter().map(|i| i.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), all.len());
        all.sort_by(rank_order);
        all.truncate(10);
        assert_eq!(s.reference(&p), all);
    }

    #[test]
    fn full_merge_equals_reference() {
        let s = search(6);
        let p = params(11, QueryClass::Heavy);
        let replies: Vec<Option<Vec<u8>>> = s
            .component(0)
            .children()
            .iter()
            .map(|&c| Some(s.leaf_reply(c, &p)))
            .collect();
        let merged = decode_items(&s.merge(0, &replies)).unwrap();
        assert_eq!(merged, s.reference(&p));
    }

    #[test]
    fn slow_shard_is_excluded() {
        let s = search(4);
        let p = params(1, QueryClass::Light);
        let children = s.component(0).children().to_vec();
        let replies: Vec<Option<Vec<u8>>> = children
            .iter()
            .enumerate()
            .map(|(i, &c)| (i != 3).then(|| s.leaf_reply(c, &p)))
            .collect();
        let merged = decode_items(&s.merge(0, &replies)).unwrap();
        assert_eq!(merged, s.answer_from_shards(&p, &[0, 1, 2]));
    }

    #[test]
    fn leaf_time_is_deterministic_and_heavy_is_slower_on_average() {
        let s = search(8);
        let shard = s.component(0).children()[0];
        let p = params(42, QueryClass::Light);
        assert_eq!(s.leaf_time(shard, &p), s.leaf_time(shard, &p));
        let mean = |class: QueryClass| {
            (0..2000u64)
                .map(|i| s.leaf_time(shard, &params(i, class)).as_secs_f64())
                .sum::<f64>()
                / 2000.0
        };
        assert!(mean(QueryClass::Heavy) > 1.15 * mean(QueryClass::Light));
    }

    #[test]
    fn recommender_prefers_large_db() {
        let s = Service::build(
            ServiceSpec::Recommender(RecommenderSpec::default()),
            TopologyOptions::default(),
            1,
        )
        .unwrap();
        let p = params(7, QueryClass::Light);
        let small = s.leaf_reply(s.find("small-db").unwrap(), &p);
        let large = s.leaf_reply(s.find("large-db").unwrap(), &p);
        assert_eq!(s.merge(0, &[Some(small.clone()), Some(large.clone())]), large);
        assert_eq!(s.merge(0, &[Some(small.clone()), None]), small);
        let reference = Answer::new(s.reference(&p), Nanos::ZERO, AnswerKind::Mature, Default::default()).unwrap();
        let online = answer_from_payload(&small, Nanos::ZERO, AnswerKind::Online, Default::default()).unwrap();
        let q = true_positive_rate(&online, &reference);
        assert!(q < 1.0 && q > 0.0, "small-db overlap {q}");
    }

    #[test]
    fn endpoints_expand_patterns() {
        let opts = TopologyOptions {
            back_endpoints: AddressPattern::parse_list("10.244.2.*; 10.245.2.*:1064").unwrap(),
            ..TopologyOptions::default()
        };
        let s = Service::build(ServiceSpec::ShardedSearch(ShardedSearchSpec::default()), opts, 0).unwrap();
        let shard = |i: usize| s.component(s.find(&format!("shard-{i}")).unwrap()).endpoint.clone();
        assert_eq!(shard(1), Endpoint::new("10.244.2.1", 1064));
        assert_eq!(shard(2), Endpoint::new("10.245.2.1", 1064));
        assert_eq!(shard(3), Endpoint::new("10.244.2.2", 1064));
    }

    #[test]
    fn middles_split_shards() {
        let s = Service::build(
            ServiceSpec::ShardedSearch(ShardedSearchSpec {
                middles: 2,
                ..ShardedSearchSpec::default()
            }),
            TopologyOptions::default(),
            0,
        )
        .unwrap();
        let mids = s.component(0).children().to_vec();
        assert_eq!(mids.len(), 2);
        let total: usize = mids.iter().map(|&m| s.component(m).children().len()).sum();
        assert_eq!(total, 8);
        assert_eq!(s.assignable(), mids);
        let p = params(5, QueryClass::Light);
        let mid_replies: Vec<Option<Vec<u8>>> = mids
            .iter()
            .map(|&m| {
                let r: Vec<Option<Vec<u8>>> = s
                    .component(m)
                    .children()
                    .iter()
                    .map(|&c| Some(s.leaf_reply(c, &p)))
                    .collect();
                Some(s.merge(m, &r))
            })
            .collect();
        assert_eq!(decode_items(&s.merge(0, &mid_replies)).unwrap(), s.reference(&p));
    }
}
