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

//! Answer quality: similarity functions, paired samples and the rolling window
//! that feeds the controller.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Answer;
use crate::time::Nanos;

/// A service-specific similarity between an online and a mature answer, in [0, 1].
pub type SimilarityFn = Arc<dyn Fn(&Answer, &Answer) -> f64 + Send + Sync>;

/// Fraction of mature items present in the online answer. An empty mature
/// answer scores 1.0: nothing was missed.
pub fn true_positive_rate(online: &Answer, mature: &Answer) -> f64 {
    if mature.is_empty() {
        return 1.0;
    }
    let online_ids: HashSet<u64> = online.item_ids().collect();
    let found = mature.item_ids().filter(|id| online_ids.contains(id)).count();
    found as f64 / mature.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QualityError {
    #[error("unknown answer quality function `{0}`")]
    Unknown(String),
    #[error("answer quality function `{0}` is already registered")]
    Duplicate(String),
}

/// Named similarity functions. `default` and `tpr` resolve to the true positive rate.
#[derive(Clone)]
pub struct SimilarityRegistry {
    functions: BTreeMap<String, SimilarityFn>,
}

impl std::fmt::Debug for SimilarityRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.functions.keys()).finish()
    }
}

impl Default for SimilarityRegistry {
    fn default() -> Self {
        let tpr: SimilarityFn = Arc::new(true_positive_rate);
        let mut functions = BTreeMap::new();
        functions.insert("tpr".to_string(), tpr.clone());
        functions.insert("default".to_string(), tpr);
        Self { functions }
    }
}

impl SimilarityRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, f: SimilarityFn) -> Result<(), QualityError> {
        let key = name.trim().to_ascii_lowercase();
        if self.functions.contains_key(&key) {
            return Err(QualityError::Duplicate(name.to_string()));
        }
        self.functions.insert(key, f);
        Ok(())
    }

    pub fn resolve(&self, name: &str) -> Result<SimilarityFn, QualityError> {
        self.functions
            .get(&name.trim().to_ascii_lowercase())
            .cloned()
            .ok_or_else(|| QualityError::Unknown(name.to_string()))
    }
}

/// A completed online/mature pair.
#[derive(Clone, Debug, PartialEq)]
pub struct QualitySample {
    pub query_id: u64,
    pub online: Answer,
    pub mature: Answer,
    pub score: f64,
    pub completed_at: Nanos,
}

impl QualitySample {
    pub fn new(query_id: u64, online: Answer, mature: Answer, similarity: &SimilarityFn, completed_at: Nanos) -> Self {
        let score = similarity(&online, &mature).clamp(0.0, 1.0);
        Self {
            query_id,
            online,
            mature,
            score,
            completed_at,
        }
    }
}

/// The most recent `capacity` samples.
#[derive(Clone, Debug)]
pub struct QualityWindow {
    capacity: usize,
    samples: VecDeque<QualitySample>,
    aggregate: Option<f64>,
}

impl QualityWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            samples: VecDeque::with_capacity(capacity),
            aggregate: None,
        }
    }

    pub fn push(&mut self, sample: QualitySample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        // Recomputed from scratch so the aggregate never drifts from the ring.
        let sum: f64 = self.samples.iter().map(|s| s.score).sum();
        self.aggregate = Some(sum / self.samples.len() as f64);
    }

    /// Mean score of the current ring; `None` means no estimate yet.
    pub fn window_quality(&self) -> Option<f64> {
        self.aggregate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &QualitySample> {
        self.samples.iter()
    }
}

/// One row of the quality trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub completed_at_ns: u64,
    pub query_id: u64,
    pub score: Option<f64>,
    pub online_size: usize,
    pub mature_size: usize,
    pub mature_failed_flag: u8,
}

pub fn write_quality_csv<W: Write>(out: W, rows: &[QualityRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_quality_csv<R: Read>(input: R) -> csv::Result<Vec<QualityRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AnswerKind;

    fn ans(ids: &[u64], kind: AnswerKind) -> Answer {
        Answer::from_ids(ids, kind).unwrap()
    }

    #[test]
    fn tpr_cases() {
        use AnswerKind::*;
        assert_eq!(
            true_positive_rate(&ans(&[1, 2, 3], Online), &ans(&[1, 2, 3], Mature)),
            1.0
        );
        assert_eq!(true_positive_rate(&ans(&[], Online), &ans(&[1, 2], Mature)), 0.0);
        assert_eq!(
            true_positive_rate(&ans(&[1, 2], Online), &ans(&[1, 2, 3, 4], Mature)),
            0.5
        );
        assert_eq!(true_positive_rate(&ans(&[5], Online), &ans(&[], Mature)), 1.0);
        // Rank-insensitive.
        assert_eq!(
            true_positive_rate(&ans(&[3, 2, 1], Online), &ans(&[1, 2, 3], Mature)),
            1.0
        );
    }

    #[test]
    fn registry() {
        let mut reg = SimilarityRegistry::new();
        let d = reg.resolve("default").unwrap();
        assert!(Arc::ptr_eq(&d, &reg.resolve("tpr").unwrap()));
        assert_eq!(
            reg.resolve("unknown-metric").err(),
            Some(QualityError::Unknown("unknown-metric".into()))
        );
        let overlap: SimilarityFn = Arc::new(|o: &Answer, m: &Answer| {
            let k = m.len().min(3);
            if k == 0 {
                return 1.0;
            }
            let top: HashSet<u64> = m.item_ids().take(k).collect();
            o.item_ids().take(k).filter(|i| top.contains(i)).count() as f64 / k as f64
        });
        reg.register("overlap@3", overlap.clone()).unwrap();
        assert!(Arc::ptr_eq(&overlap, &reg.resolve("overlap@3").unwrap()));
        assert!(reg.register("tpr", overlap).is_err());
    }

    fn sample(score_ids: (&[u64], &[u64])) -> QualitySample {
        let f = SimilarityRegistry::new().resolve("tpr").unwrap();
        QualitySample::new(
            0,
            ans(score_ids.0, AnswerKind::Online),
            ans(score_ids.1, AnswerKind::Mature),
            &f,
            Nanos::ZERO,
        )
    }

    #[test]
    fn window_mean() {
        let mut w = QualityWindow::new(20);
        assert_eq!(w.window_quality(), None);
        for _ in 0..3 {
            w.push(sample((&[1], &[1])));
        }
        assert_eq!(w.window_quality(), Some(1.0));
        let mut w = QualityWindow::new(20);
        w.push(sample((&[1], &[1])));
        w.push(sample((&[], &[1])));
        assert_eq!(w.window_quality(), Some(0.5));
    }

    #[test]
    fn window_keeps_most_recent() {
        let mut w = QualityWindow::new(2);
        w.push(sample((&[], &[1])));
        w.push(sample((&[1], &[1])));
        w.push(sample((&[1], &[1])));
        assert_eq!(w.len(), 2);
        assert_eq!(w.window_quality(), Some(1.0));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            QualityRow {
                completed_at_ns: 5,
                query_id: 1,
                score: Some(0.5),
                online_size: 2,
                mature_size: 4,
                mature_failed_flag: 0,
            },
            QualityRow {
                completed_at_ns: 9,
                query_id: 2,
                score: None,
                online_size: 3,
                mature_size: 0,
                mature_failed_flag: 1,
            },
        ];
        let mut buf = Vec::new();
        write_quality_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("completed_at_ns,query_id,score,online_size,mature_size,mature_failed_flag\n"));
        assert_eq!(read_quality_csv(&buf[..]).unwrap(), rows);
    }

    proptest::proptest! {
        #[test]
        fn tpr_bounds(a in proptest::collection::btree_set(0u64..40, 0..15), b in proptest::collection::btree_set(0u64..40, 0..15)) {
            let a: Vec<u64> = a.into_iter().collect();
            let b: Vec<u64> = b.into_iter().collect();
            let s = true_positive_rate(&ans(&a, AnswerKind::Online), &ans(&b, AnswerKind::Mature));
            proptest::prop_assert!((0.0..=1.0).contains(&s));
            if !b.is_empty() {
                proptest::prop_assert_eq!(true_positive_rate(&ans(&b, AnswerKind::Online), &ans(&b, AnswerKind::Mature)), 1.0);
            }
        }
    }
}
