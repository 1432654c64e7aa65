//! Retrieval vote over a per-user example store. For a query comparison the
//! user's k most prompt-similar stored comparisons (cosine over prompt
//! embeddings) each vote by transferring their preferred-response direction;
//! votes are similarity-weighted and mapped to a probability.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::data::{ComparisonRecord, Embedding, PreferenceDataset, UserId};

use super::{ModelError, ScoreError, ScoredPair};

pub const DEFAULT_K: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct StoredExample {
    pub x: Embedding,
    pub y1: Embedding,
    pub y2: Embedding,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub store: BTreeMap<UserId, Vec<StoredExample>>,
}

/// Builds the read-only store from training records, in dataset order.
pub fn build_knn(dataset: &PreferenceDataset, k: usize) -> Result<KnnModel, ModelError> {
    if k == 0 {
        return Err(ModelError::BadHyper("k must be >= 1"));
    }
    if dataset.is_empty() {
        return Err(ModelError::EmptyTrainingData);
    }
    let mut store: BTreeMap<UserId, Vec<StoredExample>> = BTreeMap::new();
    for rec in dataset.records() {
        store.entry(rec.user_id.clone()).or_default().push(StoredExample {
            x: rec.x.clone(),
            y1: rec.y1.clone(),
            y2: rec.y2.clone(),
            label: rec.label,
        });
    }
    Ok(KnnModel { k, store })
}

impl KnnModel {
    pub fn scored_pair(&self, rec: &ComparisonRecord) -> Result<ScoredPair, ScoreError> {
        self.predict_pair(&rec.user_id, &rec.x, &rec.y1, &rec.y2)
    }

    /// Similarity-weighted neighbor vote:
    /// each of the k nearest stored comparisons votes with
    /// sign((y1 - y2) . (y_winner - y_loser)); p = (weighted vote + 1) / 2.
    pub fn predict_pair(
        &self,
        user: &UserId,
        x: &Embedding,
        y1: &Embedding,
        y2: &Embedding,
    ) -> Result<ScoredPair, ScoreError> {
        let examples = self
            .store
            .get(user)
            .filter(|ex| !ex.is_empty())
            .ok_or_else(|| ScoreError::NoExamples(user.clone()))?;

        // top-k by cosine similarity over prompts, ties broken by store order
        let mut ranked: Vec<(f64, usize)> = examples
            .iter()
            .enumerate()
            .map(|(i, ex)| (x.cosine(&ex.x), i))
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        ranked.truncate(self.k);

        let query_dir = y1.sub(y2);
        let mut vote_sum = 0.0;
        let mut weight_sum = 0.0;
        for (sim, idx) in ranked {
            let ex = &examples[idx];
            let (winner, loser) = if ex.label == 1 {
                (&ex.y1, &ex.y2)
            } else {
                (&ex.y2, &ex.y1)
            };
            let transfer: f64 = query_dir
                .iter()
                .zip(winner.sub(loser))
                .map(|(a, b)| a * b)
                .sum();
            let vote = if transfer > 0.0 {
                1.0
            } else if transfer < 0.0 {
                -1.0
            } else {
                0.0
            };
            let weight = sim.max(0.0);
            vote_sum += weight * vote;
            weight_sum += weight;
        }
        let mean_vote = if weight_sum > 0.0 {
            vote_sum / weight_sum
        } else {
            0.0
        };
        Ok(ScoredPair {
            p_prefer_y1: (mean_vote + 1.0) / 2.0,
            r1: None,
            r2: None,
        })
    }
}
