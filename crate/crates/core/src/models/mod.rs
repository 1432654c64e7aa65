//! The preference-learning method families, each exposing train / score /
//! predict over joint feature-map embeddings.
//!
//! Score-based families (vanilla, individual, conditional, user-embedding
//! trunk, variational) assign a reward to each response and convert score
//! gaps to probabilities through the Bradley-Terry link. The in-context
//! meta-learned family and the retrieval vote produce a pair probability
//! directly and need a context store instead of a user table.

mod adapt;
mod gpo;
mod knn;
mod linear;
mod prm;
pub mod verify;
mod vpl;

pub use adapt::{adapt_finetune, adapt_similar_user};
pub use gpo::{train_gpo_lite, GpoConfig, GpoModel};
pub use knn::{build_knn, KnnModel, StoredExample, DEFAULT_K};
pub use linear::{
    train_conditional, train_individual, train_vanilla, ConditionalModel, IndividualModel,
    VanillaModel,
};
pub use prm::{train_prm, PrmModel, DEFAULT_ALPHA};
pub use vpl::{train_vpl, VplConfig, VplModel};

use alloc::string::String;
use alloc::vec::Vec;

use crate::characterize::{majority_label, MajorityVote};
use crate::data::{
    group_by_triple, ComparisonRecord, DataError, Embedding, PreferenceDataset, UserId,
};
use crate::engine::{bt_prob, EngineError};
use crate::rng::Rng;
use crate::synthgen::{feature_map, SynthError};

/// User id assigned to majority-aggregated records.
pub const AGGREGATE_USER: &str = "majority";

/// Pair-level output: preference probability plus raw scores where the
/// family defines them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredPair {
    pub p_prefer_y1: f64,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
}

impl ScoredPair {
    pub fn from_scores(r1: f64, r2: f64) -> Self {
        ScoredPair {
            p_prefer_y1: bt_prob(r1, r2),
            r1: Some(r1),
            r2: Some(r2),
        }
    }
}

/// How to score users missing from a model's user table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FallbackPolicy {
    /// Unknown users are an error.
    Strict,
    /// Score through the model's shared/user-agnostic component.
    Shared,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScoreError {
    UnseenUser(UserId),
    NoExamples(UserId),
    NoContext(UserId),
    NoSharedComponent(&'static str),
    PairwiseOnly(&'static str),
    Feature(SynthError),
}

impl core::fmt::Display for ScoreError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ScoreError::UnseenUser(u) => write!(f, "unseen user {u}"),
            ScoreError::NoExamples(u) => write!(f, "no examples for user {u}"),
            ScoreError::NoContext(u) => write!(f, "no context set for user {u}"),
            ScoreError::NoSharedComponent(m) => {
                write!(f, "{m} has no user-agnostic component to fall back to")
            }
            ScoreError::PairwiseOnly(m) => {
                write!(f, "{m} scores pairs through its context, not single responses")
            }
            ScoreError::Feature(e) => write!(f, "{e}"),
        }
    }
}

impl From<SynthError> for ScoreError {
    fn from(e: SynthError) -> Self {
        ScoreError::Feature(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    Engine(EngineError),
    Data(DataError),
    Feature(SynthError),
    EmptyAggregate,
    EmptyTrainingData,
    UserTooFewRecords {
        user: UserId,
        needed: usize,
        got: usize,
    },
    NotByUserSplit,
    TooFewUsers {
        needed: usize,
        got: usize,
    },
    BadHyper(&'static str),
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::Engine(e) => write!(f, "{e}"),
            ModelError::Data(e) => write!(f, "{e}"),
            ModelError::Feature(e) => write!(f, "{e}"),
            ModelError::EmptyAggregate => write!(f, "majority aggregation left no records"),
            ModelError::EmptyTrainingData => write!(f, "no training records"),
            ModelError::UserTooFewRecords { user, needed, got } => {
                write!(f, "user {user} has {got} records, needs at least {needed}")
            }
            ModelError::NotByUserSplit => write!(f, "this method requires a by-user split"),
            ModelError::TooFewUsers { needed, got } => {
                write!(f, "needs at least {needed} users, got {got}")
            }
            ModelError::BadHyper(msg) => write!(f, "invalid hyperparameter: {msg}"),
        }
    }
}

impl From<EngineError> for ModelError {
    fn from(e: EngineError) -> Self {
        ModelError::Engine(e)
    }
}

impl From<DataError> for ModelError {
    fn from(e: DataError) -> Self {
        ModelError::Data(e)
    }
}

impl From<SynthError> for ModelError {
    fn from(e: SynthError) -> Self {
        ModelError::Feature(e)
    }
}

/// Feature gap of a comparison: feature_map(x, y1) - feature_map(x, y2).
pub fn pair_gap(rec: &ComparisonRecord) -> Result<Vec<f64>, SynthError> {
    Ok(feature_map(&rec.x, &rec.y1)?.sub(&feature_map(&rec.x, &rec.y2)?))
}

/// Gap oriented so the preferred response scores positive.
pub fn signed_gap(rec: &ComparisonRecord) -> Result<Vec<f64>, SynthError> {
    let mut gap = pair_gap(rec)?;
    if rec.label == 0 {
        for v in &mut gap {
            *v = -*v;
        }
    }
    Ok(gap)
}

/// Collapses the dataset onto one synthetic aggregate annotator: the
/// majority label per multi-annotator triple (ties dropped), single-annotator
/// records passed through. Triple order follows first appearance.
pub fn aggregate_majority(dataset: &PreferenceDataset) -> PreferenceDataset {
    let groups = group_by_triple(dataset);
    let mut seen = alloc::collections::BTreeSet::new();
    let mut records = Vec::new();
    for rec in dataset.records() {
        if !seen.insert(rec.triple_id.clone()) {
            continue;
        }
        let annotations = &groups[&rec.triple_id];
        let users: alloc::collections::BTreeSet<&UserId> =
            annotations.iter().map(|(u, _)| u).collect();
        let label = if users.len() == 1 {
            annotations[0].1
        } else {
            match majority_label(annotations).expect("group is nonempty") {
                MajorityVote::Label(l) => l,
                MajorityVote::Tie => continue,
            }
        };
        records.push(ComparisonRecord {
            triple_id: rec.triple_id.clone(),
            user_id: AGGREGATE_USER.into(),
            x: rec.x.clone(),
            y1: rec.y1.clone(),
            y2: rec.y2.clone(),
            label,
        });
    }
    PreferenceDataset::new(dataset.dimension(), records, dataset.metadata.clone())
        .expect("aggregate of a valid dataset is valid")
}

/// Anything that can judge a comparison record.
pub trait PairScorer {
    fn scored_pair(
        &self,
        rec: &ComparisonRecord,
        policy: FallbackPolicy,
    ) -> Result<ScoredPair, ScoreError>;

    fn method_name(&self) -> String;
}

/// Tagged union over the trained method families.
#[derive(Clone, Debug, PartialEq)]
pub enum PreferenceModel {
    Vanilla(VanillaModel),
    Individual(IndividualModel),
    Conditional(ConditionalModel),
    Prm(PrmModel),
    Vpl(VplModel),
    GpoLite(GpoModel),
    Knn(KnnModel),
}

impl PreferenceModel {
    pub fn kind(&self) -> &'static str {
        match self {
            PreferenceModel::Vanilla(_) => "vanilla",
            PreferenceModel::Individual(_) => "individual",
            PreferenceModel::Conditional(_) => "conditional",
            PreferenceModel::Prm(_) => "prm",
            PreferenceModel::Vpl(_) => "vpl",
            PreferenceModel::GpoLite(_) => "gpo",
            PreferenceModel::Knn(_) => "knn",
        }
    }

    /// Reward of response `y` for `user`. Pairwise-only families
    /// (in-context, retrieval) refuse.
    pub fn score(
        &self,
        x: &Embedding,
        y: &Embedding,
        user: &UserId,
        policy: FallbackPolicy,
    ) -> Result<f64, ScoreError> {
        let features = feature_map(x, y)?;
        match self {
            PreferenceModel::Vanilla(m) => Ok(m.score_features(features.values())),
            PreferenceModel::Individual(m) => m.score_features(features.values(), user, policy),
            PreferenceModel::Conditional(m) => m.score_features(features.values(), user, policy),
            PreferenceModel::Prm(m) => m.score_features(features.values(), user, policy),
            PreferenceModel::Vpl(m) => m.score_features(features.values(), user, policy),
            PreferenceModel::GpoLite(_) => Err(ScoreError::PairwiseOnly("gpo")),
            PreferenceModel::Knn(_) => Err(ScoreError::PairwiseOnly("knn")),
        }
    }

    /// Predicted label: 1 iff y1 scores above y2, exact ties broken by a
    /// fair coin from `tie_rng`.
    pub fn predict(
        &self,
        rec: &ComparisonRecord,
        policy: FallbackPolicy,
        tie_rng: &mut Rng,
    ) -> Result<u8, ScoreError> {
        let pair = self.scored_pair(rec, policy)?;
        Ok(if pair.p_prefer_y1 > 0.5 {
            1
        } else if pair.p_prefer_y1 < 0.5 {
            0
        } else {
            tie_rng.coin() as u8
        })
    }
}

impl PairScorer for PreferenceModel {
    fn scored_pair(
        &self,
        rec: &ComparisonRecord,
        policy: FallbackPolicy,
    ) -> Result<ScoredPair, ScoreError> {
        match self {
            PreferenceModel::GpoLite(m) => m.scored_pair(rec, policy),
            PreferenceModel::Knn(m) => m.scored_pair(rec),
            _ => {
                let r1 = self.score(&rec.x, &rec.y1, &rec.user_id, policy)?;
                let r2 = self.score(&rec.x, &rec.y2, &rec.user_id, policy)?;
                Ok(ScoredPair::from_scores(r1, r2))
            }
        }
    }

    fn method_name(&self) -> String {
        String::from(self.kind())
    }
}

/// Ground-truth scorer built from generator profiles; the oracle reference
/// for evaluation tests and probe margins.
#[derive(Clone, Debug)]
pub struct OracleScorer {
    utilities: alloc::collections::BTreeMap<UserId, Vec<f64>>,
}

impl OracleScorer {
    pub fn new(
        profiles: &[crate::synthgen::UserProfile],
        archetypes: &[crate::synthgen::Archetype],
    ) -> Self {
        OracleScorer {
            utilities: profiles
                .iter()
                .map(|p| (p.user_id.clone(), p.mixture_vector(archetypes)))
                .collect(),
        }
    }
}

impl PairScorer for OracleScorer {
    fn scored_pair(
        &self,
        rec: &ComparisonRecord,
        _policy: FallbackPolicy,
    ) -> Result<ScoredPair, ScoreError> {
        let w = self
            .utilities
            .get(&rec.user_id)
            .ok_or_else(|| ScoreError::UnseenUser(rec.user_id.clone()))?;
        let r1 = feature_map(&rec.x, &rec.y1)?.dot(w);
        let r2 = feature_map(&rec.x, &rec.y2)?.dot(w);
        Ok(ScoredPair::from_scores(r1, r2))
    }

    fn method_name(&self) -> String {
        String::from("oracle")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{triple_id, DatasetMeta, TripleId};
    use alloc::format;
    use alloc::vec;

    fn rec(t: usize, user: &str, label: u8) -> ComparisonRecord {
        let x = Embedding::new(vec![t as f64, 0.5]);
        let y1 = Embedding::new(vec![1.0, 0.0]);
        let y2 = Embedding::new(vec![0.0, 1.0]);
        ComparisonRecord {
            triple_id: triple_id(&x, &y1, &y2),
            user_id: user.into(),
            x,
            y1,
            y2,
            label,
        }
    }

    fn dataset(rows: &[(usize, &str, u8)]) -> PreferenceDataset {
        let records = rows.iter().map(|&(t, u, l)| rec(t, u, l)).collect();
        PreferenceDataset::new(2, records, DatasetMeta::default()).unwrap()
    }

    #[test]
    fn aggregate_unanimous_keeps_each_triple_once() {
        let ds = dataset(&[(0, "a", 1), (0, "b", 1), (1, "a", 0), (1, "b", 0)]);
        let agg = aggregate_majority(&ds);
        assert_eq!(agg.len(), 2);
        assert!(agg.records().iter().all(|r| r.user_id.as_str() == AGGREGATE_USER));
        assert_eq!(agg.records()[0].label, 1);
        assert_eq!(agg.records()[1].label, 0);
    }

    #[test]
    fn aggregate_drops_tied_triples_and_passes_singletons() {
        let ds = dataset(&[(0, "a", 1), (0, "b", 0), (1, "a", 1)]);
        let agg = aggregate_majority(&ds);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg.records()[0].label, 1);
    }

    #[test]
    fn aggregate_matches_hand_vote_counts() {
        let mut rows = Vec::new();
        // triple 0: 3 of 5 vote 1; triple 1: 4 of 5 vote 0
        for u in 0..5usize {
            rows.push((0, format!("u{u}"), (u < 3) as u8));
            rows.push((1, format!("u{u}"), (u == 0) as u8));
        }
        let borrowed: Vec<(usize, &str, u8)> =
            rows.iter().map(|(t, u, l)| (*t, u.as_str(), *l)).collect();
        let ds = dataset(&borrowed);
        let agg = aggregate_majority(&ds);
        assert_eq!(agg.len(), 2);
        let by_triple: alloc::collections::BTreeMap<TripleId, u8> = agg
            .records()
            .iter()
            .map(|r| (r.triple_id.clone(), r.label))
            .collect();
        let t0 = rec(0, "a", 1).triple_id;
        let t1 = rec(1, "a", 1).triple_id;
        assert_eq!(by_triple[&t0], 1);
        assert_eq!(by_triple[&t1], 0);
    }

    #[test]
    fn signed_gap_flips_with_label() {
        let a = rec(0, "a", 1);
        let b = rec(0, "a", 0);
        let ga = signed_gap(&a).unwrap();
        let gb = signed_gap(&b).unwrap();
        assert_eq!(ga.len(), 4);
        for (x, y) in ga.iter().zip(&gb) {
            assert_eq!(*x, -*y);
        }
    }
}
