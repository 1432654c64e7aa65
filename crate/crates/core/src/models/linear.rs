//! Linear Bradley-Terry reward models: vanilla (aggregate), one-per-user,
//! and the user-conditioned variant.
//!
//! The conditional model realizes id-conditioning as a one-hot user block
//! concatenated to the features, i.e. a per-user bias plus shared feature
//! weights. The bias cancels inside every Bradley-Terry score difference, so
//! with strongly opposed users the shared weights absorb conflicting
//! gradients and the model degenerates to chance — the behaviour this family
//! is meant to exhibit under high disagreement.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::data::{PreferenceDataset, UserId};
use crate::engine::{optimize, Objective, OptimConfig, ParamSet, Tensor, Trace};
use crate::num;
use crate::rng::Rng;

use super::{aggregate_majority, signed_gap, FallbackPolicy, ModelError, ScoreError};

const VAL_SPLIT_TAG: u64 = 0x11AD;
/// Records held out for early stopping when the pool is large enough.
const VAL_FRACTION: f64 = 0.1;
const MIN_RECORDS_FOR_VAL: usize = 64;
const MAX_VAL_RECORDS: usize = 2000;

/// Linear BT objective over pre-oriented gap features:
/// loss_i = -log sigmoid(w . z_i).
pub(crate) struct LinearBtObjective {
    pub train: Vec<Vec<f64>>,
    pub val: Vec<Vec<f64>>,
}

impl LinearBtObjective {
    /// Splits oriented gaps into train/val by seed; small pools skip the
    /// validation set entirely.
    pub fn from_gaps(mut gaps: Vec<Vec<f64>>, seed: u64) -> Self {
        if gaps.len() < MIN_RECORDS_FOR_VAL {
            return LinearBtObjective {
                train: gaps,
                val: Vec::new(),
            };
        }
        let n_val = ((gaps.len() as f64 * VAL_FRACTION) as usize).min(MAX_VAL_RECORDS);
        let mut order: Vec<usize> = (0..gaps.len()).collect();
        Rng::derived(seed, &[VAL_SPLIT_TAG]).shuffle(&mut order);
        let val_idx: alloc::collections::BTreeSet<usize> =
            order.into_iter().take(n_val).collect();
        let mut train = Vec::with_capacity(gaps.len() - n_val);
        let mut val = Vec::with_capacity(n_val);
        for (i, gap) in gaps.drain(..).enumerate() {
            if val_idx.contains(&i) {
                val.push(gap);
            } else {
                train.push(gap);
            }
        }
        LinearBtObjective { train, val }
    }

    fn batch_loss(&self, rows: &[&[f64]], params: &ParamSet) -> (f64, ParamSet) {
        let w = params.get("w");
        let mut grad = params.zeros_like();
        let mut total = 0.0;
        let n = rows.len() as f64;
        for z in rows {
            let s: f64 = w.data.iter().zip(*z).map(|(a, b)| a * b).sum();
            total += -num::log_sigmoid(s);
            let coeff = -(1.0 - num::sigmoid(s)) / n;
            for (g, zi) in grad.get_mut("w").data.iter_mut().zip(*z) {
                *g += coeff * zi;
            }
        }
        (total / n, grad)
    }
}

impl Objective for LinearBtObjective {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn loss_and_grad(&self, params: &ParamSet, batch: &[usize], _rng: &mut Rng) -> (f64, ParamSet) {
        let rows: Vec<&[f64]> = batch.iter().map(|&i| self.train[i].as_slice()).collect();
        self.batch_loss(&rows, params)
    }

    fn val_loss(&self, params: &ParamSet, _rng: &mut Rng) -> Option<f64> {
        if self.val.is_empty() {
            return None;
        }
        let rows: Vec<&[f64]> = self.val.iter().map(|v| v.as_slice()).collect();
        Some(self.batch_loss(&rows, params).0)
    }
}

fn fit_linear(gaps: Vec<Vec<f64>>, dim: usize, optim: &OptimConfig) -> Result<(Vec<f64>, Trace), ModelError> {
    let objective = LinearBtObjective::from_gaps(gaps, optim.seed);
    let mut init = ParamSet::new();
    init.insert("w", Tensor::zeros(dim, 1));
    let (mut params, trace) = optimize(&objective, init, optim)?;
    params.quantize_sig9();
    Ok((params.get("w").data.clone(), trace))
}

fn oriented_gaps(records: &[&crate::data::ComparisonRecord]) -> Result<Vec<Vec<f64>>, ModelError> {
    records
        .iter()
        .map(|r| signed_gap(r).map_err(ModelError::from))
        .collect()
}

/// Single reward direction trained on the majority-aggregated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct VanillaModel {
    pub weights: Vec<f64>,
    pub optim: OptimConfig,
}

impl VanillaModel {
    pub fn score_features(&self, features: &[f64]) -> f64 {
        self.weights.iter().zip(features).map(|(a, b)| a * b).sum()
    }
}

pub fn train_vanilla(
    dataset: &PreferenceDataset,
    optim: &OptimConfig,
) -> Result<VanillaModel, ModelError> {
    let aggregate = aggregate_majority(dataset);
    if aggregate.is_empty() {
        return Err(ModelError::EmptyAggregate);
    }
    let gaps = oriented_gaps(&aggregate.records().iter().collect::<Vec<_>>())?;
    let dim = gaps[0].len();
    let (weights, _) = fit_linear(gaps, dim, optim)?;
    Ok(VanillaModel {
        weights,
        optim: optim.clone(),
    })
}

/// A dedicated reward direction per user, trained only on that user's data.
#[derive(Clone, Debug, PartialEq)]
pub struct IndividualModel {
    pub per_user: BTreeMap<UserId, Vec<f64>>,
    pub optim: OptimConfig,
}

impl IndividualModel {
    pub fn score_features(
        &self,
        features: &[f64],
        user: &UserId,
        policy: FallbackPolicy,
    ) -> Result<f64, ScoreError> {
        match (self.per_user.get(user), policy) {
            (Some(w), _) => Ok(w.iter().zip(features).map(|(a, b)| a * b).sum()),
            (None, FallbackPolicy::Strict) => Err(ScoreError::UnseenUser(user.clone())),
            (None, FallbackPolicy::Shared) => Err(ScoreError::NoSharedComponent("individual")),
        }
    }
}

/// Each user's model is fit with the same optimizer seed, so users with
/// identical data get identical weights.
pub fn train_individual(
    dataset: &PreferenceDataset,
    optim: &OptimConfig,
) -> Result<IndividualModel, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyTrainingData);
    }
    let mut per_user = BTreeMap::new();
    for user in dataset.users() {
        let records = dataset.records_of(user);
        let gaps = oriented_gaps(&records)?;
        let dim = gaps[0].len();
        let (weights, _) = fit_linear(gaps, dim, optim)?;
        per_user.insert(user.clone(), weights);
    }
    Ok(IndividualModel {
        per_user,
        optim: optim.clone(),
    })
}

/// Shared feature weights plus a per-user bias (one-hot user block).
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalModel {
    pub weights: Vec<f64>,
    pub bias: BTreeMap<UserId, f64>,
    pub optim: OptimConfig,
}

impl ConditionalModel {
    pub fn score_features(
        &self,
        features: &[f64],
        user: &UserId,
        policy: FallbackPolicy,
    ) -> Result<f64, ScoreError> {
        let shared: f64 = self.weights.iter().zip(features).map(|(a, b)| a * b).sum();
        match (self.bias.get(user), policy) {
            (Some(b), _) => Ok(b + shared),
            (None, FallbackPolicy::Shared) => Ok(shared),
            (None, FallbackPolicy::Strict) => Err(ScoreError::UnseenUser(user.clone())),
        }
    }
}

/// Trains on all records unaggregated; the user block only shifts scores, so
/// its gradient under the BT difference is identically zero.
pub fn train_conditional(
    dataset: &PreferenceDataset,
    optim: &OptimConfig,
) -> Result<ConditionalModel, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyTrainingData);
    }
    let gaps = oriented_gaps(&dataset.records().iter().collect::<Vec<_>>())?;
    let dim = gaps[0].len();
    let (weights, _) = fit_linear(gaps, dim, optim)?;
    let bias = dataset.users().iter().map(|u| (u.clone(), 0.0)).collect();
    Ok(ConditionalModel {
        weights,
        bias,
        optim: optim.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{triple_id, ComparisonRecord, DatasetMeta, Embedding};
    use crate::engine::grad_check;
    use alloc::format;


    /// Separable two-user dataset: both users follow w_true over gap features.
    fn separable_dataset(n_triples: usize, users: &[&str], seed: u64) -> PreferenceDataset {
        let mut rng = Rng::new(seed);
        let d = 4;
        let w_true: Vec<f64> = rng.normal_vec(2 * d);
        let mut records = Vec::new();
        for _ in 0..n_triples {
            let x = Embedding::new(rng.normal_vec(d));
            let y1 = Embedding::new(rng.normal_vec(d));
            let y2 = Embedding::new(rng.normal_vec(d));
            let gap = crate::synthgen::feature_map(&x, &y1)
                .unwrap()
                .sub(&crate::synthgen::feature_map(&x, &y2).unwrap());
            let margin: f64 = w_true.iter().zip(&gap).map(|(a, b)| a * b).sum();
            if num::abs(margin) < 0.3 {
                continue;
            }
            let label = (margin > 0.0) as u8;
            for user in users {
                records.push(ComparisonRecord {
                    triple_id: triple_id(&x, &y1, &y2),
                    user_id: (*user).into(),
                    x: x.clone(),
                    y1: y1.clone(),
                    y2: y2.clone(),
                    label,
                });
            }
        }
        PreferenceDataset::new(d, records, DatasetMeta::default()).unwrap()
    }

    fn accuracy(model: &dyn super::super::PairScorer, ds: &PreferenceDataset) -> f64 {
        let mut tie_rng = Rng::new(0);
        let correct = ds
            .records()
            .iter()
            .filter(|r| {
                let pair = model.scored_pair(r, FallbackPolicy::Strict).unwrap();
                let pred = if pair.p_prefer_y1 > 0.5 {
                    1
                } else if pair.p_prefer_y1 < 0.5 {
                    0
                } else {
                    tie_rng.coin() as u8
                };
                pred == r.label
            })
            .count();
        correct as f64 / ds.len() as f64
    }

    fn quick_optim(seed: u64) -> OptimConfig {
        OptimConfig {
            epochs: 80,
            seed,
            ..OptimConfig::default()
        }
    }

    #[test]
    fn vanilla_fits_separable_data() {
        let ds = separable_dataset(400, &["a", "b"], 3);
        let model = train_vanilla(&ds, &quick_optim(1)).unwrap();
        let pm = super::super::PreferenceModel::Vanilla(model);
        assert!(accuracy(&pm, &ds) >= 0.95);
    }

    #[test]
    fn vanilla_is_invariant_to_record_duplication() {
        let ds = separable_dataset(150, &["a"], 5);
        let doubled = {
            let mut records: Vec<ComparisonRecord> = ds.records().to_vec();
            records.extend(ds.records().iter().cloned());
            PreferenceDataset::new(ds.dimension(), records, DatasetMeta::default()).unwrap()
        };
        // aggregation collapses duplicates of the same unanimous triple,
        // so the training set and hence the model is identical
        let m1 = train_vanilla(&ds, &quick_optim(2)).unwrap();
        let m2 = train_vanilla(&doubled, &quick_optim(2)).unwrap();
        assert_eq!(m1.weights, m2.weights);
    }

    #[test]
    fn individual_users_with_identical_data_get_identical_weights() {
        let ds = separable_dataset(200, &["a", "b"], 7);
        let model = train_individual(&ds, &quick_optim(3)).unwrap();
        assert_eq!(model.per_user[&UserId::from("a")], model.per_user[&UserId::from("b")]);
    }

    #[test]
    fn individual_coin_flip_user_stays_near_chance() {
        // a user whose labels are fair coins carries no signal: accuracy on
        // fresh coin-labeled comparisons is chance up to binomial noise
        let coin_labeled = |seed: u64, coin_seed: u64| {
            let ds = separable_dataset(300, &["a"], seed);
            let mut rng = Rng::new(coin_seed);
            let records: Vec<ComparisonRecord> = ds
                .records()
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.label = rng.coin() as u8;
                    r
                })
                .collect();
            PreferenceDataset::new(ds.dimension(), records, DatasetMeta::default()).unwrap()
        };
        let train = coin_labeled(9, 77);
        let holdout = coin_labeled(10, 78);
        let model = train_individual(&train, &quick_optim(4)).unwrap();
        let pm = super::super::PreferenceModel::Individual(model);
        let acc = accuracy(&pm, &holdout);
        assert!((0.4..=0.6).contains(&acc), "coin-flip accuracy {acc}");
    }

    #[test]
    fn conditional_reduces_to_vanilla_for_one_user() {
        let ds = separable_dataset(250, &["solo"], 11);
        let cond = train_conditional(&ds, &quick_optim(5)).unwrap();
        let van = train_vanilla(&ds, &quick_optim(5)).unwrap();
        let pc = super::super::PreferenceModel::Conditional(cond);
        let pv = super::super::PreferenceModel::Vanilla(van);
        let (ac, av) = (accuracy(&pc, &ds), accuracy(&pv, &ds));
        assert!(num::abs(ac - av) < 0.01, "conditional {ac} vanilla {av}");
    }

    #[test]
    fn strict_policy_rejects_unseen_users() {
        let ds = separable_dataset(80, &["a"], 13);
        let model = train_individual(&ds, &quick_optim(6)).unwrap();
        let stranger = UserId::from("zz");
        let err = model
            .score_features(&[0.0; 8], &stranger, FallbackPolicy::Strict)
            .unwrap_err();
        assert_eq!(err, ScoreError::UnseenUser(stranger));
    }

    #[test]
    fn linear_objective_grad_check() {
        let ds = separable_dataset(60, &["a"], 15);
        let gaps: Vec<Vec<f64>> = ds.records().iter().map(|r| signed_gap(r).unwrap()).collect();
        let dim = gaps[0].len();
        let objective = LinearBtObjective {
            train: gaps,
            val: Vec::new(),
        };
        let mut params = ParamSet::new();
        let mut rng = Rng::new(8);
        params.insert("w", Tensor::glorot(dim, 1, &mut rng));
        let batch: Vec<usize> = (0..objective.train_len()).collect();
        let err = grad_check(&objective, &params, &batch, 100, 21);
        assert!(err < 1e-6, "linear grad err {err}");
    }

    #[test]
    fn per_user_bias_echoes_user_set() {
        let mut rows = Vec::new();
        for u in 0..4 {
            rows.push(format!("u{u}"));
        }
        let users: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        let ds = separable_dataset(100, &users, 17);
        let model = train_conditional(&ds, &quick_optim(7)).unwrap();
        assert_eq!(model.bias.len(), 4);
        assert!(model.bias.values().all(|b| *b == 0.0));
    }
}
