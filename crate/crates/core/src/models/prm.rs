//! User-embedding reward model with a dual objective: a user-specific
//! likelihood term (weight alpha) plus a user-agnostic term through a shared
//! generic embedding (weight 1 - alpha). Both run through one two-layer tanh
//! trunk over concat(features, embedding), so user structure is learned
//! jointly with the shared reward surface.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::data::{PreferenceDataset, UserId};
use crate::engine::{optimize, Objective, OptimConfig, ParamSet, Tensor};
use crate::num;
use crate::rng::Rng;
use crate::synthgen::feature_map;

use super::{FallbackPolicy, ModelError, ScoreError};

pub const PRM_WIDTH: usize = 32;
pub const PRM_EMB_DIM: usize = 8;
pub const DEFAULT_ALPHA: f64 = 0.8;

const INIT_TAG: u64 = 0x9314;
const EMB_INIT_SCALE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct PrmModel {
    pub params: ParamSet,
    pub user_index: BTreeMap<UserId, usize>,
    pub alpha: f64,
    pub optim: OptimConfig,
}

/// Trunk forward pass: s = w2 . tanh(W1 [features; emb] + b1) + b2.
fn trunk_score(params: &ParamSet, features: &[f64], emb: &[f64]) -> f64 {
    trunk_forward(params, features, emb).0
}

impl PrmModel {
    fn embedding(&self, user: &UserId, policy: FallbackPolicy) -> Result<&[f64], ScoreError> {
        match (self.user_index.get(user), policy) {
            (Some(&idx), _) => Ok(self.params.get("user_emb").row(idx)),
            (None, FallbackPolicy::Shared) => Ok(&self.params.get("generic_emb").data),
            (None, FallbackPolicy::Strict) => Err(ScoreError::UnseenUser(user.clone())),
        }
    }

    pub fn score_features(
        &self,
        features: &[f64],
        user: &UserId,
        policy: FallbackPolicy,
    ) -> Result<f64, ScoreError> {
        let emb = self.embedding(user, policy)?;
        Ok(trunk_score(&self.params, features, emb))
    }

    /// Score through the generic embedding regardless of user.
    pub fn score_generic(&self, features: &[f64]) -> f64 {
        trunk_score(&self.params, features, &self.params.get("generic_emb").data)
    }
}

pub(crate) struct PrmObjective {
    /// (winner features, loser features, user row index)
    pub train: Vec<(Vec<f64>, Vec<f64>, usize)>,
    pub val: Vec<(Vec<f64>, Vec<f64>, usize)>,
    pub alpha: f64,
    pub feat_dim: usize,
}

struct TrunkCache {
    xi: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

/// Two tanh layers of width 32 over concat(features, emb), linear readout.
fn trunk_forward(params: &ParamSet, features: &[f64], emb: &[f64]) -> (f64, TrunkCache) {
    let w1 = params.get("trunk_w1");
    let b1 = params.get("trunk_b1");
    let w2 = params.get("trunk_w2");
    let b2 = params.get("trunk_b2");
    let w3 = params.get("trunk_w3");
    let b3 = params.get("trunk_b3");
    let mut xi = Vec::with_capacity(features.len() + emb.len());
    xi.extend_from_slice(features);
    xi.extend_from_slice(emb);
    let h1: Vec<f64> = (0..w1.rows)
        .map(|i| {
            num::tanh(w1.row(i).iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>() + b1.data[i])
        })
        .collect();
    let h2: Vec<f64> = (0..w2.rows)
        .map(|i| {
            num::tanh(w2.row(i).iter().zip(&h1).map(|(a, b)| a * b).sum::<f64>() + b2.data[i])
        })
        .collect();
    let s = w3.data.iter().zip(&h2).map(|(a, b)| a * b).sum::<f64>() + b3.data[0];
    (s, TrunkCache { xi, h1, h2 })
}

/// Accumulates trunk gradients for one evaluation; returns the gradient
/// w.r.t. the embedding slice of the input.
fn trunk_backward(
    params: &ParamSet,
    grad: &mut ParamSet,
    cache: &TrunkCache,
    feat_dim: usize,
    ds: f64,
) -> Vec<f64> {
    let w1 = params.get("trunk_w1");
    let w2 = params.get("trunk_w2");
    let w3 = params.get("trunk_w3");
    let emb_dim = cache.xi.len() - feat_dim;
    let mut d_emb = alloc::vec![0.0; emb_dim];

    {
        let g3 = grad.get_mut("trunk_w3");
        for (g, h) in g3.data.iter_mut().zip(&cache.h2) {
            *g += ds * h;
        }
    }
    grad.get_mut("trunk_b3").data[0] += ds;

    let dpre2: Vec<f64> = (0..w2.rows)
        .map(|i| ds * w3.data[i] * (1.0 - cache.h2[i] * cache.h2[i]))
        .collect();
    {
        let g2 = grad.get_mut("trunk_w2");
        for i in 0..w2.rows {
            for (g, h) in g2.row_mut(i).iter_mut().zip(&cache.h1) {
                *g += dpre2[i] * h;
            }
        }
    }
    for (g, d) in grad.get_mut("trunk_b2").data.iter_mut().zip(&dpre2) {
        *g += d;
    }

    let dh1 = w2.tmatvec(&dpre2);
    for i in 0..w1.rows {
        let dpre1 = dh1[i] * (1.0 - cache.h1[i] * cache.h1[i]);
        grad.get_mut("trunk_b1").data[i] += dpre1;
        {
            let g1 = grad.get_mut("trunk_w1");
            for (g, x) in g1.row_mut(i).iter_mut().zip(&cache.xi) {
                *g += dpre1 * x;
            }
        }
        for (de, w) in d_emb.iter_mut().zip(&w1.row(i)[feat_dim..]) {
            *de += dpre1 * w;
        }
    }
    d_emb
}

impl PrmObjective {
    fn batch_loss(
        &self,
        rows: &[&(Vec<f64>, Vec<f64>, usize)],
        params: &ParamSet,
    ) -> (f64, ParamSet) {
        let mut grad = params.zeros_like();
        let mut total = 0.0;
        let n = rows.len() as f64;
        let generic: Vec<f64> = params.get("generic_emb").data.clone();
        for (fw, fl, user_idx) in rows.iter() {
            // branch weights; a zero-weight branch contributes no gradient at all
            for (use_user, weight) in [(true, self.alpha), (false, 1.0 - self.alpha)] {
                if weight == 0.0 {
                    continue;
                }
                let emb: &[f64] = if use_user {
                    params.get("user_emb").row(*user_idx)
                } else {
                    &generic
                };
                let (sw, cache_w) = trunk_forward(params, fw, emb);
                let (sl, cache_l) = trunk_forward(params, fl, emb);
                let diff = sw - sl;
                total += -weight * num::log_sigmoid(diff);
                let dd = -weight * (1.0 - num::sigmoid(diff)) / n;
                let de_w = trunk_backward(params, &mut grad, &cache_w, self.feat_dim, dd);
                let de_l = trunk_backward(params, &mut grad, &cache_l, self.feat_dim, -dd);
                let target = if use_user {
                    grad.get_mut("user_emb").row_mut(*user_idx)
                } else {
                    &mut grad.get_mut("generic_emb").data[..]
                };
                for ((t, a), b) in target.iter_mut().zip(&de_w).zip(&de_l) {
                    *t += a + b;
                }
            }
        }
        (total / n, grad)
    }
}

impl Objective for PrmObjective {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn loss_and_grad(&self, params: &ParamSet, batch: &[usize], _rng: &mut Rng) -> (f64, ParamSet) {
        let rows: Vec<&(Vec<f64>, Vec<f64>, usize)> =
            batch.iter().map(|&i| &self.train[i]).collect();
        self.batch_loss(&rows, params)
    }

    fn val_loss(&self, params: &ParamSet, _rng: &mut Rng) -> Option<f64> {
        if self.val.is_empty() {
            return None;
        }
        let rows: Vec<&(Vec<f64>, Vec<f64>, usize)> = self.val.iter().collect();
        Some(self.batch_loss(&rows, params).0)
    }
}

pub(crate) fn prm_examples(
    dataset: &PreferenceDataset,
    user_index: &BTreeMap<UserId, usize>,
) -> Result<Vec<(Vec<f64>, Vec<f64>, usize)>, ModelError> {
    dataset
        .records()
        .iter()
        .map(|rec| {
            let f1 = feature_map(&rec.x, &rec.y1)?;
            let f2 = feature_map(&rec.x, &rec.y2)?;
            let (fw, fl) = if rec.label == 1 { (f1, f2) } else { (f2, f1) };
            Ok((
                fw.values().to_vec(),
                fl.values().to_vec(),
                user_index[&rec.user_id],
            ))
        })
        .collect()
}

pub(crate) fn init_prm_params(
    feat_dim: usize,
    n_users: usize,
    seed: u64,
) -> ParamSet {
    let mut rng = Rng::derived(seed, &[INIT_TAG]);
    let mut params = ParamSet::new();
    params.insert("trunk_w1", Tensor::glorot(PRM_WIDTH, feat_dim + PRM_EMB_DIM, &mut rng));
    params.insert("trunk_b1", Tensor::zeros(PRM_WIDTH, 1));
    params.insert("trunk_w2", Tensor::glorot(PRM_WIDTH, PRM_WIDTH, &mut rng));
    params.insert("trunk_b2", Tensor::zeros(PRM_WIDTH, 1));
    params.insert("trunk_w3", Tensor::glorot(PRM_WIDTH, 1, &mut rng));
    params.insert("trunk_b3", Tensor::zeros(1, 1));
    params.insert(
        "user_emb",
        Tensor::from_fn(n_users, PRM_EMB_DIM, |_, _| EMB_INIT_SCALE * rng.normal()),
    );
    params.insert(
        "generic_emb",
        Tensor::from_fn(PRM_EMB_DIM, 1, |_, _| EMB_INIT_SCALE * rng.normal()),
    );
    params
}

const VAL_SPLIT_TAG: u64 = 0x11AE;

pub fn train_prm(
    dataset: &PreferenceDataset,
    alpha: f64,
    optim: &OptimConfig,
) -> Result<PrmModel, ModelError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::BadHyper("alpha must be in [0, 1]"));
    }
    if dataset.is_empty() {
        return Err(ModelError::EmptyTrainingData);
    }
    let user_index: BTreeMap<UserId, usize> = dataset
        .users()
        .iter()
        .enumerate()
        .map(|(i, u)| (u.clone(), i))
        .collect();
    let mut examples = prm_examples(dataset, &user_index)?;
    let feat_dim = examples[0].0.len();

    // hold out a slice for early stopping on larger pools
    let (train, val) = if examples.len() >= 64 {
        let n_val = (examples.len() / 10).min(2000);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        Rng::derived(optim.seed, &[VAL_SPLIT_TAG]).shuffle(&mut order);
        let val_set: alloc::collections::BTreeSet<usize> = order.into_iter().take(n_val).collect();
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, ex) in examples.drain(..).enumerate() {
            if val_set.contains(&i) {
                val.push(ex);
            } else {
                train.push(ex);
            }
        }
        (train, val)
    } else {
        (examples, Vec::new())
    };

    let objective = PrmObjective {
        train,
        val,
        alpha,
        feat_dim,
    };
    let init = init_prm_params(feat_dim, user_index.len(), optim.seed);
    let (mut params, _) = optimize(&objective, init, optim)?;
    params.quantize_sig9();
    Ok(PrmModel {
        params,
        user_index,
        alpha,
        optim: optim.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{triple_id, ComparisonRecord, DatasetMeta, Embedding};
    use crate::engine::grad_check;
    use alloc::vec;

    fn two_camp_dataset(n_triples: usize, seed: u64) -> PreferenceDataset {
        // users "pro" and "anti" hold exactly opposite preferences
        let mut rng = Rng::new(seed);
        let d = 4;
        let w: Vec<f64> = rng.normal_vec(2 * d);
        let mut records = Vec::new();
        for _ in 0..n_triples {
            let x = Embedding::new(rng.normal_vec(d));
            let y1 = Embedding::new(rng.normal_vec(d));
            let y2 = Embedding::new(rng.normal_vec(d));
            let gap = feature_map(&x, &y1).unwrap().sub(&feature_map(&x, &y2).unwrap());
            let m: f64 = w.iter().zip(&gap).map(|(a, b)| a * b).sum();
            if num::abs(m) < 0.3 {
                continue;
            }
            for (user, flip) in [("anti", true), ("pro", false)] {
                let label = ((m > 0.0) ^ flip) as u8;
                records.push(ComparisonRecord {
                    triple_id: triple_id(&x, &y1, &y2),
                    user_id: user.into(),
                    x: x.clone(),
                    y1: y1.clone(),
                    y2: y2.clone(),
                    label,
                });
            }
        }
        PreferenceDataset::new(d, records, DatasetMeta::default()).unwrap()
    }

    fn gradient_of(ds: &PreferenceDataset, alpha: f64) -> (ParamSet, PrmObjective, ParamSet) {
        let user_index: BTreeMap<UserId, usize> = ds
            .users()
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
        let train = prm_examples(ds, &user_index).unwrap();
        let feat_dim = train[0].0.len();
        let objective = PrmObjective {
            train,
            val: vec![],
            alpha,
            feat_dim,
        };
        let params = init_prm_params(feat_dim, user_index.len(), 5);
        let batch: Vec<usize> = (0..objective.train_len()).collect();
        let mut rng = Rng::new(0);
        let (_, grad) = objective.loss_and_grad(&params, &batch, &mut rng);
        (params, objective, grad)
    }

    #[test]
    fn alpha_one_gives_zero_generic_gradient() {
        let ds = two_camp_dataset(40, 1);
        let (_, _, grad) = gradient_of(&ds, 1.0);
        assert!(grad.get("generic_emb").data.iter().all(|&g| g == 0.0));
        assert!(grad.get("user_emb").data.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn alpha_zero_gives_zero_user_embedding_gradients() {
        let ds = two_camp_dataset(40, 2);
        let (_, _, grad) = gradient_of(&ds, 0.0);
        assert!(grad.get("user_emb").data.iter().all(|&g| g == 0.0));
        assert!(grad.get("generic_emb").data.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn prm_grad_check_under_1e4() {
        let ds = two_camp_dataset(24, 3);
        let (params, objective, _) = gradient_of(&ds, 0.7);
        let batch: Vec<usize> = (0..objective.train_len().min(16)).collect();
        let err = grad_check(&objective, &params, &batch, 100, 9);
        assert!(err < 1e-4, "prm grad err {err}");
    }

    #[test]
    fn prm_separates_opposed_users() {
        let ds = two_camp_dataset(500, 4);
        let optim = OptimConfig {
            epochs: 120,
            seed: 2,
            ..OptimConfig::default()
        };
        let model = train_prm(&ds, DEFAULT_ALPHA, &optim).unwrap();
        let pm = super::super::PreferenceModel::Prm(model);
        let mut correct = 0usize;
        for rec in ds.records() {
            let mut rng = Rng::new(1);
            if pm.predict(rec, FallbackPolicy::Strict, &mut rng).unwrap() == rec.label {
                correct += 1;
            }
        }
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc >= 0.9, "two-camp prm accuracy {acc}");
    }

    #[test]
    fn bad_alpha_is_rejected() {
        let ds = two_camp_dataset(10, 5);
        assert!(matches!(
            train_prm(&ds, 1.5, &OptimConfig::default()),
            Err(ModelError::BadHyper(_))
        ));
    }
}
