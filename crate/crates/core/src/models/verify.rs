//! Gradient verification entry points for every trainable loss, the
//! standing check that hand-derived backward passes agree with central
//! finite differences.

use alloc::vec::Vec;

use crate::data::{DatasetSplit, PreferenceDataset, SplitMode, UserId};
use crate::engine::{grad_check, Objective, ParamSet};
use crate::rng::Rng;

use super::gpo::{self, GpoConfig};
use super::linear::LinearBtObjective;
use super::prm::{self, PrmObjective};
use super::vpl::{self, VplConfig};
use super::{signed_gap, ModelError};

use alloc::collections::BTreeMap;

fn full_batch(n: usize, cap: usize) -> Vec<usize> {
    (0..n.min(cap)).collect()
}

/// Max finite-difference error of the linear Bradley-Terry loss (the vanilla
/// and conditional families share it).
pub fn linear_grad_error(
    dataset: &PreferenceDataset,
    n_probes: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    let gaps: Result<Vec<Vec<f64>>, _> = dataset.records().iter().map(signed_gap).collect();
    let objective = LinearBtObjective {
        train: gaps?,
        val: Vec::new(),
    };
    let dim = objective.train[0].len();
    let mut params = ParamSet::new();
    let mut rng = Rng::derived(seed, &[0x1e]);
    params.insert("w", crate::engine::Tensor::glorot(dim, 1, &mut rng));
    let batch = full_batch(objective.train_len(), 64);
    Ok(grad_check(&objective, &params, &batch, n_probes, seed))
}

/// Max finite-difference error of the dual-objective trunk loss.
pub fn prm_grad_error(
    dataset: &PreferenceDataset,
    alpha: f64,
    n_probes: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    let (objective, params) = prm_objective(dataset, alpha, seed)?;
    let batch = full_batch(objective.train_len(), 16);
    Ok(grad_check(&objective, &params, &batch, n_probes, seed))
}

/// Max finite-difference error of the variational episode loss.
pub fn vpl_grad_error(
    dataset: &PreferenceDataset,
    config: &VplConfig,
    n_probes: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    let (objective, params) = vpl::verify_objective(dataset, config, seed)?;
    let batch = full_batch(objective.train_len(), 4);
    Ok(grad_check(&objective, &params, &batch, n_probes, seed))
}

/// Max finite-difference error of the in-context meta-learning loss.
pub fn gpo_grad_error(
    split: &DatasetSplit,
    config: &GpoConfig,
    n_probes: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    if split.mode != SplitMode::ByUser {
        return Err(ModelError::NotByUserSplit);
    }
    let (objective, params) = gpo::verify_objective(&split.train, config, seed)?;
    let batch = full_batch(objective.train_len(), 4);
    Ok(grad_check(&objective, &params, &batch, n_probes, seed))
}

/// Largest absolute gradient entries (generic embedding, user embeddings)
/// under the given alpha; the limiting cases alpha = 1 and alpha = 0 must
/// zero one side exactly.
pub fn prm_embedding_gradients(
    dataset: &PreferenceDataset,
    alpha: f64,
    seed: u64,
) -> Result<(f64, f64), ModelError> {
    let (objective, params) = prm_objective(dataset, alpha, seed)?;
    let batch = full_batch(objective.train_len(), 32);
    let mut rng = Rng::derived(seed, &[0x9d]);
    let (_, grad) = objective.loss_and_grad(&params, &batch, &mut rng);
    let max_abs = |name: &str| {
        grad.get(name)
            .data
            .iter()
            .fold(0.0f64, |m, v| m.max(crate::num::abs(*v)))
    };
    Ok((max_abs("generic_emb"), max_abs("user_emb")))
}

fn prm_objective(
    dataset: &PreferenceDataset,
    alpha: f64,
    seed: u64,
) -> Result<(PrmObjective, ParamSet), ModelError> {
    let user_index: BTreeMap<UserId, usize> = dataset
        .users()
        .iter()
        .enumerate()
        .map(|(i, u)| (u.clone(), i))
        .collect();
    let train = prm::prm_examples(dataset, &user_index)?;
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingData);
    }
    let feat_dim = train[0].0.len();
    let params = prm::init_prm_params(feat_dim, user_index.len(), seed);
    Ok((
        PrmObjective {
            train,
            val: Vec::new(),
            alpha,
            feat_dim,
        },
        params,
    ))
}
