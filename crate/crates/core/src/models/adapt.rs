//! Cold-start baselines: retrieve the most similar existing user's model, or
//! fine-tune the shared model for one epoch on the new user's pairs.

use alloc::vec::Vec;

use crate::data::{ComparisonRecord, UserId};
use crate::engine::{optimize, OptimConfig, ParamSet, Tensor};

use super::linear::LinearBtObjective;
use super::{signed_gap, IndividualModel, ModelError, VanillaModel};

/// Existing user whose individual model best agrees with the new user's
/// labeled pairs; ties go to the lexicographically smallest user id.
/// Returns the winner and its agreement rate (which may be below 0.5 when
/// the new user opposes everyone).
pub fn adapt_similar_user(
    individual: &IndividualModel,
    new_user_pairs: &[ComparisonRecord],
) -> Result<(UserId, f64), ModelError> {
    if individual.per_user.is_empty() || new_user_pairs.is_empty() {
        return Err(ModelError::EmptyTrainingData);
    }
    let gaps: Vec<Vec<f64>> = new_user_pairs
        .iter()
        .map(signed_gap)
        .collect::<Result<_, _>>()?;

    let mut best: Option<(&UserId, f64)> = None;
    for (user, weights) in &individual.per_user {
        let mut agree = 0.0;
        for gap in &gaps {
            let s: f64 = weights.iter().zip(gap).map(|(a, b)| a * b).sum();
            agree += if s > 0.0 {
                1.0
            } else if s < 0.0 {
                0.0
            } else {
                0.5
            };
        }
        let rate = agree / gaps.len() as f64;
        // strict > keeps the first (lexicographically smallest) maximum
        if best.map_or(true, |(_, b)| rate > b) {
            best = Some((user, rate));
        }
    }
    let (user, rate) = best.expect("at least one existing user");
    Ok((user.clone(), rate))
}

/// One epoch of optimization from the shared weights on the new user's
/// pairs; the input model is untouched.
pub fn adapt_finetune(
    vanilla: &VanillaModel,
    new_user_pairs: &[ComparisonRecord],
    optim: &OptimConfig,
) -> Result<VanillaModel, ModelError> {
    if new_user_pairs.is_empty() {
        return Err(ModelError::EmptyTrainingData);
    }
    let gaps: Vec<Vec<f64>> = new_user_pairs
        .iter()
        .map(signed_gap)
        .collect::<Result<_, _>>()?;
    let objective = LinearBtObjective {
        train: gaps,
        val: Vec::new(),
    };
    let mut init = ParamSet::new();
    init.insert("w", Tensor::vector(vanilla.weights.clone()));
    let one_epoch = OptimConfig {
        epochs: 1,
        patience: None,
        ..optim.clone()
    };
    let (mut params, _) = optimize(&objective, init, &one_epoch)?;
    params.quantize_sig9();
    Ok(VanillaModel {
        weights: params.get("w").data.clone(),
        optim: one_epoch,
    })
}
