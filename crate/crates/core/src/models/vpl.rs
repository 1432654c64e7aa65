//! Variational latent user model. An encoder mean-pools a context set of
//! (feature-gap, label) tuples into a Gaussian posterior over a latent user
//! vector z; a decoder scores responses given z. Training samples episodes
//! per user, draws z by the reparameterization transform, and minimizes the
//! Bradley-Terry NLL of held-out target pairs plus beta * KL against the
//! standard normal prior. At evaluation z is the posterior mean of a fresh
//! context set.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::data::{PreferenceDataset, UserId};
use crate::engine::{optimize, Objective, OptimConfig, ParamSet, Tensor};
use crate::num;
use crate::rng::Rng;
use crate::synthgen::feature_map;

use super::{pair_gap, FallbackPolicy, ModelError, ScoreError};

pub const VPL_WIDTH: usize = 32;
pub const DEFAULT_LATENT: usize = 8;
pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_CONTEXT: usize = 8;
/// Target pairs scored against each episode's latent.
const TARGETS_PER_EPISODE: usize = 8;
/// Meta-training episodes per epoch.
const EPISODES_PER_EPOCH: usize = 256;
const VAL_EPISODES: usize = 48;

const INIT_TAG: u64 = 0x9315;
const LATENT_TAG: u64 = 0x1A7E;
const VAL_SAMPLE_TAG: u64 = 0x5A1E;

#[derive(Clone, Debug, PartialEq)]
pub struct VplConfig {
    pub latent_dim: usize,
    pub beta: f64,
    pub context_size: usize,
}

impl Default for VplConfig {
    fn default() -> Self {
        VplConfig {
            latent_dim: DEFAULT_LATENT,
            beta: DEFAULT_BETA,
            context_size: DEFAULT_CONTEXT,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VplModel {
    pub params: ParamSet,
    pub config: VplConfig,
    pub optim: OptimConfig,
    /// Posterior-mean latent per seen user, frozen after training.
    pub user_latents: BTreeMap<UserId, Vec<f64>>,
}

impl VplModel {
    /// Posterior mean for an arbitrary context set.
    pub fn encode(&self, context: &[(Vec<f64>, u8)]) -> Vec<f64> {
        encoder_forward(&self.params, context).0
    }

    /// Installs a latent for `user` computed from `context`; the adaptation
    /// path for held-out users. Latents live on the serialization grid so
    /// checkpoints round-trip exactly.
    pub fn set_context(&mut self, user: &UserId, context: &[(Vec<f64>, u8)]) {
        let z = self.encode(context).iter().map(|&v| num::quantize_sig9(v)).collect();
        self.user_latents.insert(user.clone(), z);
    }

    pub fn score_features(
        &self,
        features: &[f64],
        user: &UserId,
        policy: FallbackPolicy,
    ) -> Result<f64, ScoreError> {
        match (self.user_latents.get(user), policy) {
            (Some(z), _) => Ok(decoder_score(&self.params, features, z)),
            (None, FallbackPolicy::Shared) => {
                // prior mean: the user-agnostic decoder
                let z = alloc::vec![0.0; self.config.latent_dim];
                Ok(decoder_score(&self.params, features, &z))
            }
            (None, FallbackPolicy::Strict) => Err(ScoreError::UnseenUser(user.clone())),
        }
    }
}

/// (mu, logvar) of the pooled context posterior.
fn encoder_forward(params: &ParamSet, context: &[(Vec<f64>, u8)]) -> (Vec<f64>, Vec<f64>) {
    let enc_w = params.get("enc_w");
    let enc_b = params.get("enc_b");
    let mu_w = params.get("mu_w");
    let mu_b = params.get("mu_b");
    let lv_w = params.get("lv_w");
    let lv_b = params.get("lv_b");

    let mut pooled = alloc::vec![0.0; enc_w.rows];
    for (gap, label) in context {
        let signed = if *label == 1 { 1.0 } else { -1.0 };
        for i in 0..enc_w.rows {
            let row = enc_w.row(i);
            let (rg, rl) = row.split_at(gap.len());
            let pre: f64 = rg.iter().zip(gap).map(|(a, b)| a * b).sum::<f64>()
                + rl[0] * signed
                + enc_b.data[i];
            pooled[i] += num::tanh(pre);
        }
    }
    let m = context.len().max(1) as f64;
    for p in &mut pooled {
        *p /= m;
    }
    let mut mu = mu_w.matvec(&pooled);
    for (v, b) in mu.iter_mut().zip(&mu_b.data) {
        *v += b;
    }
    let mut logvar = lv_w.matvec(&pooled);
    for (v, b) in logvar.iter_mut().zip(&lv_b.data) {
        *v += b;
    }
    (mu, logvar)
}

/// Decoder score r(features, z) through a two-layer tanh net.
fn decoder_score(params: &ParamSet, features: &[f64], z: &[f64]) -> f64 {
    let w1 = params.get("dec_w1");
    let b1 = params.get("dec_b1");
    let w2 = params.get("dec_w2");
    let b2 = params.get("dec_b2");
    let mut s = b2.data[0];
    for i in 0..w1.rows {
        let row = w1.row(i);
        let (rf, rz) = row.split_at(features.len());
        let pre: f64 = rf.iter().zip(features).map(|(a, b)| a * b).sum::<f64>()
            + rz.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
            + b1.data[i];
        s += w2.data[i] * num::tanh(pre);
    }
    s
}

struct UserExamples {
    user: UserId,
    /// (gap, label) for context encoding
    gaps: Vec<(Vec<f64>, u8)>,
    /// (winner features, loser features) for decoder targets
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

pub(crate) struct VplObjective {
    users: Vec<UserExamples>,
    config: VplConfig,
    feat_dim: usize,
    /// Frozen (user, context indices, target indices, noise seed) episodes.
    val_episodes: Vec<(usize, Vec<usize>, Vec<usize>, u64)>,
}

impl VplObjective {
    fn episode(
        &self,
        params: &ParamSet,
        user: usize,
        ctx_idx: &[usize],
        tgt_idx: &[usize],
        noise: &mut Rng,
        grad: Option<&mut ParamSet>,
    ) -> f64 {
        let ex = &self.users[user];
        let context: Vec<(Vec<f64>, u8)> = ctx_idx
            .iter()
            .map(|&i| (ex.gaps[i].0.clone(), ex.gaps[i].1))
            .collect();
        let (mu, logvar) = encoder_forward(params, &context);
        let latent_dim = mu.len();
        let eps: Vec<f64> = (0..latent_dim).map(|_| noise.normal()).collect();
        let sigma: Vec<f64> = logvar.iter().map(|lv| num::exp(0.5 * lv)).collect();
        let z: Vec<f64> = mu
            .iter()
            .zip(&sigma)
            .zip(&eps)
            .map(|((m, s), e)| m + s * e)
            .collect();

        // decoder NLL over targets
        let w1 = params.get("dec_w1");
        let w2 = params.get("dec_w2");
        let mut nll = 0.0;
        let mut dz = alloc::vec![0.0; latent_dim];
        let mut decoder_caches: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
        for &t in tgt_idx {
            let (fw, fl) = &ex.pairs[t];
            // forward both responses, keeping activations
            let mut scores = [0.0; 2];
            let mut hs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for (slot, feats) in [fw, fl].into_iter().enumerate() {
                let mut s = params.get("dec_b2").data[0];
                let mut h = Vec::with_capacity(w1.rows);
                for i in 0..w1.rows {
                    let row = w1.row(i);
                    let (rf, rz) = row.split_at(self.feat_dim);
                    let pre: f64 = rf.iter().zip(feats).map(|(a, b)| a * b).sum::<f64>()
                        + rz.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
                        + params.get("dec_b1").data[i];
                    let hi = num::tanh(pre);
                    s += w2.data[i] * hi;
                    h.push(hi);
                }
                scores[slot] = s;
                hs[slot] = h;
            }
            let diff = scores[0] - scores[1];
            nll += -num::log_sigmoid(diff);
            let [hwin, hlose] = hs;
            decoder_caches.push((diff, hwin, hlose));
        }
        let t_count = tgt_idx.len().max(1) as f64;
        nll /= t_count;

        let kl: f64 = 0.5
            * mu
                .iter()
                .zip(&logvar)
                .map(|(m, lv)| m * m + num::exp(*lv) - lv - 1.0)
                .sum::<f64>();
        let loss = nll + self.config.beta * kl;

        let Some(grad) = grad else {
            return loss;
        };

        // backward: decoder targets
        for (k, &t) in tgt_idx.iter().enumerate() {
            let (fw, fl) = &ex.pairs[t];
            let (diff, hwin, hlose) = &decoder_caches[k];
            let dd = -(1.0 - num::sigmoid(*diff)) / t_count;
            for (feats, h, sign) in [(fw, hwin, dd), (fl, hlose, -dd)] {
                grad.get_mut("dec_b2").data[0] += sign;
                for i in 0..w1.rows {
                    grad.get_mut("dec_w2").data[i] += sign * h[i];
                    let dpre = sign * w2.data[i] * (1.0 - h[i] * h[i]);
                    grad.get_mut("dec_b1").data[i] += dpre;
                    {
                        let g1 = grad.get_mut("dec_w1");
                        let row = g1.row_mut(i);
                        for (g, x) in row[..self.feat_dim].iter_mut().zip(feats.iter()) {
                            *g += dpre * x;
                        }
                        for (g, x) in row[self.feat_dim..].iter_mut().zip(&z) {
                            *g += dpre * x;
                        }
                    }
                    for (dzj, wz) in dz.iter_mut().zip(&w1.row(i)[self.feat_dim..]) {
                        *dzj += dpre * wz;
                    }
                }
            }
        }

        // reparameterization + KL into (mu, logvar)
        let mut dmu: Vec<f64> = dz.clone();
        let mut dlogvar: Vec<f64> = dz
            .iter()
            .zip(&sigma)
            .zip(&eps)
            .map(|((d, s), e)| 0.5 * d * s * e)
            .collect();
        for j in 0..latent_dim {
            dmu[j] += self.config.beta * mu[j];
            dlogvar[j] += self.config.beta * 0.5 * (num::exp(logvar[j]) - 1.0);
        }

        // encoder backward through the heads and the pooled activation
        let mu_w = params.get("mu_w");
        let lv_w = params.get("lv_w");
        let enc_w = params.get("enc_w");
        // recompute pooled activations and per-tuple h for the backward pass
        let mut pooled = alloc::vec![0.0; enc_w.rows];
        let mut per_tuple: Vec<Vec<f64>> = Vec::with_capacity(context.len());
        for (gap, label) in &context {
            let signed = if *label == 1 { 1.0 } else { -1.0 };
            let mut h = Vec::with_capacity(enc_w.rows);
            for i in 0..enc_w.rows {
                let row = enc_w.row(i);
                let (rg, rl) = row.split_at(gap.len());
                let pre: f64 = rg.iter().zip(gap).map(|(a, b)| a * b).sum::<f64>()
                    + rl[0] * signed
                    + params.get("enc_b").data[i];
                let hi = num::tanh(pre);
                pooled[i] += hi;
                h.push(hi);
            }
            per_tuple.push(h);
        }
        let m = context.len().max(1) as f64;
        for p in &mut pooled {
            *p /= m;
        }

        for (j, &d) in dmu.iter().enumerate() {
            grad.get_mut("mu_b").data[j] += d;
            let gm = grad.get_mut("mu_w");
            for (g, p) in gm.row_mut(j).iter_mut().zip(&pooled) {
                *g += d * p;
            }
        }
        for (j, &d) in dlogvar.iter().enumerate() {
            grad.get_mut("lv_b").data[j] += d;
            let gl = grad.get_mut("lv_w");
            for (g, p) in gl.row_mut(j).iter_mut().zip(&pooled) {
                *g += d * p;
            }
        }
        let mut dpooled = mu_w.tmatvec(&dmu);
        for (dp, extra) in dpooled.iter_mut().zip(lv_w.tmatvec(&dlogvar)) {
            *dp += extra;
        }
        for ((gap, label), h) in context.iter().zip(&per_tuple) {
            let signed = if *label == 1 { 1.0 } else { -1.0 };
            for i in 0..enc_w.rows {
                let dpre = dpooled[i] / m * (1.0 - h[i] * h[i]);
                grad.get_mut("enc_b").data[i] += dpre;
                let ge = grad.get_mut("enc_w");
                let row = ge.row_mut(i);
                for (g, x) in row[..gap.len()].iter_mut().zip(gap) {
                    *g += dpre * x;
                }
                row[gap.len()] += dpre * signed;
            }
        }
        loss
    }

    fn sample_episode(&self, rng: &mut Rng) -> (usize, Vec<usize>, Vec<usize>) {
        let user = rng.below(self.users.len());
        let ex = &self.users[user];
        let m = self.config.context_size;
        let idx = rng.sample_indices(ex.gaps.len(), ex.gaps.len());
        let ctx = idx[..m].to_vec();
        let t_count = TARGETS_PER_EPISODE.min(ex.gaps.len() - m);
        let tgt = idx[m..m + t_count].to_vec();
        (user, ctx, tgt)
    }
}

impl Objective for VplObjective {
    fn train_len(&self) -> usize {
        EPISODES_PER_EPOCH
    }

    fn loss_and_grad(&self, params: &ParamSet, batch: &[usize], rng: &mut Rng) -> (f64, ParamSet) {
        let mut grad = params.zeros_like();
        let mut total = 0.0;
        for _ in batch {
            let (user, ctx, tgt) = self.sample_episode(rng);
            total += self.episode(params, user, &ctx, &tgt, rng, Some(&mut grad));
        }
        let n = batch.len().max(1) as f64;
        grad.scale(1.0 / n);
        (total / n, grad)
    }

    fn val_loss(&self, params: &ParamSet, _rng: &mut Rng) -> Option<f64> {
        if self.val_episodes.is_empty() {
            return None;
        }
        let total: f64 = self
            .val_episodes
            .iter()
            .map(|(user, ctx, tgt, noise_seed)| {
                let mut noise = Rng::new(*noise_seed);
                self.episode(params, *user, ctx, tgt, &mut noise, None)
            })
            .sum();
        Some(total / self.val_episodes.len() as f64)
    }
}

pub(crate) fn init_vpl_params(feat_dim: usize, config: &VplConfig, seed: u64) -> ParamSet {
    let mut rng = Rng::derived(seed, &[INIT_TAG]);
    let latent = config.latent_dim;
    let mut params = ParamSet::new();
    params.insert("enc_w", Tensor::glorot(VPL_WIDTH, feat_dim + 1, &mut rng));
    params.insert("enc_b", Tensor::zeros(VPL_WIDTH, 1));
    params.insert("mu_w", Tensor::glorot(latent, VPL_WIDTH, &mut rng));
    params.insert("mu_b", Tensor::zeros(latent, 1));
    params.insert("lv_w", Tensor::glorot(latent, VPL_WIDTH, &mut rng));
    params.insert("lv_b", Tensor::from_fn(latent, 1, |_, _| -2.0));
    params.insert("dec_w1", Tensor::glorot(VPL_WIDTH, feat_dim + latent, &mut rng));
    params.insert("dec_b1", Tensor::zeros(VPL_WIDTH, 1));
    params.insert("dec_w2", Tensor::glorot(VPL_WIDTH, 1, &mut rng));
    params.insert("dec_b2", Tensor::zeros(1, 1));
    params
}

fn collect_users(
    dataset: &PreferenceDataset,
    context_size: usize,
) -> Result<Vec<UserExamples>, ModelError> {
    let mut users = Vec::new();
    for user in dataset.users() {
        let records = dataset.records_of(user);
        if records.len() < context_size + 1 {
            return Err(ModelError::UserTooFewRecords {
                user: user.clone(),
                needed: context_size + 1,
                got: records.len(),
            });
        }
        let mut gaps = Vec::with_capacity(records.len());
        let mut pairs = Vec::with_capacity(records.len());
        for rec in &records {
            gaps.push((pair_gap(rec)?, rec.label));
            let f1 = feature_map(&rec.x, &rec.y1)?;
            let f2 = feature_map(&rec.x, &rec.y2)?;
            let (fw, fl) = if rec.label == 1 { (f1, f2) } else { (f2, f1) };
            pairs.push((fw.values().to_vec(), fl.values().to_vec()));
        }
        users.push(UserExamples {
            user: user.clone(),
            gaps,
            pairs,
        });
    }
    Ok(users)
}

/// Objective plus fresh params for gradient verification.
pub(crate) fn verify_objective(
    dataset: &PreferenceDataset,
    config: &VplConfig,
    seed: u64,
) -> Result<(VplObjective, crate::engine::ParamSet), ModelError> {
    let users = collect_users(dataset, config.context_size)?;
    let feat_dim = users[0].gaps[0].0.len();
    let params = init_vpl_params(feat_dim, config, seed);
    Ok((
        VplObjective {
            users,
            config: config.clone(),
            feat_dim,
            val_episodes: Vec::new(),
        },
        params,
    ))
}

pub fn train_vpl(
    dataset: &PreferenceDataset,
    config: &VplConfig,
    optim: &OptimConfig,
) -> Result<VplModel, ModelError> {
    if config.context_size == 0 {
        return Err(ModelError::BadHyper("context size must be >= 1"));
    }
    if config.beta < 0.0 || !config.beta.is_finite() {
        return Err(ModelError::BadHyper("beta must be finite and >= 0"));
    }
    if dataset.is_empty() {
        return Err(ModelError::EmptyTrainingData);
    }
    let users = collect_users(dataset, config.context_size)?;
    let feat_dim = users[0].gaps[0].0.len();

    // frozen validation episodes for early stopping
    let mut val_rng = Rng::derived(optim.seed, &[VAL_SAMPLE_TAG]);
    let config_cl = config.clone();
    let mut objective = VplObjective {
        users,
        config: config_cl,
        feat_dim,
        val_episodes: Vec::new(),
    };
    objective.val_episodes = (0..VAL_EPISODES)
        .map(|_| {
            let (u, c, t) = objective.sample_episode(&mut val_rng);
            (u, c, t, val_rng.next_u64())
        })
        .collect();

    let init = init_vpl_params(feat_dim, config, optim.seed);
    let (mut params, _) = optimize(&objective, init, optim)?;
    params.quantize_sig9();

    // freeze a posterior-mean latent per user from fresh context pairs
    let mut user_latents = BTreeMap::new();
    for (uidx, ex) in objective.users.iter().enumerate() {
        let mut rng = Rng::derived(optim.seed, &[LATENT_TAG, uidx as u64]);
        let pick = rng.sample_indices(ex.gaps.len(), config.context_size);
        let context: Vec<(Vec<f64>, u8)> = pick
            .into_iter()
            .map(|i| (ex.gaps[i].0.clone(), ex.gaps[i].1))
            .collect();
        let (mu, _) = encoder_forward(&params, &context);
        let z: Vec<f64> = mu.iter().map(|&v| num::quantize_sig9(v)).collect();
        user_latents.insert(ex.user.clone(), z);
    }

    Ok(VplModel {
        params,
        config: config.clone(),
        optim: optim.clone(),
        user_latents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::grad_check;
    use crate::synthgen::{generate_dataset, GenMode, GeneratorConfig};

    fn small_population(seed: u64) -> PreferenceDataset {
        let cfg = GeneratorConfig {
            mode: GenMode::PersonalLlmLike,
            n_users: 4,
            n_triples: 60,
            dimension: 6,
            tau: 0.0,
            minority_count: 0,
            duplicate_fraction: 0.0,
            seed,
        };
        generate_dataset(&cfg).unwrap().0
    }

    fn objective_for(ds: &PreferenceDataset, config: VplConfig) -> (VplObjective, ParamSet) {
        let users = collect_users(ds, config.context_size).unwrap();
        let feat_dim = users[0].gaps[0].0.len();
        let params = init_vpl_params(feat_dim, &config, 3);
        (
            VplObjective {
                users,
                config,
                feat_dim,
                val_episodes: Vec::new(),
            },
            params,
        )
    }

    #[test]
    fn vpl_grad_check_under_1e4() {
        let ds = small_population(5);
        let (objective, params) = objective_for(&ds, VplConfig::default());
        let batch = [0usize, 1, 2, 3];
        let err = grad_check(&objective, &params, &batch, 100, 13);
        assert!(err < 1e-4, "vpl grad err {err}");
    }

    #[test]
    fn empty_latent_is_supported() {
        let ds = small_population(6);
        let config = VplConfig {
            latent_dim: 0,
            beta: 0.0,
            context_size: 4,
        };
        let (objective, params) = objective_for(&ds, config.clone());
        let mut rng = Rng::new(1);
        let (loss, grad) = objective.loss_and_grad(&params, &[0, 1], &mut rng);
        assert!(loss.is_finite());
        assert!(grad.is_finite());
        let err = grad_check(&objective, &params, &[0, 1], 60, 2);
        assert!(err < 1e-4, "L=0 grad err {err}");
    }

    #[test]
    fn context_size_precondition_is_enforced() {
        let ds = small_population(7);
        let config = VplConfig {
            context_size: 1000,
            ..VplConfig::default()
        };
        assert!(matches!(
            train_vpl(&ds, &config, &OptimConfig::default()),
            Err(ModelError::UserTooFewRecords { .. })
        ));
    }

    #[test]
    fn latents_differ_across_users_after_training() {
        let ds = small_population(8);
        let optim = OptimConfig {
            epochs: 8,
            seed: 4,
            ..OptimConfig::default()
        };
        let model = train_vpl(&ds, &VplConfig::default(), &optim).unwrap();
        assert_eq!(model.user_latents.len(), 4);
        let latents: Vec<&Vec<f64>> = model.user_latents.values().collect();
        assert_ne!(latents[0], latents[1]);
    }
}
