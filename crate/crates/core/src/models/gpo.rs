//! In-context meta-learned preference predictor. Context examples are
//! encoded as (feature-gap, label-embedding) tokens, the query carries a
//! learned null-label token, and a stack of attention blocks (the query
//! attends over itself plus the context; no positional encoding, so the
//! output is permutation invariant over the context by construction)
//! produces P(label = 1).
//!
//! Meta-training samples (N context, 1 query) episodes across training
//! users, with context sizes jittered below N and a reserved slice of
//! meta-validation users driving early stopping. Held-out users are served
//! by installing their few-shot pairs as context with no parameter updates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{ComparisonRecord, DatasetSplit, PreferenceDataset, SplitMode, UserId};
use crate::engine::{optimize, Objective, OptimConfig, ParamSet, Tensor};
use crate::num;
use crate::rng::Rng;

use super::{pair_gap, FallbackPolicy, ModelError, ScoreError, ScoredPair};

pub const GPO_WIDTH: usize = 32;
pub const GPO_HEADS: usize = 2;
pub const GPO_LAYERS: usize = 2;
pub const GPO_LABEL_DIM: usize = 8;
const GPO_MLP_HIDDEN: usize = 64;

const INIT_TAG: u64 = 0x9316;
const CTX_TAG: u64 = 0xC7E;
const VAL_SAMPLE_TAG: u64 = 0x5A1F;

/// Label-embedding rows.
const ROW_LABEL0: usize = 0;
const ROW_LABEL1: usize = 1;
const ROW_NULL: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct GpoConfig {
    /// Context examples per meta-training episode.
    pub context_n: usize,
    /// Episodes drawn per epoch.
    pub episodes_per_epoch: usize,
}

impl Default for GpoConfig {
    fn default() -> Self {
        GpoConfig {
            context_n: 30,
            episodes_per_epoch: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpoModel {
    pub params: ParamSet,
    pub config: GpoConfig,
    pub optim: OptimConfig,
    /// Few-shot pairs per user: (feature gap, label).
    pub context_store: BTreeMap<UserId, Vec<(Vec<f64>, u8)>>,
}

fn layer_name(layer: usize, part: &str) -> String {
    format!("l{layer}_{part}")
}

/// Gap vectors enter unit-normalized: the label is the sign of a linear
/// functional, so the direction carries all the information and attention
/// similarities stop depending on comparison magnitude.
fn unit_gap(gap: &[f64]) -> Vec<f64> {
    let norm = num::sqrt(gap.iter().map(|v| v * v).sum());
    if norm == 0.0 {
        return gap.to_vec();
    }
    gap.iter().map(|v| v / norm).collect()
}

fn embed_token(params: &ParamSet, gap: &[f64], label_row: usize) -> Vec<f64> {
    let w_in = params.get("w_in");
    let b_in = params.get("b_in");
    let emb = params.get("label_emb").row(label_row);
    let gap = unit_gap(gap);
    let mut xi = Vec::with_capacity(gap.len() + GPO_LABEL_DIM);
    xi.extend_from_slice(&gap);
    xi.extend_from_slice(emb);
    let mut rep = w_in.matvec(&xi);
    for (r, b) in rep.iter_mut().zip(&b_in.data) {
        *r += b;
    }
    rep
}

struct LayerCache {
    q_in: Vec<f64>,
    qv: Vec<f64>,
    kv: Vec<Vec<f64>>,
    vv: Vec<Vec<f64>>,
    /// attention weights per head
    alpha: Vec<Vec<f64>>,
    msg: Vec<f64>,
    q_mid: Vec<f64>,
    mlp_a: Vec<f64>,
}

struct ForwardCache {
    reps: Vec<Vec<f64>>,
    layers: Vec<LayerCache>,
    q_final: Vec<f64>,
    logit: f64,
}

/// Forward pass over context token reps (fixed across layers) and the query.
/// The attention pool is the query itself plus the context (slot 0 = self),
/// so attention weights stay similarity-informative even for one context
/// example.
fn forward(params: &ParamSet, reps: &[Vec<f64>], query0: &[f64]) -> ForwardCache {
    let dk = GPO_WIDTH / GPO_HEADS;
    let scale = 1.0 / num::sqrt(dk as f64);
    let mut q = query0.to_vec();
    let mut layers = Vec::with_capacity(GPO_LAYERS);
    for layer in 0..GPO_LAYERS {
        let wq = params.get(&layer_name(layer, "wq"));
        let wk = params.get(&layer_name(layer, "wk"));
        let wv = params.get(&layer_name(layer, "wv"));
        let wo = params.get(&layer_name(layer, "wo"));

        let qv = wq.matvec(&q);
        let mut kv: Vec<Vec<f64>> = Vec::with_capacity(reps.len() + 1);
        let mut vv: Vec<Vec<f64>> = Vec::with_capacity(reps.len() + 1);
        kv.push(wk.matvec(&q));
        vv.push(wv.matvec(&q));
        kv.extend(reps.iter().map(|r| wk.matvec(r)));
        vv.extend(reps.iter().map(|r| wv.matvec(r)));

        let mut msg = vec![0.0; GPO_WIDTH];
        let mut alpha = Vec::with_capacity(GPO_HEADS);
        for h in 0..GPO_HEADS {
            let s = h * dk..(h + 1) * dk;
            let logits: Vec<f64> = kv
                .iter()
                .map(|k| {
                    qv[s.clone()]
                        .iter()
                        .zip(&k[s.clone()])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        * scale
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut a: Vec<f64> = logits.iter().map(|l| num::exp(l - max)).collect();
            let z: f64 = a.iter().sum();
            for v in &mut a {
                *v /= z;
            }
            for (i, v) in vv.iter().enumerate() {
                for (m, val) in msg[s.clone()].iter_mut().zip(&v[s.clone()]) {
                    *m += a[i] * val;
                }
            }
            alpha.push(a);
        }
        let attn = wo.matvec(&msg);
        let q_mid: Vec<f64> = q.iter().zip(&attn).map(|(a, b)| a + b).collect();

        let mw1 = params.get(&layer_name(layer, "mlp_w1"));
        let mb1 = params.get(&layer_name(layer, "mlp_b1"));
        let mw2 = params.get(&layer_name(layer, "mlp_w2"));
        let mb2 = params.get(&layer_name(layer, "mlp_b2"));
        let mut u1 = mw1.matvec(&q_mid);
        for (u, b) in u1.iter_mut().zip(&mb1.data) {
            *u += b;
        }
        let a: Vec<f64> = u1.iter().map(|u| num::tanh(*u)).collect();
        let mut u2 = mw2.matvec(&a);
        for (u, b) in u2.iter_mut().zip(&mb2.data) {
            *u += b;
        }
        let q_out: Vec<f64> = q_mid.iter().zip(&u2).map(|(a, b)| a + b).collect();

        layers.push(LayerCache {
            q_in: q,
            qv,
            kv,
            vv,
            alpha,
            msg,
            q_mid,
            mlp_a: a,
        });
        q = q_out;
    }
    let w_out = params.get("w_out");
    let logit = w_out.data.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>()
        + params.get("b_out").data[0];
    ForwardCache {
        reps: reps.to_vec(),

        layers,
        q_final: q,
        logit,
    }
}

/// Token-level view of an episode kept for the backward pass.
struct EpisodeInput<'a> {
    context: &'a [(Vec<f64>, u8)],
    query_gap: &'a [f64],
}

/// Backward through the whole stack; `dlogit` is dLoss/dlogit.
fn backward(params: &ParamSet, grad: &mut ParamSet, cache: &ForwardCache, input: &EpisodeInput, dlogit: f64) {
    let dk = GPO_WIDTH / GPO_HEADS;
    let scale = 1.0 / num::sqrt(dk as f64);
    let n = cache.reps.len();

    // readout
    {
        let g = grad.get_mut("w_out");
        for (gi, qi) in g.data.iter_mut().zip(&cache.q_final) {
            *gi += dlogit * qi;
        }
        grad.get_mut("b_out").data[0] += dlogit;
    }
    let w_out = params.get("w_out");
    let mut dq: Vec<f64> = w_out.data.iter().map(|w| dlogit * w).collect();

    let mut dreps: Vec<Vec<f64>> = vec![vec![0.0; GPO_WIDTH]; n];

    for layer in (0..GPO_LAYERS).rev() {
        let lc = &cache.layers[layer];
        let wq = params.get(&layer_name(layer, "wq"));
        let wk = params.get(&layer_name(layer, "wk"));
        let wv = params.get(&layer_name(layer, "wv"));
        let wo = params.get(&layer_name(layer, "wo"));
        let mw1 = params.get(&layer_name(layer, "mlp_w1"));
        let mw2 = params.get(&layer_name(layer, "mlp_w2"));

        // MLP backward: q_out = q_mid + mw2 tanh(mw1 q_mid + b1) + b2
        let du2 = dq.clone();
        {
            let g = grad.get_mut(&layer_name(layer, "mlp_w2"));
            g.add_outer(1.0, &du2, &lc.mlp_a);
        }
        for (g, d) in grad
            .get_mut(&layer_name(layer, "mlp_b2"))
            .data
            .iter_mut()
            .zip(&du2)
        {
            *g += d;
        }
        let da = mw2.tmatvec(&du2);
        let du1: Vec<f64> = da
            .iter()
            .zip(&lc.mlp_a)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect();
        {
            let g = grad.get_mut(&layer_name(layer, "mlp_w1"));
            g.add_outer(1.0, &du1, &lc.q_mid);
        }
        for (g, d) in grad
            .get_mut(&layer_name(layer, "mlp_b1"))
            .data
            .iter_mut()
            .zip(&du1)
        {
            *g += d;
        }
        let mut dq_mid = dq.clone(); // residual
        for (d, extra) in dq_mid.iter_mut().zip(mw1.tmatvec(&du1)) {
            *d += extra;
        }

        // attention backward: q_mid = q_in + wo (msg(q_in, reps))
        let dattn = dq_mid.clone();
        {
            let g = grad.get_mut(&layer_name(layer, "wo"));
            g.add_outer(1.0, &dattn, &lc.msg);
        }
        let dmsg = wo.tmatvec(&dattn);

        // attention pool = self (slot 0) + context (slots 1..=n)
        let pool = n + 1;
        let mut dqv = vec![0.0; GPO_WIDTH];
        let mut dkv: Vec<Vec<f64>> = vec![vec![0.0; GPO_WIDTH]; pool];
        let mut dvv: Vec<Vec<f64>> = vec![vec![0.0; GPO_WIDTH]; pool];
        for h in 0..GPO_HEADS {
            let s = h * dk..(h + 1) * dk;
            let alpha = &lc.alpha[h];
            // d alpha_i = dmsg_h . v_i
            let dalpha: Vec<f64> = (0..pool)
                .map(|i| {
                    dmsg[s.clone()]
                        .iter()
                        .zip(&lc.vv[i][s.clone()])
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            for i in 0..pool {
                for (dv, dm) in dvv[i][s.clone()].iter_mut().zip(&dmsg[s.clone()]) {
                    *dv += alpha[i] * dm;
                }
            }
            let dot: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
            for i in 0..pool {
                let dlogit_i = alpha[i] * (dalpha[i] - dot);
                for (dq_h, k) in dqv[s.clone()].iter_mut().zip(&lc.kv[i][s.clone()]) {
                    *dq_h += dlogit_i * k * scale;
                }
                for (dk_h, qh) in dkv[i][s.clone()].iter_mut().zip(&lc.qv[s.clone()]) {
                    *dk_h += dlogit_i * qh * scale;
                }
            }
        }

        {
            let g = grad.get_mut(&layer_name(layer, "wq"));
            g.add_outer(1.0, &dqv, &lc.q_in);
        }
        // slot 0 keys/values come from the query input itself
        {
            let g = grad.get_mut(&layer_name(layer, "wk"));
            g.add_outer(1.0, &dkv[0], &lc.q_in);
        }
        {
            let g = grad.get_mut(&layer_name(layer, "wv"));
            g.add_outer(1.0, &dvv[0], &lc.q_in);
        }
        for i in 0..n {
            {
                let g = grad.get_mut(&layer_name(layer, "wk"));
                g.add_outer(1.0, &dkv[i + 1], &cache.reps[i]);
            }
            {
                let g = grad.get_mut(&layer_name(layer, "wv"));
                g.add_outer(1.0, &dvv[i + 1], &cache.reps[i]);
            }
            for (dr, extra) in dreps[i].iter_mut().zip(wk.tmatvec(&dkv[i + 1])) {
                *dr += extra;
            }
            for (dr, extra) in dreps[i].iter_mut().zip(wv.tmatvec(&dvv[i + 1])) {
                *dr += extra;
            }
        }

        // into the layer's query input: residual + query/self-key/self-value paths
        let mut dq_in = dq_mid;
        for (d, extra) in dq_in.iter_mut().zip(wq.tmatvec(&dqv)) {
            *d += extra;
        }
        for (d, extra) in dq_in.iter_mut().zip(wk.tmatvec(&dkv[0])) {
            *d += extra;
        }
        for (d, extra) in dq_in.iter_mut().zip(wv.tmatvec(&dvv[0])) {
            *d += extra;
        }
        dq = dq_in;
    }

    // token embeddings: rep = w_in [gap; label_emb] + b_in
    let w_in = params.get("w_in");
    let gap_dim = input.query_gap.len();
    let apply_token = |grad: &mut ParamSet, drep: &[f64], gap: &[f64], label_row: usize| {
        let emb = params.get("label_emb").row(label_row);
        let gap = unit_gap(gap);
        let mut xi = Vec::with_capacity(gap.len() + GPO_LABEL_DIM);
        xi.extend_from_slice(&gap);
        xi.extend_from_slice(emb);
        grad.get_mut("w_in").add_outer(1.0, drep, &xi);
        for (g, d) in grad.get_mut("b_in").data.iter_mut().zip(drep) {
            *g += d;
        }
        let dxi = w_in.tmatvec(drep);
        let g_emb = grad.get_mut("label_emb");
        for (g, d) in g_emb.row_mut(label_row).iter_mut().zip(&dxi[gap_dim..]) {
            *g += d;
        }
    };
    apply_token(grad, &dq, input.query_gap, ROW_NULL);
    for (i, (gap, label)) in input.context.iter().enumerate() {
        let row = if *label == 1 { ROW_LABEL1 } else { ROW_LABEL0 };
        apply_token(grad, &dreps[i], gap, row);
    }
}

/// P(label = 1) for a query gap given context pairs.
pub(crate) fn gpo_prob(params: &ParamSet, context: &[(Vec<f64>, u8)], query_gap: &[f64]) -> f64 {
    let reps: Vec<Vec<f64>> = context
        .iter()
        .map(|(gap, label)| {
            embed_token(
                params,
                gap,
                if *label == 1 { ROW_LABEL1 } else { ROW_LABEL0 },
            )
        })
        .collect();
    let query0 = embed_token(params, query_gap, ROW_NULL);
    num::sigmoid(forward(params, &reps, &query0).logit)
}

impl GpoModel {
    /// Installs few-shot pairs for a (typically held-out) user. Gap values
    /// are rounded onto the serialization grid so checkpoints round-trip to
    /// bit-identical predictions.
    pub fn set_context(&mut self, user: &UserId, pairs: &[(Vec<f64>, u8)]) {
        let quantized: Vec<(Vec<f64>, u8)> = pairs
            .iter()
            .map(|(gap, label)| {
                (
                    gap.iter().map(|&v| num::quantize_sig9(v)).collect(),
                    *label,
                )
            })
            .collect();
        self.context_store.insert(user.clone(), quantized);
    }

    /// Context from raw comparison records.
    pub fn set_context_records(
        &mut self,
        user: &UserId,
        records: &[&ComparisonRecord],
    ) -> Result<(), ModelError> {
        let pairs: Result<Vec<(Vec<f64>, u8)>, _> = records
            .iter()
            .map(|r| pair_gap(r).map(|g| (g, r.label)))
            .collect();
        self.set_context(user, &pairs?);
        Ok(())
    }

    pub fn scored_pair(
        &self,
        rec: &ComparisonRecord,
        _policy: FallbackPolicy,
    ) -> Result<ScoredPair, ScoreError> {
        let context = self
            .context_store
            .get(&rec.user_id)
            .ok_or_else(|| ScoreError::NoContext(rec.user_id.clone()))?;
        let gap = pair_gap(rec)?;
        Ok(ScoredPair {
            p_prefer_y1: gpo_prob(&self.params, context, &gap),
            r1: None,
            r2: None,
        })
    }
}

pub(crate) struct GpoObjective {
    /// (gap, label) pools per training user; the first `episode_users` feed
    /// training episodes, the tail is reserved for meta-validation so early
    /// stopping tracks generalization to users the episodes never visit.
    users: Vec<Vec<(Vec<f64>, u8)>>,
    episode_users: usize,
    context_n: usize,
    episodes_per_epoch: usize,
    val_episodes: Vec<(usize, Vec<usize>, usize)>,
}

impl GpoObjective {
    /// Episodes jitter the context size below N so the model infers
    /// preferences from whatever budget it is handed instead of memorizing
    /// training users at one fixed length.
    fn sample_episode(&self, rng: &mut Rng) -> (usize, Vec<usize>, usize) {
        self.sample_episode_from(rng, 0, self.episode_users)
    }

    fn sample_episode_from(&self, rng: &mut Rng, lo: usize, hi: usize) -> (usize, Vec<usize>, usize) {
        let user = lo + rng.below(hi - lo);
        let pool = &self.users[user];
        let floor = (self.context_n / 4).max(2).min(self.context_n);
        let n_ctx = floor + rng.below(self.context_n - floor + 1);
        let idx = rng.sample_indices(pool.len(), n_ctx + 1);
        let query = idx[n_ctx];
        (user, idx[..n_ctx].to_vec(), query)
    }

    fn episode_loss(
        &self,
        params: &ParamSet,
        user: usize,
        ctx_idx: &[usize],
        query: usize,
        grad: Option<&mut ParamSet>,
    ) -> f64 {
        let pool = &self.users[user];
        let context: Vec<(Vec<f64>, u8)> = ctx_idx.iter().map(|&i| pool[i].clone()).collect();
        let (query_gap, label) = &pool[query];
        let reps: Vec<Vec<f64>> = context
            .iter()
            .map(|(gap, l)| {
                embed_token(params, gap, if *l == 1 { ROW_LABEL1 } else { ROW_LABEL0 })
            })
            .collect();
        let query0 = embed_token(params, query_gap, ROW_NULL);
        let cache = forward(params, &reps, &query0);
        let p = num::sigmoid(cache.logit);
        let loss = if *label == 1 {
            -num::log_sigmoid(cache.logit)
        } else {
            -num::log_sigmoid(-cache.logit)
        };
        if let Some(grad) = grad {
            let dlogit = p - *label as f64;
            let input = EpisodeInput {
                context: &context,
                query_gap,
            };
            backward(params, grad, &cache, &input, dlogit);
        }
        loss
    }
}

impl Objective for GpoObjective {
    fn train_len(&self) -> usize {
        self.episodes_per_epoch
    }

    fn loss_and_grad(&self, params: &ParamSet, batch: &[usize], rng: &mut Rng) -> (f64, ParamSet) {
        let mut grad = params.zeros_like();
        let mut total = 0.0;
        for _ in batch {
            let (user, ctx, query) = self.sample_episode(rng);
            total += self.episode_loss(params, user, &ctx, query, Some(&mut grad));
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
            .map(|(user, ctx, query)| self.episode_loss(params, *user, ctx, *query, None))
            .sum();
        Some(total / self.val_episodes.len() as f64)
    }
}

pub(crate) fn init_gpo_params(feat_dim: usize, seed: u64) -> ParamSet {
    let mut rng = Rng::derived(seed, &[INIT_TAG]);
    let mut params = ParamSet::new();
    params.insert(
        "label_emb",
        Tensor::from_fn(3, GPO_LABEL_DIM, |_, _| 0.5 * rng.normal()),
    );
    params.insert("w_in", Tensor::glorot(GPO_WIDTH, feat_dim + GPO_LABEL_DIM, &mut rng));
    params.insert("b_in", Tensor::zeros(GPO_WIDTH, 1));
    for layer in 0..GPO_LAYERS {
        for part in ["wq", "wk", "wv", "wo"] {
            params.insert(
                &layer_name(layer, part),
                Tensor::glorot(GPO_WIDTH, GPO_WIDTH, &mut rng),
            );
        }
        params.insert(
            &layer_name(layer, "mlp_w1"),
            Tensor::glorot(GPO_MLP_HIDDEN, GPO_WIDTH, &mut rng),
        );
        params.insert(&layer_name(layer, "mlp_b1"), Tensor::zeros(GPO_MLP_HIDDEN, 1));
        // residual branches start small so early logits stay near zero
        let mut mlp_w2 = Tensor::glorot(GPO_WIDTH, GPO_MLP_HIDDEN, &mut rng);
        mlp_w2.data.iter_mut().for_each(|v| *v *= 0.1);
        params.insert(&layer_name(layer, "mlp_w2"), mlp_w2);
        params.insert(&layer_name(layer, "mlp_b2"), Tensor::zeros(GPO_WIDTH, 1));
    }
    let mut w_out = Tensor::glorot(GPO_WIDTH, 1, &mut rng);
    w_out.data.iter_mut().for_each(|v| *v *= 0.1);
    params.insert("w_out", w_out);
    params.insert("b_out", Tensor::zeros(1, 1));
    params
}

fn user_pools(dataset: &PreferenceDataset) -> Result<(Vec<UserId>, Vec<Vec<(Vec<f64>, u8)>>), ModelError> {
    let mut ids = Vec::new();
    let mut pools = Vec::new();
    for user in dataset.users() {
        let pool: Result<Vec<(Vec<f64>, u8)>, ModelError> = dataset
            .records_of(user)
            .iter()
            .map(|r| Ok((pair_gap(r)?, r.label)))
            .collect();
        ids.push(user.clone());
        pools.push(pool?);
    }
    Ok((ids, pools))
}

/// Objective plus fresh params for gradient verification.
pub(crate) fn verify_objective(
    train: &PreferenceDataset,
    config: &GpoConfig,
    seed: u64,
) -> Result<(GpoObjective, ParamSet), ModelError> {
    let (ids, pools) = user_pools(train)?;
    for (id, pool) in ids.iter().zip(&pools) {
        if pool.len() < config.context_n + 1 {
            return Err(ModelError::UserTooFewRecords {
                user: id.clone(),
                needed: config.context_n + 1,
                got: pool.len(),
            });
        }
    }
    let feat_dim = pools[0][0].0.len();
    let n = pools.len();
    Ok((
        GpoObjective {
            users: pools,
            episode_users: n,
            context_n: config.context_n,
            episodes_per_epoch: 8,
            val_episodes: Vec::new(),
        },
        init_gpo_params(feat_dim, seed),
    ))
}

/// Meta-trains on the training side of a by-user split. Held-out users are
/// never touched; call [`GpoModel::set_context`] with their few-shot pairs
/// at evaluation time.
pub fn train_gpo_lite(
    split: &DatasetSplit,
    config: &GpoConfig,
    optim: &OptimConfig,
) -> Result<GpoModel, ModelError> {
    if split.mode != SplitMode::ByUser {
        return Err(ModelError::NotByUserSplit);
    }
    if config.context_n == 0 {
        return Err(ModelError::BadHyper("context size must be >= 1"));
    }
    let (ids, pools) = user_pools(&split.train)?;
    if pools.len() < 2 {
        return Err(ModelError::TooFewUsers {
            needed: 2,
            got: pools.len(),
        });
    }
    for (id, pool) in ids.iter().zip(&pools) {
        if pool.len() < config.context_n + 1 {
            return Err(ModelError::UserTooFewRecords {
                user: id.clone(),
                needed: config.context_n + 1,
                got: pool.len(),
            });
        }
    }
    let feat_dim = pools[0][0].0.len();

    // reserve the tail of the user list for meta-validation episodes (user
    // profiles are i.i.d., so the tail is an unbiased holdout): early
    // stopping then measures adaptation to users the episodes never visit
    let n_users = pools.len();
    let meta_val = if n_users >= 5 { (n_users / 5).max(1) } else { 0 };
    let mut objective = GpoObjective {
        users: pools,
        episode_users: n_users - meta_val,
        context_n: config.context_n,
        episodes_per_epoch: config.episodes_per_epoch,
        val_episodes: Vec::new(),
    };
    let mut val_rng = Rng::derived(optim.seed, &[VAL_SAMPLE_TAG]);
    objective.val_episodes = (0..512)
        .map(|_| {
            if meta_val > 0 {
                objective.sample_episode_from(&mut val_rng, n_users - meta_val, n_users)
            } else {
                objective.sample_episode(&mut val_rng)
            }
        })
        .collect();

    let init = init_gpo_params(feat_dim, optim.seed);
    let (mut params, _) = optimize(&objective, init, optim)?;
    params.quantize_sig9();

    let mut model = GpoModel {
        params,
        config: config.clone(),
        optim: optim.clone(),
        context_store: BTreeMap::new(),
    };
    // default context for seen (training) users
    for (uidx, (id, pool)) in ids.iter().zip(&objective.users).enumerate() {
        let mut rng = Rng::derived(optim.seed, &[CTX_TAG, uidx as u64]);
        let pick = rng.sample_indices(pool.len(), config.context_n.min(pool.len()));
        let pairs: Vec<(Vec<f64>, u8)> = pick.into_iter().map(|i| pool[i].clone()).collect();
        model.set_context(id, &pairs);
    }
    Ok(model)
}
