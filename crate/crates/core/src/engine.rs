//! Minimal optimization engine: named dense tensors, Bradley-Terry losses,
//! a seeded stochastic optimizer (plain SGD or adaptive-moment), and
//! central-difference gradient verification.
//!
//! Gradients for every model are hand-derived; the engine only consumes
//! them through the [`Objective`] trait, so it stays dependency-free and
//! auditable. Stochastic objectives (episode samplers, reparameterized
//! latents) receive a counter-derived [`Rng`] per batch, which keeps traces
//! bitwise reproducible and lets [`grad_check`] freeze the noise when
//! comparing against finite differences.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::num;
use crate::rng::Rng;

const EPOCH_TAG: u64 = 0xE9;
const BATCH_TAG: u64 = 0xBA;
const VAL_TAG: u64 = 0x7A;
const PROBE_TAG: u64 = 0x96;
const EVAL_TAG: u64 = 0xEF;

/// Dense row-major matrix; vectors are n x 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor { rows, cols, data }
    }

    /// Gaussian init scaled by 1/sqrt(fan_in).
    pub fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / num::sqrt(cols.max(1) as f64);
        Tensor::from_fn(rows, cols, |_, _| scale * rng.normal())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// out = self * v (matrix-vector).
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// out = self^T * v.
    pub fn tmatvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// self += scale * u v^T (outer-product accumulation).
    pub fn add_outer(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            let s = scale * u[i];
            for (t, b) in self.row_mut(i).iter_mut().zip(v) {
                *t += s * b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Named tensors with fixed shapes; iteration order is name order, which
/// fixes the flat coordinate layout used by [`grad_check`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    items: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.items.insert(name.to_string(), tensor);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.items
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.items
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.items.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.items.iter_mut()
    }

    /// In-place scale of every parameter.
    pub fn scale(&mut self, factor: f64) {
        for t in self.items.values_mut() {
            for v in &mut t.data {
                *v *= factor;
            }
        }
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            items: self
                .items
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.rows, t.cols)))
                .collect(),
        }
    }

    pub fn flat_len(&self) -> usize {
        self.items.values().map(|t| t.data.len()).sum()
    }

    pub fn get_flat(&self, index: usize) -> f64 {
        let mut offset = index;
        for t in self.items.values() {
            if offset < t.data.len() {
                return t.data[offset];
            }
            offset -= t.data.len();
        }
        panic!("flat index {index} out of range");
    }

    pub fn set_flat(&mut self, index: usize, value: f64) {
        let mut offset = index;
        for t in self.items.values_mut() {
            if offset < t.data.len() {
                t.data[offset] = value;
                return;
            }
            offset -= t.data.len();
        }
        panic!("flat index {index} out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.items.values().all(Tensor::is_finite)
    }

    /// Rounds every parameter onto the 9-digit serialization grid, so
    /// checkpoints round-trip to bit-identical predictions.
    pub fn quantize_sig9(&mut self) {
        for t in self.items.values_mut() {
            for v in &mut t.data {
                *v = num::quantize_sig9(*v);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimMethod {
    /// Plain stochastic gradient descent.
    Sgd,
    /// Adaptive-moment estimation.
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Default for OptimMethod {
    fn default() -> Self {
        OptimMethod::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub method: OptimMethod,
    pub seed: u64,
    /// Early-stop patience on validation loss; `None` disables.
    pub patience: Option<usize>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 1e-2,
            batch_size: 64,
            epochs: 200,
            method: OptimMethod::default(),
            seed: 0,
            patience: Some(10),
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(EngineError::BadConfig("learning rate must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(EngineError::BadConfig("batch size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EngineError {
    BadConfig(&'static str),
    NonFiniteLoss { epoch: usize, batch: usize },
}

impl core::fmt::Display for EngineError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EngineError::BadConfig(msg) => write!(f, "invalid optimizer config: {msg}"),
            EngineError::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
        }
    }
}

/// Per-epoch record of the training trace.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

pub type Trace = Vec<EpochStat>;

/// A differentiable objective over a [`ParamSet`].
///
/// `batch` indexes abstract training units (records for plain losses,
/// episodes for meta-learned ones). The `rng` is the only source of
/// randomness and is freshly derived per call site.
pub trait Objective {
    fn train_len(&self) -> usize;

    /// Mean loss over the batch and its gradient.
    fn loss_and_grad(&self, params: &ParamSet, batch: &[usize], rng: &mut Rng) -> (f64, ParamSet);

    /// Validation loss for early stopping; `None` disables.
    fn val_loss(&self, params: &ParamSet, rng: &mut Rng) -> Option<f64> {
        let _ = (params, rng);
        None
    }
}

/// Probability of preferring the first item: sigmoid(r_plus - r_minus).
pub fn bt_prob(r_plus: f64, r_minus: f64) -> f64 {
    num::sigmoid(r_plus - r_minus)
}

/// Mean negative log-likelihood of a batch of (r_plus, r_minus) score pairs,
/// with each term's gradient: d/dr_plus = -(1 - p), d/dr_minus = +(1 - p).
pub fn bt_loss(scores: &[(f64, f64)]) -> (f64, Vec<(f64, f64)>) {
    assert!(!scores.is_empty(), "bt_loss needs a nonempty batch");
    let mut total = 0.0;
    let grads = scores
        .iter()
        .map(|&(rp, rm)| {
            let diff = rp - rm;
            total += -num::log_sigmoid(diff);
            let q = 1.0 - num::sigmoid(diff);
            (-q, q)
        })
        .collect();
    (total / scores.len() as f64, grads)
}

struct AdamState {
    m: ParamSet,
    v: ParamSet,
    step: u64,
}

fn apply_update(
    params: &mut ParamSet,
    grad: &ParamSet,
    cfg: &OptimConfig,
    adam: &mut Option<AdamState>,
) {
    match cfg.method {
        OptimMethod::Sgd => {
            for (name, g) in grad.iter() {
                let p = params.get_mut(name);
                for (w, gi) in p.data.iter_mut().zip(&g.data) {
                    *w -= cfg.learning_rate * gi;
                }
            }
        }
        OptimMethod::Adam { beta1, beta2, eps } => {
            let state = adam.as_mut().expect("adam state initialized");
            state.step += 1;
            let bc1 = 1.0 - num::powf(beta1, state.step as f64);
            let bc2 = 1.0 - num::powf(beta2, state.step as f64);
            for (name, g) in grad.iter() {
                let m = state.m.get_mut(name);
                let p_len = m.data.len();
                for i in 0..p_len {
                    m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
                }
                let v = state.v.get_mut(name);
                for i in 0..p_len {
                    v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
                }
                let (m, v) = (state.m.get(name), state.v.get(name));
                let p = params.get_mut(name);
                for i in 0..p_len {
                    let m_hat = m.data[i] / bc1;
                    let v_hat = v.data[i] / bc2;
                    p.data[i] -= cfg.learning_rate * m_hat / (num::sqrt(v_hat) + eps);
                }
            }
        }
    }
}

/// Runs the configured schedule (or stops early on validation loss) and
/// returns the best parameters plus the per-epoch trace. Pure function of
/// (objective, init, config): identical seeds give bitwise-identical traces.
pub fn optimize(
    objective: &dyn Objective,
    init: ParamSet,
    cfg: &OptimConfig,
) -> Result<(ParamSet, Trace), EngineError> {
    cfg.validate()?;
    let mut params = init;
    let mut adam = match cfg.method {
        OptimMethod::Adam { .. } => Some(AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }),
        OptimMethod::Sgd => None,
    };

    let n = objective.train_len();
    let mut trace = Trace::new();
    let mut best: Option<(f64, ParamSet)> = None;
    let mut stale_epochs = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        Rng::derived(cfg.seed, &[EPOCH_TAG, epoch as u64]).shuffle(&mut order);

        let mut weighted_loss = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut rng = Rng::derived(cfg.seed, &[BATCH_TAG, epoch as u64, bi as u64]);
            let (loss, grad) = objective.loss_and_grad(&params, batch, &mut rng);
            if !loss.is_finite() || !grad.is_finite() {
                return Err(EngineError::NonFiniteLoss { epoch, batch: bi });
            }
            weighted_loss += loss * batch.len() as f64;
            apply_update(&mut params, &grad, cfg, &mut adam);
        }
        let train_loss = if n == 0 { 0.0 } else { weighted_loss / n as f64 };

        let mut val_rng = Rng::derived(cfg.seed, &[VAL_TAG, epoch as u64]);
        let val_loss = objective.val_loss(&params, &mut val_rng);
        trace.push(EpochStat {
            epoch,
            train_loss,
            val_loss,
        });

        if let (Some(val), Some(patience)) = (val_loss, cfg.patience) {
            let improved = best.as_ref().map_or(true, |(b, _)| val < *b);
            if improved {
                best = Some((val, params.clone()));
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs > patience {
                    break;
                }
            }
        }
    }

    if let Some((_, best_params)) = best {
        params = best_params;
    }
    Ok((params, trace))
}

/// Compares the analytic gradient against central finite differences at
/// `n_probes` random coordinates and returns the worst error. The error is
/// relative except where both sides are ~0, where it is absolute. Loss
/// evaluations at theta+h and theta-h reuse identical random streams, so
/// stochastic objectives check cleanly.
pub fn grad_check(
    objective: &dyn Objective,
    params: &ParamSet,
    batch: &[usize],
    n_probes: usize,
    seed: u64,
) -> f64 {
    let eval = |p: &ParamSet| -> f64 {
        let mut rng = Rng::derived(seed, &[EVAL_TAG]);
        objective.loss_and_grad(p, batch, &mut rng).0
    };
    let analytic = {
        let mut rng = Rng::derived(seed, &[EVAL_TAG]);
        objective.loss_and_grad(params, batch, &mut rng).1
    };

    let dim = params.flat_len();
    let mut probe_rng = Rng::derived(seed, &[PROBE_TAG]);
    let mut worst = 0.0f64;
    for _ in 0..n_probes {
        let coord = probe_rng.below(dim);
        let theta = params.get_flat(coord);
        let h = 1e-5 * num::abs(theta).max(1.0);

        let mut shifted = params.clone();
        shifted.set_flat(coord, theta + h);
        let up = eval(&shifted);
        shifted.set_flat(coord, theta - h);
        let down = eval(&shifted);

        let numeric = (up - down) / (2.0 * h);
        let exact = analytic.get_flat(coord);
        let scale = num::abs(exact).max(num::abs(numeric));
        let err = if scale < 1e-8 {
            num::abs(exact - numeric)
        } else {
            num::abs(exact - numeric) / scale
        };
        worst = worst.max(err);
    }
    worst
}
