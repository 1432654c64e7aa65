//! Synthetic annotator populations with controllable inter-user disagreement,
//! intra-user consistency, and minority structure.
//!
//! Three population archetypes are supported:
//!
//! - `SoupsLike` — sign-structured opposing personas: every user is one of
//!   2^D sign patterns over D orthogonal direction blocks plus a small
//!   shared direction, and users are added in complementary pairs so
//!   disagreement saturates while majority votes stay decidable.
//! - `PersonalLlmLike` — users are Dirichlet mixtures of k random unit
//!   archetypes; optional minority users load onto a dedicated archetype
//!   anti-correlated with the population mean.
//! - `TldrLike` — all users share one base archetype plus a small per-user
//!   perturbation whose scale is calibrated by bisection so the generated
//!   divergence rate lands in [0.4, 0.6].
//!
//! Users label comparisons through a logistic noise channel: label 1 with
//! probability sigmoid((u(x,y1) - u(x,y2)) / tau), and deterministically by
//! sign at tau = 0. Prompts and responses are unit-norm so utility gaps stay
//! O(1) and tau means the same thing in every mode.

use alloc::format;

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{
    triple_id, ComparisonRecord, DataError, DatasetMeta, Embedding, PreferenceDataset, UserId,
};
use crate::num;
use crate::rng::Rng;

/// Archetype count fixed by the three opposing preference dimensions.
pub const SOUPS_SIGN_DIMS: u32 = 3;
/// Weight of the shared (non-opposed) utility direction in soups-like
/// archetypes. Without it, complementary personas cancel exactly and every
/// majority vote ties; with it, majorities exist on the slice of triples
/// where the shared signal beats the opposed blocks, which is what keeps an
/// aggregate model trainable yet barely above chance.
pub const SOUPS_SHARED_WEIGHT: f64 = 0.12;
/// Archetype count for mixture populations.
pub const MIXTURE_ARCHETYPES: usize = 8;
/// Dirichlet concentration for mixture users.
const MIXTURE_DIRICHLET_ALPHA: f64 = 0.3;
/// Weight a minority user places on its dedicated archetype.
const MINORITY_WEIGHT: f64 = 0.92;

const ARCH_TAG: u64 = 0xA2C4;
const PROFILE_TAG: u64 = 0xBEA7;
const TRIPLE_TAG: u64 = 0x7219;
const LABEL_TAG: u64 = 0x1AB1;
const DUP_TAG: u64 = 0xD0B2;
const MINORITY_TAG: u64 = 0x3170;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenMode {
    SoupsLike,
    PersonalLlmLike,
    TldrLike,
}

impl core::fmt::Display for GenMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            GenMode::SoupsLike => "soups",
            GenMode::PersonalLlmLike => "personalllm",
            GenMode::TldrLike => "tldr",
        };
        f.write_str(s)
    }
}

/// Ground-truth utility direction in the joint feature space (length 2d).
#[derive(Clone, Debug, PartialEq)]
pub struct Archetype {
    pub id: usize,
    pub utility_vector: Embedding,
}

/// Ground-truth synthetic user: archetype mixture plus consistency temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct UserProfile {
    pub user_id: UserId,
    pub mixture_weights: Vec<f64>,
    pub tau: f64,
}

impl UserProfile {
    /// Combined utility direction of this user.
    pub fn mixture_vector(&self, archetypes: &[Archetype]) -> Vec<f64> {
        let f = archetypes.first().map_or(0, |a| a.utility_vector.len());
        let mut w = vec![0.0; f];
        for (wk, arch) in self.mixture_weights.iter().zip(archetypes) {
            for (acc, v) in w.iter_mut().zip(arch.utility_vector.values()) {
                *acc += wk * v;
            }
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub mode: GenMode,
    pub n_users: usize,
    pub n_triples: usize,
    pub dimension: usize,
    pub tau: f64,
    /// Users drawn adversarially far from the population mean; 0 disables.
    pub minority_count: usize,
    /// Fraction of triples re-annotated once per user.
    pub duplicate_fraction: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_users == 0 || self.n_triples == 0 || self.dimension == 0 {
            return Err(SynthError::BadConfig("counts must be positive"));
        }
        if !(0.0..=1.0).contains(&self.duplicate_fraction) {
            return Err(SynthError::BadConfig("duplicate_fraction outside [0, 1]"));
        }
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(SynthError::BadConfig("tau must be finite and >= 0"));
        }
        match self.mode {
            GenMode::SoupsLike => {
                let max = 1usize << SOUPS_SIGN_DIMS;
                if self.n_users % 2 != 0 || self.n_users > max {
                    return Err(SynthError::BadConfig(
                        "soups-like users come in opposed pairs: n_users must be even and at most 8",
                    ));
                }
                if self.minority_count != 0 {
                    return Err(SynthError::BadConfig(
                        "minority users are only defined for personalllm-like mode",
                    ));
                }
            }
            GenMode::PersonalLlmLike => {
                if self.minority_count * 2 >= self.n_users {
                    return Err(SynthError::BadConfig(
                        "minority users must be fewer than half the population",
                    ));
                }
            }
            GenMode::TldrLike => {
                if self.minority_count != 0 {
                    return Err(SynthError::BadConfig(
                        "minority users are only defined for personalllm-like mode",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SynthError {
    BadConfig(&'static str),
    NotPowerOfTwo { k: usize },
    DimensionMismatch { expected: usize, got: usize },
    CalibrationFailed { divergence_at_bounds: (f64, f64) },
    Data(DataError),
}

impl core::fmt::Display for SynthError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SynthError::BadConfig(msg) => write!(f, "invalid generator config: {msg}"),
            SynthError::NotPowerOfTwo { k } => {
                write!(f, "soups-like archetype count must be a power of two, got {k}")
            }
            SynthError::DimensionMismatch { expected, got } => {
                write!(f, "embedding dimension {got}, expected {expected}")
            }
            SynthError::CalibrationFailed { divergence_at_bounds } => write!(
                f,
                "tldr calibration cannot reach divergence in [0.4, 0.6]; bounds give ({:.3}, {:.3})",
                divergence_at_bounds.0, divergence_at_bounds.1
            ),
            SynthError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<DataError> for SynthError {
    fn from(e: DataError) -> Self {
        SynthError::Data(e)
    }
}

/// Joint feature map: concat(y, x ⊙ y), length 2d.
///
/// The elementwise product gives utilities prompt dependence; a pure y map
/// would make every user's preference independent of x.
pub fn feature_map(x: &Embedding, y: &Embedding) -> Result<Embedding, SynthError> {
    if x.len() != y.len() {
        return Err(SynthError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let mut out = Vec::with_capacity(2 * y.len());
    out.extend_from_slice(y.values());
    out.extend(x.values().iter().zip(y.values()).map(|(a, b)| a * b));
    Ok(Embedding::new(out))
}

/// Unit-norm standard-normal vector.
pub fn unit_vector(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut v = rng.normal_vec(n);
    let norm = num::sqrt(v.iter().map(|x| x * x).sum());
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Orthonormal set of `k` directions in `dim` dimensions via Gram-Schmidt.
fn orthonormal_directions(rng: &mut Rng, k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(k);
    while dirs.len() < k {
        let mut v = rng.normal_vec(dim);
        for d in &dirs {
            let proj: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(d) {
                *x -= proj * y;
            }
        }
        let norm = num::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-8 {
            for x in &mut v {
                *x /= norm;
            }
            dirs.push(v);
        }
    }
    dirs
}

/// Builds `k` unit-norm archetype utility vectors in the 2d feature space.
///
/// Soups-like requires `k = 2^D`: archetype i applies the sign pattern of i's
/// bits to D fixed orthogonal direction blocks, so archetype i and its
/// bitwise complement are exact opposites. The other modes draw independent
/// unit vectors (tldr-like treats index 0 as the shared base).
pub fn make_archetypes(
    k: usize,
    mode: GenMode,
    dimension: usize,
    seed: u64,
) -> Result<Vec<Archetype>, SynthError> {
    if k == 0 {
        return Err(SynthError::BadConfig("archetype count must be positive"));
    }
    let f = 2 * dimension;
    let mut rng = Rng::derived(seed, &[ARCH_TAG]);
    let vectors: Vec<Vec<f64>> = match mode {
        GenMode::SoupsLike => {
            if !k.is_power_of_two() {
                return Err(SynthError::NotPowerOfTwo { k });
            }
            let dims = k.trailing_zeros() as usize;
            if f < dims + 1 {
                return Err(SynthError::BadConfig(
                    "feature dimension too small for the sign blocks",
                ));
            }
            // dims opposed blocks plus one shared direction
            let mut directions = orthonormal_directions(&mut rng, dims + 1, f);
            let shared = directions.pop().expect("shared direction");
            let kappa = SOUPS_SHARED_WEIGHT;
            let norm = num::sqrt(1.0 + kappa * kappa);
            let block_scale = 1.0 / (num::sqrt(dims as f64) * norm);
            (0..k)
                .map(|pattern| {
                    let mut v: Vec<f64> = shared.iter().map(|s| kappa / norm * s).collect();
                    for (b, block) in directions.iter().enumerate() {
                        let sign = if (pattern >> b) & 1 == 1 { 1.0 } else { -1.0 };
                        for (x, y) in v.iter_mut().zip(block) {
                            *x += sign * block_scale * y;
                        }
                    }
                    v
                })
                .collect()
        }
        GenMode::PersonalLlmLike | GenMode::TldrLike => {
            (0..k).map(|_| unit_vector(&mut rng, f)).collect()
        }
    };
    Ok(vectors
        .into_iter()
        .enumerate()
        .map(|(id, v)| Archetype {
            id,
            utility_vector: Embedding::quantized(v),
        })
        .collect())
}

/// Ground-truth utility of `y` given `x` for this user:
/// (sum_k w_k a_k) · feature_map(x, y).
pub fn user_utility(
    user: &UserProfile,
    archetypes: &[Archetype],
    x: &Embedding,
    y: &Embedding,
) -> Result<f64, SynthError> {
    let features = feature_map(x, y)?;
    let w = user.mixture_vector(archetypes);
    if w.len() != features.len() {
        return Err(SynthError::DimensionMismatch {
            expected: features.len(),
            got: w.len(),
        });
    }
    Ok(features.dot(&w))
}

/// Label from a utility gap: sign at tau = 0 (fair coin on an exact tie),
/// otherwise Bernoulli(sigmoid(gap / tau)).
pub fn label_from_gap(gap: f64, tau: f64, rng: &mut Rng) -> u8 {
    if tau == 0.0 {
        if gap > 0.0 {
            1
        } else if gap < 0.0 {
            0
        } else {
            rng.coin() as u8
        }
    } else {
        (rng.next_f64() < num::sigmoid(gap / tau)) as u8
    }
}

/// Samples this user's label for the comparison (x, y1, y2).
pub fn sample_comparison(
    user: &UserProfile,
    archetypes: &[Archetype],
    x: &Embedding,
    y1: &Embedding,
    y2: &Embedding,
    rng: &mut Rng,
) -> Result<u8, SynthError> {
    let u1 = user_utility(user, archetypes, x, y1)?;
    let u2 = user_utility(user, archetypes, x, y2)?;
    Ok(label_from_gap(u1 - u2, user.tau, rng))
}

fn user_label(n_users: usize, index: usize) -> UserId {
    let width = if n_users > 100 { 3 } else { 2 };
    UserId(format!("u{index:0width$}"))
}

/// Quantizes mixture weights onto the serialization grid while keeping the
/// unit-sum invariant within 1e-9.
fn quantize_weights(mut w: Vec<f64>) -> Vec<f64> {
    for v in &mut w {
        *v = num::quantize_sig9(*v);
    }
    let drift: f64 = 1.0 - w.iter().sum::<f64>();
    let top = (0..w.len()).fold(0, |best, i| if w[i] > w[best] { i } else { best });
    w[top] = num::quantize_sig9(w[top] + drift);
    w
}

/// Soups user order: opposed pattern pairs adjacent, so any even prefix is
/// complement-closed.
fn soups_pattern_order(k: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(k);
    for i in 0..k / 2 {
        order.push(i);
        order.push((k - 1) ^ i);
    }
    order
}

/// Dedicated archetype anti-correlated (dot < -0.5) with the population mean.
fn minority_archetype(population: &[Archetype], id: usize, seed: u64) -> Archetype {
    let f = population[0].utility_vector.len();
    let mut mean = vec![0.0; f];
    for a in population {
        for (m, v) in mean.iter_mut().zip(a.utility_vector.values()) {
            *m += v;
        }
    }
    let norm = num::sqrt(mean.iter().map(|x| x * x).sum());
    for m in &mut mean {
        *m /= norm.max(1e-12);
    }
    let mut rng = Rng::derived(seed, &[MINORITY_TAG]);
    let mut noise_scale = 0.3;
    loop {
        let noise = rng.normal_vec(f);
        let mut v: Vec<f64> = mean
            .iter()
            .zip(&noise)
            .map(|(m, n)| -m + noise_scale * n / num::sqrt(f as f64))
            .collect();
        let vnorm = num::sqrt(v.iter().map(|x| x * x).sum());
        for x in &mut v {
            *x /= vnorm;
        }
        let dot: f64 = v.iter().zip(&mean).map(|(a, b)| a * b).sum();
        if dot < -0.5 {
            return Archetype {
                id,
                utility_vector: Embedding::quantized(v),
            };
        }
        noise_scale *= 0.5;
    }
}

fn build_population(
    config: &GeneratorConfig,
    lambda: Option<f64>,
) -> Result<(Vec<Archetype>, Vec<UserProfile>), SynthError> {
    let seed = config.seed;
    match config.mode {
        GenMode::SoupsLike => {
            let k = 1usize << SOUPS_SIGN_DIMS;
            let archetypes = make_archetypes(k, GenMode::SoupsLike, config.dimension, seed)?;
            let order = soups_pattern_order(k);
            let profiles = (0..config.n_users)
                .map(|j| {
                    let mut w = vec![0.0; k];
                    w[order[j]] = 1.0;
                    UserProfile {
                        user_id: user_label(config.n_users, j),
                        mixture_weights: w,
                        tau: config.tau,
                    }
                })
                .collect();
            Ok((archetypes, profiles))
        }
        GenMode::PersonalLlmLike => {
            let mut archetypes = make_archetypes(
                MIXTURE_ARCHETYPES,
                GenMode::PersonalLlmLike,
                config.dimension,
                seed,
            )?;
            let has_minority = config.minority_count > 0;
            if has_minority {
                archetypes.push(minority_archetype(&archetypes, MIXTURE_ARCHETYPES, seed));
            }
            let total = archetypes.len();
            let mut rng = Rng::derived(seed, &[PROFILE_TAG]);
            let regular = config.n_users - config.minority_count;
            let profiles = (0..config.n_users)
                .map(|j| {
                    let base = rng.dirichlet(MIXTURE_DIRICHLET_ALPHA, MIXTURE_ARCHETYPES);
                    let mut w = vec![0.0; total];
                    if j >= regular {
                        // minority: concentrated on the dedicated archetype
                        for (slot, b) in w.iter_mut().zip(&base) {
                            *slot = (1.0 - MINORITY_WEIGHT) * b;
                        }
                        w[MIXTURE_ARCHETYPES] = MINORITY_WEIGHT;
                    } else {
                        w[..MIXTURE_ARCHETYPES].copy_from_slice(&base);
                    }
                    UserProfile {
                        user_id: user_label(config.n_users, j),
                        mixture_weights: quantize_weights(w),
                        tau: config.tau,
                    }
                })
                .collect();
            Ok((archetypes, profiles))
        }
        GenMode::TldrLike => {
            let lambda = lambda.expect("tldr population requires a calibrated lambda");
            let archetypes =
                make_archetypes(config.n_users + 1, GenMode::TldrLike, config.dimension, seed)?;
            let profiles = (0..config.n_users)
                .map(|j| {
                    let mut w = vec![0.0; config.n_users + 1];
                    w[0] = 1.0 - lambda;
                    w[j + 1] = lambda;
                    UserProfile {
                        user_id: user_label(config.n_users, j),
                        mixture_weights: quantize_weights(w),
                        tau: config.tau,
                    }
                })
                .collect();
            Ok((archetypes, profiles))
        }
    }
}

struct TripleDraw {
    x: Embedding,
    y1: Embedding,
    y2: Embedding,
    gap: Vec<f64>,
    duplicated: bool,
}

/// Triple `t` is a pure function of (seed, t): prompts/responses are
/// unit-norm normals on the serialization grid.
fn draw_triple(config: &GeneratorConfig, t: usize) -> Result<TripleDraw, SynthError> {
    let mut rng = Rng::derived(config.seed, &[TRIPLE_TAG, t as u64]);
    let x = Embedding::quantized(unit_vector(&mut rng, config.dimension));
    let y1 = Embedding::quantized(unit_vector(&mut rng, config.dimension));
    let y2 = Embedding::quantized(unit_vector(&mut rng, config.dimension));
    let gap = feature_map(&x, &y1)?.sub(&feature_map(&x, &y2)?);
    let duplicated =
        Rng::derived(config.seed, &[DUP_TAG, t as u64]).next_f64() < config.duplicate_fraction;
    Ok(TripleDraw {
        x,
        y1,
        y2,
        gap,
        duplicated,
    })
}

fn label_for(
    config: &GeneratorConfig,
    gap_dot: f64,
    tau: f64,
    t: usize,
    user_index: usize,
    repeat: usize,
) -> u8 {
    let mut rng = Rng::derived(
        config.seed,
        &[LABEL_TAG, t as u64, user_index as u64, repeat as u64],
    );
    label_from_gap(gap_dot, tau, &mut rng)
}

/// Divergence of the first `pilot` triples under mixture directions `w_users`,
/// using the exact label streams of the final dataset.
fn pilot_divergence(config: &GeneratorConfig, w_users: &[Vec<f64>], pilot: usize) -> Result<f64, SynthError> {
    let mut divergent = 0usize;
    for t in 0..pilot {
        let draw = draw_triple(config, t)?;
        let mut labels: Vec<u8> = Vec::with_capacity(w_users.len() * 2);
        for (j, w) in w_users.iter().enumerate() {
            let gap_dot: f64 = w.iter().zip(&draw.gap).map(|(a, b)| a * b).sum();
            labels.push(label_for(config, gap_dot, config.tau, t, j, 0));
            if draw.duplicated {
                labels.push(label_for(config, gap_dot, config.tau, t, j, 1));
            }
        }
        if labels.iter().any(|&l| l != labels[0]) {
            divergent += 1;
        }
    }
    Ok(divergent as f64 / pilot as f64)
}

/// Bisection on the perturbation weight so pilot divergence hits ~0.49.
fn calibrate_tldr(config: &GeneratorConfig) -> Result<f64, SynthError> {
    const TARGET: f64 = 0.49;
    let pilot = config.n_triples.min(400);
    let div_at = |lambda: f64| -> Result<f64, SynthError> {
        let (arch, profiles) = build_population(config, Some(lambda))?;
        let w_users: Vec<Vec<f64>> = profiles.iter().map(|p| p.mixture_vector(&arch)).collect();
        pilot_divergence(config, &w_users, pilot)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let (d_lo, d_hi) = (div_at(lo)?, div_at(hi)?);
    if d_lo > 0.6 || d_hi < 0.4 {
        return Err(SynthError::CalibrationFailed {
            divergence_at_bounds: (d_lo, d_hi),
        });
    }
    let mut best = (0.5, f64::INFINITY);
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        let d = div_at(mid)?;
        if num::abs(d - TARGET) < best.1 {
            best = (mid, num::abs(d - TARGET));
        }
        if d < TARGET {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(num::quantize_sig9(best.0))
}

/// Generates the dataset and its ground-truth user profiles.
///
/// Record layout per triple: one record per user in profile order, then (for
/// re-annotated triples) a second per-user pass. All label randomness is
/// counter-derived from (seed, triple, user, repeat), so output is identical
/// regardless of evaluation order.
pub fn generate_dataset(
    config: &GeneratorConfig,
) -> Result<(PreferenceDataset, Vec<UserProfile>), SynthError> {
    config.validate()?;
    let lambda = match config.mode {
        GenMode::TldrLike => Some(calibrate_tldr(config)?),
        _ => None,
    };
    let (archetypes, profiles) = build_population(config, lambda)?;
    let w_users: Vec<Vec<f64>> = profiles
        .iter()
        .map(|p| p.mixture_vector(&archetypes))
        .collect();

    let mut records = Vec::with_capacity(config.n_users * config.n_triples);
    for t in 0..config.n_triples {
        let draw = draw_triple(config, t)?;
        let id = triple_id(&draw.x, &draw.y1, &draw.y2);
        let repeats = if draw.duplicated { 2 } else { 1 };
        for repeat in 0..repeats {
            for (j, profile) in profiles.iter().enumerate() {
                let gap_dot: f64 = w_users[j].iter().zip(&draw.gap).map(|(a, b)| a * b).sum();
                let label = label_for(config, gap_dot, profile.tau, t, j, repeat);
                records.push(ComparisonRecord {
                    triple_id: id.clone(),
                    user_id: profile.user_id.clone(),
                    x: draw.x.clone(),
                    y1: draw.y1.clone(),
                    y2: draw.y2.clone(),
                    label,
                });
            }
        }
    }

    let meta = DatasetMeta {
        generator: Some(config.clone()),
        seed: config.seed,
        calibration: lambda,
    };
    let dataset = PreferenceDataset::new(config.dimension, records, meta)?;
    Ok((dataset, profiles))
}

/// Per-user combined utility vectors; the archetype family handed to probe
/// construction.
pub fn effective_utilities(profiles: &[UserProfile], archetypes: &[Archetype]) -> Vec<Vec<f64>> {
    profiles
        .iter()
        .map(|p| p.mixture_vector(archetypes))
        .collect()
}

/// Rebuilds the archetype set a generated dataset was drawn from.
pub fn archetypes_for(config: &GeneratorConfig, calibration: Option<f64>) -> Result<Vec<Archetype>, SynthError> {
    let lambda = match config.mode {
        GenMode::TldrLike => Some(calibration.ok_or(SynthError::BadConfig(
            "tldr-like dataset metadata is missing its calibration constant",
        ))?),
        _ => None,
    };
    Ok(build_population(config, lambda)?.0)
}

/// Rebuilds the ground-truth profiles for a generated dataset.
pub fn profiles_for(config: &GeneratorConfig, calibration: Option<f64>) -> Result<Vec<UserProfile>, SynthError> {
    let lambda = match config.mode {
        GenMode::TldrLike => Some(calibration.ok_or(SynthError::BadConfig(
            "tldr-like dataset metadata is missing its calibration constant",
        ))?),
        _ => None,
    };
    Ok(build_population(config, lambda)?.1)
}
