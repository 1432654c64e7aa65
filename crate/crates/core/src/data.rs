//! Comparison records, datasets, splits, and triple grouping.
//!
//! Datasets are immutable after construction: [`PreferenceDataset::new`]
//! validates dimensions and derives the user set, and nothing mutates records
//! afterwards. Record order is preserved end-to-end so downstream runs are
//! byte-reproducible.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::num;
use crate::rng::Rng;
use crate::synthgen::GeneratorConfig;

/// Annotator identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub String);

impl UserId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_string())
    }
}

impl core::fmt::Display for UserId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Content-derived identifier of an (x, y1, y2) triple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TripleId(pub String);

impl TripleId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl core::fmt::Display for TripleId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Fixed-length vector in the shared feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Embedding { values }
    }

    /// Construction path for values headed to disk: rounds onto the
    /// 9-significant-digit grid so save/load round-trips are exact.
    pub fn quantized(values: Vec<f64>) -> Self {
        Embedding {
            values: values.into_iter().map(num::quantize_sig9).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        num::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    /// Cosine similarity; 0 when either vector is zero.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other.values()) / denom
        }
    }

    pub fn sub(&self, other: &Embedding) -> Vec<f64> {
        self.values
            .iter()
            .zip(other.values())
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// One annotated pairwise preference; `label == 1` means y1 preferred.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRecord {
    pub triple_id: TripleId,
    pub user_id: UserId,
    pub x: Embedding,
    pub y1: Embedding,
    pub y2: Embedding,
    pub label: u8,
}

/// Hashes triple content on the 9-digit serialization grid, so re-annotations
/// of the same triple share an id with no extra bookkeeping.
pub fn triple_id(x: &Embedding, y1: &Embedding, y2: &Embedding) -> TripleId {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325; // FNV-1a offset basis
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    };
    for (tag, emb) in [(b'x', x), (b'1', y1), (b'2', y2)] {
        eat(&[tag, b':']);
        for &v in emb.values() {
            eat(num::fmt_sig9(num::quantize_sig9(v)).as_bytes());
            eat(b",");
        }
    }
    TripleId(format!("{h:016x}"))
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataError {
    EmptyDataset,
    DimensionMismatch {
        record: usize,
        field: &'static str,
        expected: usize,
        got: usize,
    },
    BadLabel {
        record: usize,
        got: u8,
    },
    NonFiniteValue {
        record: usize,
        field: &'static str,
    },
    BadFractions {
        sum: f64,
    },
    TooFewGroups {
        available: usize,
        requested: usize,
    },
}

impl core::fmt::Display for DataError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DataError::EmptyDataset => write!(f, "empty dataset"),
            DataError::DimensionMismatch {
                record,
                field,
                expected,
                got,
            } => write!(
                f,
                "record {record}: field {field} has dimension {got}, expected {expected}"
            ),
            DataError::BadLabel { record, got } => {
                write!(f, "record {record}: label {got} outside {{0, 1}}")
            }
            DataError::NonFiniteValue { record, field } => {
                write!(f, "record {record}: non-finite value in {field}")
            }
            DataError::BadFractions { sum } => {
                write!(f, "split fractions must be nonnegative and sum to 1, got sum {sum}")
            }
            DataError::TooFewGroups {
                available,
                requested,
            } => write!(
                f,
                "by-user split needs at least {requested} users, dataset has {available}"
            ),
        }
    }
}

/// Generator provenance carried in the dataset header.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DatasetMeta {
    pub generator: Option<GeneratorConfig>,
    pub seed: u64,
    /// Perturbation-scale constant fixed by calibration (tldr-like mode).
    pub calibration: Option<f64>,
}

/// An ordered collection of comparison records with a shared dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceDataset {
    dimension: usize,
    records: Vec<ComparisonRecord>,
    users: BTreeSet<UserId>,
    pub metadata: DatasetMeta,
}

impl PreferenceDataset {
    pub fn new(
        dimension: usize,
        records: Vec<ComparisonRecord>,
        metadata: DatasetMeta,
    ) -> Result<Self, DataError> {
        let mut users = BTreeSet::new();
        for (i, rec) in records.iter().enumerate() {
            for (field, emb) in [("x", &rec.x), ("y1", &rec.y1), ("y2", &rec.y2)] {
                if emb.len() != dimension {
                    return Err(DataError::DimensionMismatch {
                        record: i,
                        field,
                        expected: dimension,
                        got: emb.len(),
                    });
                }
                if !emb.is_finite() {
                    return Err(DataError::NonFiniteValue { record: i, field });
                }
            }
            if rec.label > 1 {
                return Err(DataError::BadLabel {
                    record: i,
                    got: rec.label,
                });
            }
            users.insert(rec.user_id.clone());
        }
        Ok(PreferenceDataset {
            dimension,
            records,
            users,
            metadata,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn users(&self) -> &BTreeSet<UserId> {
        &self.users
    }

    /// Records of one user, in dataset order.
    pub fn records_of(&self, user: &UserId) -> Vec<&ComparisonRecord> {
        self.records
            .iter()
            .filter(|r| &r.user_id == user)
            .collect()
    }

    /// New dataset from a subset of record indices (order given by `indices`).
    pub fn subset(&self, indices: &[usize]) -> PreferenceDataset {
        let records: Vec<ComparisonRecord> =
            indices.iter().map(|&i| self.records[i].clone()).collect();
        PreferenceDataset::new(self.dimension, records, self.metadata.clone())
            .expect("subset of a valid dataset is valid")
    }
}

/// Maps each triple to its annotations `(user, label)` in record order.
/// Every record shows up exactly once.
pub fn group_by_triple(dataset: &PreferenceDataset) -> BTreeMap<TripleId, Vec<(UserId, u8)>> {
    let mut groups: BTreeMap<TripleId, Vec<(UserId, u8)>> = BTreeMap::new();
    for rec in dataset.records() {
        groups
            .entry(rec.triple_id.clone())
            .or_default()
            .push((rec.user_id.clone(), rec.label));
    }
    groups
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// Disjoint triples; users appear on both sides (seen-user protocols).
    ByTriple,
    /// Disjoint users (new-user protocols).
    ByUser,
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: PreferenceDataset,
    pub validation: PreferenceDataset,
    pub test: PreferenceDataset,
    pub mode: SplitMode,
}

/// Partitions group keys into three buckets with boundaries at the rounded
/// cumulative fractions.
fn bucket_bounds(n: usize, fractions: (f64, f64, f64)) -> (usize, usize) {
    let c1 = fractions.0;
    let c2 = fractions.0 + fractions.1;
    let b1 = libm::round(c1 * n as f64) as usize;
    let b2 = libm::round(c2 * n as f64) as usize;
    (b1.min(n), b2.min(n).max(b1.min(n)))
}

/// Splits by triple or by user. Same seed, same partition; the three parts
/// partition the input records exactly.
pub fn split_dataset(
    dataset: &PreferenceDataset,
    mode: SplitMode,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    let (a, b, c) = fractions;
    let sum = a + b + c;
    if a < 0.0 || b < 0.0 || c < 0.0 || num::abs(sum - 1.0) > 1e-9 {
        return Err(DataError::BadFractions { sum });
    }

    // group keys in first-appearance order, then seeded shuffle
    let mut keys: Vec<String> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for rec in dataset.records() {
        let key = match mode {
            SplitMode::ByTriple => rec.triple_id.0.clone(),
            SplitMode::ByUser => rec.user_id.0.clone(),
        };
        if seen.insert(key.clone()) {
            keys.push(key);
        }
    }

    if mode == SplitMode::ByUser {
        let nonempty = [a, b, c].iter().filter(|&&f| f > 0.0).count();
        if keys.len() < nonempty {
            return Err(DataError::TooFewGroups {
                available: keys.len(),
                requested: nonempty,
            });
        }
    }

    const SPLIT_TAG: u64 = 0x51;
    let mut rng = Rng::derived(seed, &[SPLIT_TAG]);
    rng.shuffle(&mut keys);
    let (b1, b2) = bucket_bounds(keys.len(), fractions);
    let mut bucket_of: BTreeMap<&str, u8> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        let bucket = if i < b1 {
            0
        } else if i < b2 {
            1
        } else {
            2
        };
        bucket_of.insert(key, bucket);
    }

    let mut parts: [Vec<ComparisonRecord>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for rec in dataset.records() {
        let key = match mode {
            SplitMode::ByTriple => rec.triple_id.as_str(),
            SplitMode::ByUser => rec.user_id.as_str(),
        };
        parts[bucket_of[key] as usize].push(rec.clone());
    }
    let [train, validation, test] = parts;
    let meta = dataset.metadata.clone();
    Ok(DatasetSplit {
        train: PreferenceDataset::new(dataset.dimension(), train, meta.clone())?,
        validation: PreferenceDataset::new(dataset.dimension(), validation, meta.clone())?,
        test: PreferenceDataset::new(dataset.dimension(), test, meta)?,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn emb(vals: &[f64]) -> Embedding {
        Embedding::new(vals.to_vec())
    }

    pub(crate) fn toy_record(user: &str, x: &[f64], y1: &[f64], y2: &[f64], label: u8) -> ComparisonRecord {
        let (x, y1, y2) = (emb(x), emb(y1), emb(y2));
        ComparisonRecord {
            triple_id: triple_id(&x, &y1, &y2),
            user_id: user.into(),
            x,
            y1,
            y2,
            label,
        }
    }

    fn toy_dataset(n_users: usize, n_triples: usize, seed: u64) -> PreferenceDataset {
        let mut rng = Rng::new(seed);
        let mut records = Vec::new();
        for t in 0..n_triples {
            let x: Vec<f64> = rng.normal_vec(3);
            let y1: Vec<f64> = rng.normal_vec(3);
            let y2: Vec<f64> = rng.normal_vec(3);
            for u in 0..n_users {
                let mut rec = toy_record(&format!("u{u}"), &x, &y1, &y2, (rng.coin()) as u8);
                rec.triple_id = TripleId(format!("t{t}"));
                records.push(rec);
            }
        }
        PreferenceDataset::new(3, records, DatasetMeta::default()).unwrap()
    }

    #[test]
    fn constructor_validates_dimension_and_label() {
        let bad = vec![toy_record("u0", &[1.0, 2.0], &[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0], 0)];
        let err = PreferenceDataset::new(3, bad, DatasetMeta::default()).unwrap_err();
        assert!(matches!(err, DataError::DimensionMismatch { field: "x", got: 2, .. }));

        let bad = vec![toy_record("u0", &[1.0, 2.0, 3.0], &[0.0; 3], &[1.0; 3], 2)];
        assert!(matches!(
            PreferenceDataset::new(3, bad, DatasetMeta::default()),
            Err(DataError::BadLabel { got: 2, .. })
        ));
    }

    #[test]
    fn triple_id_ignores_label_and_user_but_not_content() {
        let a = toy_record("u0", &[0.5, 0.25], &[1.0, 0.0], &[0.0, 1.0], 1);
        let b = toy_record("u9", &[0.5, 0.25], &[1.0, 0.0], &[0.0, 1.0], 0);
        let c = toy_record("u0", &[0.5, 0.25], &[0.0, 1.0], &[1.0, 0.0], 1);
        assert_eq!(a.triple_id, b.triple_id);
        assert_ne!(a.triple_id, c.triple_id);
    }

    #[test]
    fn group_by_triple_covers_every_record() {
        let ds = toy_dataset(3, 4, 9);
        let groups = group_by_triple(&ds);
        assert_eq!(groups.len(), 4);
        assert_eq!(groups.values().map(|g| g.len()).sum::<usize>(), ds.len());
        assert!(groups.values().all(|g| g.len() == 3));
    }

    #[test]
    fn split_all_train() {
        let ds = toy_dataset(2, 5, 1);
        let split = split_dataset(&ds, SplitMode::ByTriple, (1.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(split.train.len(), ds.len());
        assert!(split.validation.is_empty() && split.test.is_empty());
    }

    #[test]
    fn by_user_split_disjoint_and_counted() {
        let ds = toy_dataset(8, 6, 2);
        let split = split_dataset(&ds, SplitMode::ByUser, (0.75, 0.0, 0.25), 5).unwrap();
        assert_eq!(split.train.users().len(), 6);
        assert_eq!(split.test.users().len(), 2);
        assert!(split.train.users().is_disjoint(split.test.users()));
        assert_eq!(split.train.len() + split.test.len(), ds.len());
    }

    #[test]
    fn split_determinism_and_seed_sensitivity() {
        let ds = toy_dataset(6, 30, 4);
        let s1 = split_dataset(&ds, SplitMode::ByTriple, (0.6, 0.2, 0.2), 1).unwrap();
        let s1b = split_dataset(&ds, SplitMode::ByTriple, (0.6, 0.2, 0.2), 1).unwrap();
        let s2 = split_dataset(&ds, SplitMode::ByTriple, (0.6, 0.2, 0.2), 2).unwrap();
        assert_eq!(s1.train.records(), s1b.train.records());
        assert_ne!(s1.train.records(), s2.train.records());
    }

    #[test]
    fn by_user_split_rejects_too_few_users() {
        let ds = toy_dataset(2, 3, 8);
        let err = split_dataset(&ds, SplitMode::ByUser, (0.4, 0.3, 0.3), 1).unwrap_err();
        assert!(matches!(err, DataError::TooFewGroups { available: 2, requested: 3 }));
    }
}
