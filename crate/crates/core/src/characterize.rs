//! Dataset characterization: divergence rates, MV-ACC, minority users,
//! intra-user consistency, and room for personalization.
//!
//! Conventions (these fix what the headline numbers mean):
//!
//! - A triple counts toward disagreement metrics only if at least two
//!   distinct users annotated it; disagreement is undefined otherwise.
//! - Tied majority votes grant 0.5 MV-ACC credit instead of dropping the
//!   triple, so MV-ACC stays defined for 2-annotator triples.
//! - Consistency is the duplicate-agreement rate: over all unordered pairs
//!   of a user's annotations that share a triple_id, the fraction with equal
//!   labels. Users without duplicate annotations report `None`.
//! - Room for personalization is the mean over users of
//!   (consistency - MV-ACC), clipped to [-1, 1], over users where both are
//!   defined.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::data::{group_by_triple, PreferenceDataset, TripleId, UserId};

pub const DEFAULT_HIGH_DIVERGENCE_THRESHOLD: f64 = 0.30;
pub const DEFAULT_MINORITY_CUTOFF: f64 = 0.5;

/// Characterization report; `None` marks metrics the dataset cannot support.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetProfile {
    pub divergence_rate: Option<f64>,
    pub high_divergence_rate: Option<f64>,
    pub mv_acc: BTreeMap<UserId, Option<f64>>,
    pub minority_users: BTreeSet<UserId>,
    pub consistency: BTreeMap<UserId, Option<f64>>,
    pub room: Option<f64>,
}

impl DatasetProfile {
    /// Full profile at the default thresholds.
    pub fn compute(dataset: &PreferenceDataset) -> DatasetProfile {
        let mv_acc = mv_accuracy(dataset);
        let minority = minority_users(&mv_acc, DEFAULT_MINORITY_CUTOFF);
        let consistency = consistency_estimate(dataset);
        let room = room_for_personalization(&mv_acc, &consistency);
        DatasetProfile {
            divergence_rate: divergence_rate(dataset),
            high_divergence_rate: high_divergence_rate(
                dataset,
                DEFAULT_HIGH_DIVERGENCE_THRESHOLD,
            ),
            mv_acc,
            minority_users: minority,
            consistency,
            room,
        }
    }
}

fn multi_annotator_groups(
    dataset: &PreferenceDataset,
) -> BTreeMap<TripleId, Vec<(UserId, u8)>> {
    group_by_triple(dataset)
        .into_iter()
        .filter(|(_, annotations)| {
            let users: BTreeSet<&UserId> = annotations.iter().map(|(u, _)| u).collect();
            users.len() >= 2
        })
        .collect()
}

/// Fraction of multi-annotator triples where not all labels agree.
/// `None` when the dataset has no multi-annotator triples.
pub fn divergence_rate(dataset: &PreferenceDataset) -> Option<f64> {
    let groups = multi_annotator_groups(dataset);
    if groups.is_empty() {
        return None;
    }
    let divergent = groups
        .values()
        .filter(|anns| anns.iter().any(|(_, l)| *l != anns[0].1))
        .count();
    Some(divergent as f64 / groups.len() as f64)
}

/// Fraction of multi-annotator triples where the minority-label share over
/// annotations is at least `threshold`.
pub fn high_divergence_rate(dataset: &PreferenceDataset, threshold: f64) -> Option<f64> {
    let groups = multi_annotator_groups(dataset);
    if groups.is_empty() {
        return None;
    }
    let high = groups
        .values()
        .filter(|anns| {
            let ones = anns.iter().filter(|(_, l)| *l == 1).count();
            let minority = ones.min(anns.len() - ones);
            minority > 0 && minority as f64 / anns.len() as f64 >= threshold
        })
        .count();
    Some(high as f64 / groups.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MajorityVote {
    Label(u8),
    Tie,
}

/// Label with strictly more votes; `None` on an empty list.
pub fn majority_label(annotations: &[(UserId, u8)]) -> Option<MajorityVote> {
    if annotations.is_empty() {
        return None;
    }
    let ones = annotations.iter().filter(|(_, l)| *l == 1).count();
    let zeros = annotations.len() - ones;
    Some(if ones > zeros {
        MajorityVote::Label(1)
    } else if zeros > ones {
        MajorityVote::Label(0)
    } else {
        MajorityVote::Tie
    })
}

/// Per-user agreement with the majority vote over multi-annotator triples.
/// Ties grant 0.5 credit; users absent from every multi-annotator triple get
/// `None`.
pub fn mv_accuracy(dataset: &PreferenceDataset) -> BTreeMap<UserId, Option<f64>> {
    let mut credit: BTreeMap<UserId, (f64, usize)> = BTreeMap::new();
    for annotations in multi_annotator_groups(dataset).values() {
        let vote = majority_label(annotations).expect("multi-annotator group is nonempty");
        for (user, label) in annotations {
            let entry = credit.entry(user.clone()).or_insert((0.0, 0));
            entry.0 += match vote {
                MajorityVote::Tie => 0.5,
                MajorityVote::Label(m) => (m == *label) as u8 as f64,
            };
            entry.1 += 1;
        }
    }
    dataset
        .users()
        .iter()
        .map(|u| {
            let value = credit.get(u).map(|(c, n)| c / *n as f64);
            (u.clone(), value)
        })
        .collect()
}

/// Users with MV-ACC strictly below `cutoff`.
pub fn minority_users(
    mv_acc: &BTreeMap<UserId, Option<f64>>,
    cutoff: f64,
) -> BTreeSet<UserId> {
    mv_acc
        .iter()
        .filter_map(|(u, acc)| match acc {
            Some(a) if *a < cutoff => Some(u.clone()),
            _ => None,
        })
        .collect()
}

/// Agreement rate across duplicate annotations of the same triple by the
/// same user; `None` for users without duplicates.
pub fn consistency_estimate(dataset: &PreferenceDataset) -> BTreeMap<UserId, Option<f64>> {
    let mut per_pair: BTreeMap<(TripleId, UserId), Vec<u8>> = BTreeMap::new();
    for rec in dataset.records() {
        per_pair
            .entry((rec.triple_id.clone(), rec.user_id.clone()))
            .or_default()
            .push(rec.label);
    }
    let mut agree: BTreeMap<UserId, (usize, usize)> = BTreeMap::new();
    for ((_, user), labels) in per_pair {
        if labels.len() < 2 {
            continue;
        }
        let entry = agree.entry(user).or_insert((0, 0));
        for i in 0..labels.len() {
            for j in i + 1..labels.len() {
                entry.0 += (labels[i] == labels[j]) as usize;
                entry.1 += 1;
            }
        }
    }
    dataset
        .users()
        .iter()
        .map(|u| {
            let value = agree.get(u).map(|(a, n)| *a as f64 / *n as f64);
            (u.clone(), value)
        })
        .collect()
}

/// Mean over users of (consistency - MV-ACC), clipped to [-1, 1], taken over
/// users where both metrics are defined. `None` if no user qualifies.
pub fn room_for_personalization(
    mv_acc: &BTreeMap<UserId, Option<f64>>,
    consistency: &BTreeMap<UserId, Option<f64>>,
) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (user, acc) in mv_acc {
        if let (Some(acc), Some(Some(cons))) = (acc, consistency.get(user)) {
            total += cons - acc;
            n += 1;
        }
    }
    if n == 0 {
        None
    } else {
        Some((total / n as f64).clamp(-1.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{triple_id, ComparisonRecord, DatasetMeta, Embedding};
    use alloc::string::String;
    use alloc::format;
    use alloc::vec;
    use alloc::vec::Vec;

    /// Builds a dataset from (triple index, user, label) annotations; triple
    /// content is synthesized per index.
    fn table(annotations: &[(usize, &str, u8)]) -> PreferenceDataset {
        let records: Vec<ComparisonRecord> = annotations
            .iter()
            .map(|&(t, user, label)| {
                let x = Embedding::new(vec![t as f64, 1.0]);
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
            })
            .collect();
        PreferenceDataset::new(2, records, DatasetMeta::default()).unwrap()
    }

    #[test]
    fn divergence_of_unanimous_dataset_is_zero() {
        let ds = table(&[(0, "a", 1), (0, "b", 1), (1, "a", 0), (1, "b", 0)]);
        assert_eq!(divergence_rate(&ds), Some(0.0));
    }

    #[test]
    fn divergence_counts_dissenting_triples() {
        // 4 triples, exactly 2 with any dissent
        let ds = table(&[
            (0, "a", 1),
            (0, "b", 1),
            (1, "a", 1),
            (1, "b", 0),
            (2, "a", 0),
            (2, "b", 0),
            (3, "a", 0),
            (3, "b", 1),
        ]);
        assert_eq!(divergence_rate(&ds), Some(0.5));
    }

    #[test]
    fn single_annotator_triples_are_unavailable() {
        let ds = table(&[(0, "a", 1), (1, "a", 0), (2, "b", 1)]);
        assert_eq!(divergence_rate(&ds), None);
        assert_eq!(high_divergence_rate(&ds, 0.3), None);
    }

    #[test]
    fn high_divergence_threshold_is_inclusive() {
        // 10 annotators: 2 dissenting (share 0.2) not counted, 3 (0.3) counted
        let mut rows: Vec<(usize, String, u8)> = Vec::new();
        for u in 0..10 {
            rows.push((0, format!("u{u}"), (u < 2) as u8));
            rows.push((1, format!("u{u}"), (u < 3) as u8));
        }
        let borrowed: Vec<(usize, &str, u8)> =
            rows.iter().map(|(t, u, l)| (*t, u.as_str(), *l)).collect();
        let ds = table(&borrowed);
        assert_eq!(high_divergence_rate(&ds, 0.3), Some(0.5));
        assert_eq!(divergence_rate(&ds), Some(1.0));
    }

    #[test]
    fn majority_label_votes() {
        let anns = |labels: &[u8]| -> Vec<(UserId, u8)> {
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| (UserId(format!("u{i}")), l))
                .collect()
        };
        assert_eq!(
            majority_label(&anns(&[1, 1, 0])),
            Some(MajorityVote::Label(1))
        );
        assert_eq!(majority_label(&anns(&[1, 0])), Some(MajorityVote::Tie));
        assert_eq!(
            majority_label(&anns(&[0, 1, 0, 0, 1, 0, 0])),
            Some(MajorityVote::Label(0))
        );
        assert_eq!(majority_label(&[]), None);
    }

    #[test]
    fn mv_accuracy_extremes() {
        // u0 agrees with two clones everywhere; u3 always opposes
        let ds = table(&[
            (0, "u0", 1),
            (0, "u1", 1),
            (0, "u2", 1),
            (0, "u3", 0),
            (1, "u0", 0),
            (1, "u1", 0),
            (1, "u2", 0),
            (1, "u3", 1),
        ]);
        let mv = mv_accuracy(&ds);
        assert_eq!(mv[&UserId::from("u0")], Some(1.0));
        assert_eq!(mv[&UserId::from("u3")], Some(0.0));
    }

    #[test]
    fn mv_accuracy_gives_half_credit_on_ties() {
        let ds = table(&[(0, "a", 1), (0, "b", 0)]);
        let mv = mv_accuracy(&ds);
        assert_eq!(mv[&UserId::from("a")], Some(0.5));
        assert_eq!(mv[&UserId::from("b")], Some(0.5));
    }

    #[test]
    fn minority_cutoff_is_strict() {
        let mut mv = BTreeMap::new();
        mv.insert(UserId::from("a"), Some(0.33));
        mv.insert(UserId::from("b"), Some(0.5));
        mv.insert(UserId::from("c"), Some(0.9));
        mv.insert(UserId::from("d"), None);
        let m = minority_users(&mv, 0.5);
        assert_eq!(m.len(), 1);
        assert!(m.contains(&UserId::from("a")));
    }

    #[test]
    fn consistency_from_duplicates() {
        // u0 re-annotates triple 0 identically, triple 1 inconsistently
        let mut ds_rows = vec![
            (0usize, "u0", 1u8),
            (0, "u0", 1),
            (1, "u0", 1),
            (1, "u0", 0),
            (2, "u1", 1),
        ];
        ds_rows.push((2, "u0", 0)); // no duplicate for u1
        let ds = table(&ds_rows);
        let cons = consistency_estimate(&ds);
        assert_eq!(cons[&UserId::from("u0")], Some(0.5));
        assert_eq!(cons[&UserId::from("u1")], None);
    }

    #[test]
    fn room_is_mean_gap_over_defined_users() {
        let mut mv = BTreeMap::new();
        let mut cons = BTreeMap::new();
        for (u, a, c) in [("a", 0.5, 1.0), ("b", 0.6, 1.0)] {
            mv.insert(UserId::from(u), Some(a));
            cons.insert(UserId::from(u), Some(c));
        }
        let room = room_for_personalization(&mv, &cons).unwrap();
        assert!((room - 0.45).abs() < 1e-12);

        let mut perfect = BTreeMap::new();
        perfect.insert(UserId::from("a"), Some(1.0));
        let mut c1 = BTreeMap::new();
        c1.insert(UserId::from("a"), Some(1.0));
        assert_eq!(room_for_personalization(&perfect, &c1), Some(0.0));

        let empty_cons: BTreeMap<UserId, Option<f64>> = BTreeMap::new();
        assert_eq!(room_for_personalization(&perfect, &empty_cons), None);
    }

    #[test]
    fn metrics_are_order_invariant() {
        let rows = [
            (0usize, "a", 1u8),
            (0, "b", 0),
            (1, "a", 1),
            (1, "b", 1),
            (2, "a", 0),
            (2, "b", 1),
            (2, "c", 1),
        ];
        let forward = table(&rows);
        let mut reversed_rows = rows;
        reversed_rows.reverse();
        let reversed = table(&reversed_rows);
        assert_eq!(
            DatasetProfile::compute(&forward),
            DatasetProfile::compute(&reversed)
        );
    }
}
