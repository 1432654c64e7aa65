//! Brute-force oracles for the characterization metrics. The oracles below
//! re-derive every metric by quadratic scans over raw records, independent
//! of the grouping machinery in the library, and must agree exactly.

use std::collections::{BTreeMap, BTreeSet};

use prefbench_core::characterize::{
    consistency_estimate, divergence_rate, high_divergence_rate, minority_users, mv_accuracy,
};
use prefbench_core::data::{
    group_by_triple, triple_id, ComparisonRecord, DatasetMeta, Embedding, PreferenceDataset,
    TripleId, UserId,
};
use prefbench_core::rng::Rng;

/// Random small dataset: up to `max_users` users and `max_triples` triples,
/// random annotation pattern, random duplicates.
fn random_dataset(seed: u64, max_users: usize, max_triples: usize) -> PreferenceDataset {
    let mut rng = Rng::new(seed);
    let n_users = 1 + rng.below(max_users);
    let n_triples = 1 + rng.below(max_triples);
    let mut records = Vec::new();
    for t in 0..n_triples {
        let x = Embedding::new(rng.normal_vec(3));
        let y1 = Embedding::new(rng.normal_vec(3));
        let y2 = Embedding::new(rng.normal_vec(3));
        let id = triple_id(&x, &y1, &y2);
        for u in 0..n_users {
            if rng.next_f64() < 0.35 {
                continue; // this user skips the triple
            }
            let copies = if rng.next_f64() < 0.3 { 2 } else { 1 };
            for _ in 0..copies {
                records.push(ComparisonRecord {
                    triple_id: id.clone(),
                    user_id: UserId(format!("u{u}")),
                    x: x.clone(),
                    y1: y1.clone(),
                    y2: y2.clone(),
                    label: rng.coin() as u8,
                });
            }
        }
        let _ = t;
    }
    if records.is_empty() {
        let x = Embedding::new(vec![0.0; 3]);
        records.push(ComparisonRecord {
            triple_id: triple_id(&x, &x, &x),
            user_id: UserId("u0".into()),
            x: x.clone(),
            y1: x.clone(),
            y2: x,
            label: 1,
        });
    }
    PreferenceDataset::new(3, records, DatasetMeta::default()).unwrap()
}

/// Annotations per triple by a raw linear scan.
fn scan_triples(ds: &PreferenceDataset) -> BTreeMap<TripleId, Vec<(UserId, u8)>> {
    let mut out: BTreeMap<TripleId, Vec<(UserId, u8)>> = BTreeMap::new();
    for rec in ds.records() {
        out.entry(rec.triple_id.clone())
            .or_default()
            .push((rec.user_id.clone(), rec.label));
    }
    out
}

fn distinct_users(anns: &[(UserId, u8)]) -> usize {
    anns.iter().map(|(u, _)| u).collect::<BTreeSet<_>>().len()
}

fn oracle_divergence(ds: &PreferenceDataset) -> Option<f64> {
    let mut multi = 0usize;
    let mut divergent = 0usize;
    for anns in scan_triples(ds).values() {
        if distinct_users(anns) < 2 {
            continue;
        }
        multi += 1;
        let ones = anns.iter().filter(|(_, l)| *l == 1).count();
        if ones != 0 && ones != anns.len() {
            divergent += 1;
        }
    }
    (multi > 0).then(|| divergent as f64 / multi as f64)
}

fn oracle_high_divergence(ds: &PreferenceDataset, threshold: f64) -> Option<f64> {
    let mut multi = 0usize;
    let mut high = 0usize;
    for anns in scan_triples(ds).values() {
        if distinct_users(anns) < 2 {
            continue;
        }
        multi += 1;
        let ones = anns.iter().filter(|(_, l)| *l == 1).count();
        let minority = ones.min(anns.len() - ones);
        if minority > 0 && (minority as f64 / anns.len() as f64) >= threshold {
            high += 1;
        }
    }
    (multi > 0).then(|| high as f64 / multi as f64)
}

fn oracle_mv_acc(ds: &PreferenceDataset) -> BTreeMap<UserId, Option<f64>> {
    let mut sums: BTreeMap<UserId, (f64, usize)> = BTreeMap::new();
    for anns in scan_triples(ds).values() {
        if distinct_users(anns) < 2 {
            continue;
        }
        let ones = anns.iter().filter(|(_, l)| *l == 1).count();
        let zeros = anns.len() - ones;
        for (user, label) in anns {
            let credit = if ones == zeros {
                0.5
            } else {
                let majority = (ones > zeros) as u8;
                (majority == *label) as u8 as f64
            };
            let e = sums.entry(user.clone()).or_insert((0.0, 0));
            e.0 += credit;
            e.1 += 1;
        }
    }
    ds.users()
        .iter()
        .map(|u| (u.clone(), sums.get(u).map(|(c, n)| c / *n as f64)))
        .collect()
}

fn oracle_consistency(ds: &PreferenceDataset) -> BTreeMap<UserId, Option<f64>> {
    let mut out = BTreeMap::new();
    for user in ds.users() {
        let mine: Vec<&ComparisonRecord> =
            ds.records().iter().filter(|r| &r.user_id == user).collect();
        let mut pairs = 0usize;
        let mut agree = 0usize;
        for i in 0..mine.len() {
            for j in i + 1..mine.len() {
                if mine[i].triple_id == mine[j].triple_id {
                    pairs += 1;
                    agree += (mine[i].label == mine[j].label) as usize;
                }
            }
        }
        out.insert(
            user.clone(),
            (pairs > 0).then(|| agree as f64 / pairs as f64),
        );
    }
    out
}

#[test]
fn metrics_match_brute_force_on_200_random_datasets() {
    for seed in 0..200u64 {
        let ds = random_dataset(seed, 10, 50);
        assert_eq!(divergence_rate(&ds), oracle_divergence(&ds), "seed {seed}");
        for threshold in [0.0, 0.2, 0.3, 0.5] {
            assert_eq!(
                high_divergence_rate(&ds, threshold),
                oracle_high_divergence(&ds, threshold),
                "seed {seed} threshold {threshold}"
            );
        }
        assert_eq!(mv_accuracy(&ds), oracle_mv_acc(&ds), "seed {seed}");
        assert_eq!(consistency_estimate(&ds), oracle_consistency(&ds), "seed {seed}");
    }
}

#[test]
fn grouping_matches_quadratic_scan() {
    for seed in 200..240u64 {
        let ds = random_dataset(seed, 8, 30);
        let groups = group_by_triple(&ds);
        assert_eq!(groups, scan_triples(&ds), "seed {seed}");
        let total: usize = groups.values().map(|g| g.len()).sum();
        assert_eq!(total, ds.len());
    }
}

#[test]
fn high_divergence_is_monotone_in_threshold_and_bounded_by_divergence() {
    for seed in 300..360u64 {
        let ds = random_dataset(seed, 9, 40);
        let div = divergence_rate(&ds);
        let thresholds = [0.0, 0.1, 0.25, 0.3, 0.4, 0.5, 0.51];
        let rates: Vec<Option<f64>> = thresholds
            .iter()
            .map(|&t| high_divergence_rate(&ds, t))
            .collect();
        for pair in rates.windows(2) {
            match (pair[0], pair[1]) {
                (Some(a), Some(b)) => assert!(a >= b, "seed {seed}: not monotone"),
                (None, None) => {}
                _ => panic!("seed {seed}: availability changed with threshold"),
            }
        }
        if let (Some(d), Some(h0)) = (div, rates[0]) {
            // at threshold 0+ every dissent counts
            assert_eq!(d, h0, "seed {seed}");
        }
        if let Some(hmax) = rates[rates.len() - 1] {
            // a strict-majority dissent share never exceeds 0.5
            assert_eq!(hmax, 0.0, "seed {seed}");
        }
        if let (Some(d), Some(h)) = (div, rates[3]) {
            assert!(h <= d, "seed {seed}");
        }
    }
}

#[test]
fn minority_users_equal_below_cutoff_set() {
    for seed in 400..440u64 {
        let ds = random_dataset(seed, 10, 30);
        let mv = mv_accuracy(&ds);
        let minority = minority_users(&mv, 0.5);
        let expected: BTreeSet<UserId> = mv
            .iter()
            .filter_map(|(u, a)| match a {
                Some(a) if *a < 0.5 => Some(u.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(minority, expected, "seed {seed}");
    }
}

#[test]
fn profile_is_invariant_to_record_permutation() {
    use prefbench_core::characterize::DatasetProfile;
    for seed in 500..520u64 {
        let ds = random_dataset(seed, 7, 25);
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        Rng::new(seed ^ 0xFF).shuffle(&mut idx);
        let shuffled = ds.subset(&idx);
        assert_eq!(
            DatasetProfile::compute(&ds),
            DatasetProfile::compute(&shuffled),
            "seed {seed}"
        );
    }
}
