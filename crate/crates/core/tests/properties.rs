mod common;

use std::collections::{BTreeMap, HashSet};

use common::{random_instance, random_ratings};
use garec::attn::{aggregate, attention_coefs, attention_support, predict_edge};
use garec::checkpoint::{model_from_bytes, model_to_bytes, CheckpointMeta};
use garec::data::{build_matrix, split, RatingDataset, RatingRecord, SparseRatings, SplitSpec};
use garec::eval::rmse;
use garec::graph::{
    build_item_corating, build_user_corating, merge_neighborhoods, target_item_neighbors, target_user_neighbors,
    user_neighborhood, item_neighborhood, CoRatingGraph, NeighborList,
};
use garec::linalg::Matrix;
use garec::nmf::{factorize, factorize_from, factorize_traced, random_init, FactorPair, NmfConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cases() -> ProptestConfig {
    ProptestConfig::with_cases(256)
}

fn ratings_from_seed(seed: u64, max_n: usize, max_m: usize) -> (usize, usize, Vec<(usize, usize, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=max_m);
    let density = rng.gen_range(0.1..0.9);
    let t = random_ratings(n, m, density, &mut rng);
    (n, m, t)
}

fn as_map(list: &NeighborList) -> BTreeMap<usize, f64> {
    list.entries().iter().copied().collect()
}

fn dataset_from_seed(seed: u64, max_n: usize, max_m: usize) -> RatingDataset {
    let (n, m, t) = ratings_from_seed(seed, max_n, max_m);
    let records = t.iter().map(|&(u, i, r)| RatingRecord::new(u, i, r as u8)).collect();
    RatingDataset::from_records(records, n, m).unwrap()
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn coefficients_normalize(rels in prop::collection::vec(-10.0f64..10.0, 0..16)) {
        let coefs = attention_coefs(&rels);
        if rels.iter().any(|&r| r > 0.0) {
            prop_assert!(!coefs.is_empty());
            let total: f64 = coefs.iter().map(|c| c.1).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            for &(_, c) in &coefs {
                prop_assert!(c > 0.0 && c <= 1.0);
            }
        } else {
            prop_assert!(coefs.is_empty());
        }
    }

    #[test]
    fn pruned_neighbors_contribute_nothing(
        rels in prop::collection::vec(-10.0f64..10.0, 1..12),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keys: Vec<Vec<f64>> = rels.iter().map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = keys.iter().map(|k| k.as_slice()).collect();
        let coefs = attention_coefs(&rels);
        for &(k, _) in &coefs {
            prop_assert!(rels[k] > 0.0);
        }
        // replacing the key of a pruned neighbor leaves the aggregate untouched
        let base = aggregate(&coefs, &refs, 3);
        let mut poisoned = keys.clone();
        for (k, key) in poisoned.iter_mut().enumerate() {
            if rels[k] <= 0.0 {
                key.iter_mut().for_each(|x| *x = 1e6);
            }
        }
        let prefs: Vec<&[f64]> = poisoned.iter().map(|k| k.as_slice()).collect();
        prop_assert_eq!(aggregate(&coefs, &prefs, 3), base);
    }

    #[test]
    fn neighbor_order_does_not_change_aggregate(
        rels in prop::collection::vec(-10.0f64..10.0, 1..12),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keys: Vec<Vec<f64>> = rels.iter().map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = keys.iter().map(|k| k.as_slice()).collect();
        let base = aggregate(&attention_coefs(&rels), &refs, 4);

        let mut order: Vec<usize> = (0..rels.len()).collect();
        order.shuffle(&mut rng);
        let prels: Vec<f64> = order.iter().map(|&k| rels[k]).collect();
        let pkeys: Vec<&[f64]> = order.iter().map(|&k| keys[k].as_slice()).collect();
        let permuted = aggregate(&attention_coefs(&prels), &pkeys, 4);
        for (a, b) in base.iter().zip(&permuted) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn positive_scaling_keeps_support(
        ints in prop::collection::vec(-10i32..=10, 0..16),
        lambda in 0.01f64..100.0,
    ) {
        let rels: Vec<f64> = ints.iter().map(|&x| f64::from(x)).collect();
        let scaled: Vec<f64> = rels.iter().map(|&x| x * lambda).collect();
        prop_assert_eq!(attention_support(&rels), attention_support(&scaled));
    }

    #[test]
    fn corating_matches_triple_loop(seed in any::<u64>()) {
        let (n, m, t) = ratings_from_seed(seed, 8, 8);
        let r = SparseRatings::from_triples(n, m, &t).unwrap();
        let dense = common::naive::dense(n, m, &t);
        let brute = common::naive::corating(&dense);
        let lists = build_user_corating(&r, n * m + 1);
        for u in 0..n {
            let got = as_map(&lists[u]);
            let want: BTreeMap<usize, f64> = (0..n).filter(|&y| brute[u][y] > 0.0).map(|y| (y, brute[u][y])).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn corating_is_symmetric_and_loop_free(seed in any::<u64>()) {
        let (n, m, t) = ratings_from_seed(seed, 12, 12);
        let r = SparseRatings::from_triples(n, m, &t).unwrap();
        for lists in [build_user_corating(&r, n + m), build_item_corating(&r, n + m)] {
            for (a, list) in lists.iter().enumerate() {
                prop_assert!(list.weight_of(a).is_none());
                for &(b, w) in list.entries() {
                    prop_assert!(w > 0.0);
                    prop_assert_eq!(lists[b].weight_of(a), Some(w));
                }
            }
        }
    }

    #[test]
    fn item_build_is_user_build_on_transpose(seed in any::<u64>(), cap in 1usize..10) {
        let (n, m, t) = ratings_from_seed(seed, 10, 10);
        let r = SparseRatings::from_triples(n, m, &t).unwrap();
        prop_assert_eq!(build_item_corating(&r, cap), build_user_corating(&r.transpose(), cap));
    }

    #[test]
    fn neighbor_lists_are_sorted_capped_and_self_free(seed in any::<u64>(), cap in 1usize..8) {
        let (n, m, t) = ratings_from_seed(seed, 9, 9);
        let r = SparseRatings::from_triples(n, m, &t).unwrap();
        let graph = CoRatingGraph::build(&r, cap);
        for u in 0..n {
            for i in 0..m {
                let tu = target_user_neighbors(&r, u, i, cap);
                let ti = target_item_neighbors(&r, u, i, cap);
                prop_assert!(tu.weight_of(u).is_none());
                prop_assert!(ti.weight_of(i).is_none());
                let nu = user_neighborhood(&r, &graph, u, i);
                let ni = item_neighborhood(&r, &graph, u, i);
                prop_assert!(nu.weight_of(u).is_none());
                prop_assert!(ni.weight_of(i).is_none());
                for list in [&tu, &ti, &nu, &ni] {
                    prop_assert!(list.len() <= cap);
                    let e = list.entries();
                    let ids: HashSet<usize> = list.ids().collect();
                    prop_assert_eq!(ids.len(), e.len());
                    for w in e.windows(2) {
                        prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
                    }
                }
                for &(_, w) in nu.entries().iter().chain(ni.entries()) {
                    prop_assert!(w > 0.0 && w <= 2.0);
                }
            }
        }
    }

    #[test]
    fn merge_sums_normalized_weights(
        a in prop::collection::btree_map(0usize..10, 0.1f64..50.0, 0..6),
        b in prop::collection::btree_map(0usize..10, 0.1f64..5.0, 0..6),
    ) {
        let la = NeighborList::from_entries(a.clone().into_iter().collect(), 20);
        let lb = NeighborList::from_entries(b.clone().into_iter().collect(), 20);
        let merged = as_map(&merge_neighborhoods(&la, &lb, 20));
        let ma = a.values().copied().fold(0.0, f64::max);
        let mb = b.values().copied().fold(0.0, f64::max);
        let mut want: BTreeMap<usize, f64> = BTreeMap::new();
        for (&k, &w) in &a {
            *want.entry(k).or_default() += w / ma;
        }
        for (&k, &w) in &b {
            *want.entry(k).or_default() += w / mb;
        }
        prop_assert_eq!(merged.len(), want.len());
        for (k, w) in want {
            prop_assert!((merged[&k] - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn nmf_trace_descends_and_stays_non_negative(seed in any::<u64>(), iters in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..10);
        let m = rng.gen_range(2..10);
        let t = random_ratings(n, m, rng.gen_range(0.3..1.0), &mut rng);
        let r = SparseRatings::from_triples(n, m, &t).unwrap();
        let cfg = NmfConfig { d: rng.gen_range(1..=n.min(m) / 2), max_iters: iters, rel_tol: 0.0, seed, ..NmfConfig::default() };
        let run = factorize_traced(&r, &cfg).unwrap();
        for w in run.rmse.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
        prop_assert!(run.factors.is_non_negative());
    }

    #[test]
    fn nmf_ignores_entry_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (rng.gen_range(2..8), rng.gen_range(2..8));
        let mut t = random_ratings(n, m, 0.6, &mut rng);
        let cfg = NmfConfig { d: 1, max_iters: 20, seed, ..NmfConfig::default() };
        let a = factorize(&SparseRatings::from_triples(n, m, &t).unwrap(), &cfg).unwrap();
        t.shuffle(&mut rng);
        let b = factorize(&SparseRatings::from_triples(n, m, &t).unwrap(), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn predictions_stay_within_rating_bounds(seed in any::<u64>()) {
        let mut inst = random_instance(seed, 6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        common::jitter(&mut inst.state, 5.0, &mut rng);
        for u in 0..inst.ratings.n_users() {
            for i in 0..inst.ratings.n_items() {
                let p = predict_edge(u, i, &inst.state, &inst.graph, &inst.ratings);
                prop_assert!((1.0..=5.0).contains(&p));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), freeze in any::<bool>()) {
        let inst = random_instance(seed, 6, 4);
        let meta = CheckpointMeta { seed, freeze_factors: freeze, config_echo: format!("seed = {seed}\n") };
        let (back, meta_back) = model_from_bytes(&model_to_bytes(&inst.state, &meta)).unwrap();
        prop_assert_eq!(meta_back, meta);
        let want = inst.state.tensors(true);
        let got = back.tensors(true);
        prop_assert_eq!(want.len(), got.len());
        for ((na, a), (nb, b)) in want.iter().zip(&got) {
            prop_assert_eq!(na, nb);
            let ab: Vec<u64> = a.iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u64> = b.iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(ab, bb);
        }
        prop_assert_eq!(back.activation, inst.state.activation);
        prop_assert_eq!(back.rating_bounds, inst.state.rating_bounds);
    }

    #[test]
    fn splits_are_deterministic_partitions(
        seed in any::<u64>(),
        frac in 0.05f64..0.95,
        folds in 2usize..7,
    ) {
        let ds = dataset_from_seed(seed, 12, 12);
        let key = |r: &RatingRecord| (r.user, r.item);
        let all: HashSet<(usize, usize)> = ds.records.iter().map(key).collect();

        let spec = SplitSpec::holdout(frac, seed);
        let (train, test) = split(&ds, &spec).unwrap();
        let again = split(&ds, &spec).unwrap();
        prop_assert_eq!(&train.records, &again.0.records);
        prop_assert_eq!(&test.records, &again.1.records);
        prop_assert_eq!(test.len(), ((1.0 - frac) * ds.len() as f64).round() as usize);
        prop_assert_eq!(train.len() + test.len(), ds.len());
        let joined: HashSet<(usize, usize)> = train.records.iter().chain(&test.records).map(key).collect();
        prop_assert_eq!(&joined, &all);

        let mut seen = HashSet::new();
        for k in 0..folds {
            let (tr, te) = split(&ds, &SplitSpec::fold(k, folds, seed)).unwrap();
            prop_assert_eq!(tr.len() + te.len(), ds.len());
            for r in &te.records {
                prop_assert!(seen.insert(key(r)));
            }
        }
        prop_assert_eq!(seen, all);
    }

    #[test]
    fn matrix_round_trips_records(seed in any::<u64>()) {
        let ds = dataset_from_seed(seed, 15, 15);
        let r = build_matrix(&ds).unwrap();
        prop_assert_eq!(r.nnz(), ds.len());
        let mut want: Vec<(usize, usize, f64)> = ds.records.iter().map(|x| (x.user, x.item, f64::from(x.rating))).collect();
        want.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let by_user = r.triples();
        let mut by_item = r.triples_by_item();
        by_item.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        prop_assert_eq!(&by_user, &want);
        prop_assert_eq!(&by_item, &want);
        for u in 0..r.n_users() {
            prop_assert!(r.user_row(u).0.windows(2).all(|w| w[0] < w[1]));
        }
        for i in 0..r.n_items() {
            prop_assert!(r.item_row(i).0.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn rmse_ignores_pair_order(
        pairs in prop::collection::vec((0.0f64..6.0, 1u8..=5), 1..64),
        seed in any::<u64>(),
    ) {
        let mut p: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (a, f64::from(b))).collect();
        let base = rmse(&p).unwrap();
        p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((rmse(&p).unwrap() - base).abs() <= 1e-12);
    }
}

/// Permuting users and carrying the permutation into the starting point
/// permutes the fitted user factors and leaves item factors unchanged.
#[test]
fn nmf_is_equivariant_under_user_permutation() {
    let t: Vec<(usize, usize, f64)> = vec![
        (0, 0, 5.0), (0, 1, 3.0), (0, 3, 1.0),
        (1, 0, 4.0), (1, 2, 2.0),
        (2, 1, 1.0), (2, 2, 5.0), (2, 3, 4.0),
        (3, 0, 2.0), (3, 3, 3.0),
        (4, 1, 4.0), (4, 2, 4.0),
    ];
    let r = SparseRatings::from_triples(5, 4, &t).unwrap();
    let cfg = NmfConfig { d: 2, max_iters: 100, seed: 11, ..NmfConfig::default() };
    let init = random_init(&r, &cfg);
    let base = factorize_from(&r, init.clone(), &cfg).unwrap();

    let perm = [3usize, 0, 4, 1, 2]; // new row k holds old user perm[k]
    let mut inv = [0usize; 5];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    let pt: Vec<(usize, usize, f64)> = t.iter().map(|&(u, i, v)| (inv[u], i, v)).collect();
    let pr = SparseRatings::from_triples(5, 4, &pt).unwrap();
    let rows: Vec<Vec<f64>> = perm.iter().map(|&p| init.user.row(p).to_vec()).collect();
    let pinit = FactorPair::new(Matrix::from_rows(&rows).unwrap(), init.item.clone()).unwrap();
    let permuted = factorize_from(&pr, pinit, &cfg).unwrap();

    assert_eq!(base.rmse.len(), permuted.rmse.len());
    for (k, &p) in perm.iter().enumerate() {
        for (a, b) in permuted.factors.user.row(k).iter().zip(base.factors.user.row(p)) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
    for (a, b) in permuted.factors.item.as_slice().iter().zip(base.factors.item.as_slice()) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }
}
