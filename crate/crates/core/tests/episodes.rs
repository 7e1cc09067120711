mod common;

use std::collections::{HashMap, HashSet};


use naq::episodes::{
    encode_episodes, generate_naq_episodes, generate_supervised_episodes, overlap_ratio, read_episodes, write_episodes,
    Episode, NaqConfig,
};
use naq::graph::{generate_sbm, SbmSpec};
use naq::similarity::{build_index, Metric, SimilarityIndex};
use proptest::prelude::*;

fn check_naq(ep: &Episode, index: &SimilarityIndex, q: usize, dropped: bool) {
    if let Some(v) = common::invariants::naq_violation(ep, index, q, dropped) {
        panic!("{v}: {ep:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn naq_invariants_on_random_graphs(
        n in 6usize..60,
        d in 2usize..8,
        n_way in 2usize..6,
        q in 1usize..6,
        seed in any::<u64>(),
        drop in any::<bool>(),
    ) {
        prop_assume!(n_way <= n);
        let g = common::random_graph(n, 0.1, d, seed);
        let index = build_index(&g, Metric::Cosine, q + 2, 8).unwrap();
        let cfg = NaqConfig { n_way, q, episodes: 40, drop_overlap: drop };
        let eps = generate_naq_episodes(&index, &cfg, seed).unwrap();
        prop_assert_eq!(eps.len(), 40);
        for ep in &eps {
            check_naq(ep, &index, q, drop);
        }
        prop_assert_eq!(&eps, &generate_naq_episodes(&index, &cfg, seed).unwrap());
    }

    #[test]
    fn dropping_overlap_removes_exactly_the_shared_nodes(seed in any::<u64>()) {
        let g = common::random_graph(30, 0.1, 3, seed);
        let index = build_index(&g, Metric::NegEuclidean, 8, 5).unwrap();
        let cfg = NaqConfig { n_way: 6, q: 8, episodes: 20, drop_overlap: false };
        let kept = generate_naq_episodes(&index, &cfg, seed).unwrap();
        let dropped = generate_naq_episodes(&index, &NaqConfig { drop_overlap: true, ..cfg }, seed).unwrap();
        for (a, b) in kept.iter().zip(&dropped) {
            prop_assert_eq!(&a.support, &b.support);
            prop_assert_eq!(a.query.len() - b.query.len(), a.overlapping_slots());
            prop_assert_eq!(b.overlapping_slots(), 0);
        }
        prop_assert_eq!(overlap_ratio(&dropped), 0.0);
    }
}

#[test]
fn supervised_episodes_are_label_homogeneous() {
    let spec = SbmSpec { n_classes: 10, nodes_per_class: 12, p_in: 0.2, p_out: 0.01, d: 4, feature_signal: 1.0, noise_sigma: 1.0, seed: 5 };
    let (_, ls) = generate_sbm(&spec).unwrap();
    let base = ls.split().base.clone();
    let eps = generate_supervised_episodes(&ls, 3, 2, 4, 50, 9).unwrap();
    for ep in &eps {
        ep.validate().unwrap();
        let mut class_of_label = HashMap::new();
        for &(node, pl) in ep.support.iter().chain(&ep.query) {
            let c = ls.label(node);
            assert!(base.contains(&c));
            assert_eq!(*class_of_label.entry(pl).or_insert(c), c);
        }
        let s: HashSet<_> = ep.support.iter().map(|e| e.0).collect();
        assert!(ep.query.iter().all(|e| !s.contains(&e.0)));
        assert_eq!(ep.query.len(), 3 * 4);
    }
}

#[test]
fn supervised_uses_every_base_class_when_n_equals_base() {
    let spec = SbmSpec { n_classes: 10, nodes_per_class: 12, p_in: 0.2, p_out: 0.01, d: 4, feature_signal: 1.0, noise_sigma: 1.0, seed: 5 };
    let (_, ls) = generate_sbm(&spec).unwrap();
    let base = ls.split().base.clone();
    let eps = generate_supervised_episodes(&ls, base.len(), 1, 1, 5, 2).unwrap();
    for ep in &eps {
        let mut classes: Vec<usize> = ep.support.iter().map(|s| ls.label(s.0)).collect();
        classes.sort_unstable();
        assert_eq!(classes, base);
    }
}

#[test]
fn cache_round_trip_is_byte_stable() {
    let g = common::random_graph(40, 0.1, 4, 1);
    let index = build_index(&g, Metric::Cosine, 5, 7).unwrap();
    let cfg = NaqConfig { n_way: 4, q: 5, episodes: 30, drop_overlap: false };
    let eps = generate_naq_episodes(&index, &cfg, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eps.jsonl");
    write_episodes(&path, &eps).unwrap();
    let back = read_episodes(&path).unwrap();
    assert_eq!(back, eps);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), encode_episodes(&back).unwrap());
    let first: serde_json::Value = serde_json::from_str(std::fs::read_to_string(&path).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["mode"], "naq");
    assert!(first["aug"].is_null());
    assert_eq!(first["support"][0].as_array().unwrap().len(), 2);
}
