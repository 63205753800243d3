mod common;

use std::collections::BTreeSet;

use dgner::combinatorics::{
    average_valid_spans, closed_form_f, edges_curve, enumerate_trees, f_n_count, prufer_decode, prufer_encode,
    prufer_sequences, span_to_tree, tree_to_span, verify_identities, LabeledTree, SpanCensus,
};
use num_traits::ToPrimitive;

use common::*;

/// All spanning trees of the complete graph on `n` nodes by edge subsets.
fn trees_by_subsets(n: usize) -> BTreeSet<Vec<(usize, usize)>> {
    let all: Vec<(usize, usize)> = (1..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b))).collect();
    let mut out = BTreeSet::new();
    for mask in 0u32..(1 << all.len()) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let edges: Vec<(usize, usize)> = (0..all.len()).filter(|i| mask >> i & 1 == 1).map(|i| all[i]).collect();
        if let Ok(t) = LabeledTree::new(n, edges) {
            out.insert(t.edges().to_vec());
        }
    }
    out
}

fn heads_of(tree: &LabeledTree) -> Vec<usize> {
    dgner::corpus::DependencyTree::from_undirected(tree.n(), tree.edges(), 1, "dep").unwrap().heads().to_vec()
}

#[test]
fn prufer_enumeration_matches_subset_enumeration() {
    for n in 2..=6 {
        let prufer: BTreeSet<Vec<(usize, usize)>> = enumerate_trees(n).unwrap().map(|t| t.edges().to_vec()).collect();
        assert_eq!(prufer, trees_by_subsets(n), "n = {n}");
    }
}

#[test]
fn prufer_round_trip_to_seven() {
    for n in 2..=7 {
        for seq in prufer_sequences(n) {
            assert_eq!(prufer_encode(&prufer_decode(&seq, n).unwrap()), seq);
        }
    }
}

#[test]
fn census_matches_chain_oracle() {
    for n in 2..=6 {
        let census = SpanCensus::compute(n).unwrap();
        let mut counts = vec![vec![0u64; n + 1]; n + 1];
        for tree in enumerate_trees(n).unwrap() {
            for (u, v) in oracle_dgm_spans(&heads_of(&tree), n) {
                if u < v {
                    counts[u][v] += 1;
                }
            }
        }
        assert_eq!(census.pair_counts, counts);
    }
}

#[test]
fn identities_hold_to_seven() {
    let report = verify_identities(7).unwrap();
    assert!(report.all_pass(), "{}", report.table());
    assert!(report.discrepancies.is_empty());
}

#[test]
fn known_small_values() {
    // n = 3: three trees, 16 spans in total, 7 of them multi-word
    assert_eq!(closed_form_f(3, 3).unwrap().to_integer(), 7.into());
    assert_eq!(closed_form_f(4, 4).unwrap().to_integer(), (125 - 64).into());
    assert_eq!(f_n_count(3, 1, 3).unwrap(), 3);
    assert_eq!(f_n_count(4, 1, 4).unwrap(), 15);
    assert_eq!(average_valid_spans(4).unwrap().to_f64().unwrap(), 125.0 / 16.0);
}

#[test]
fn bijection_is_onto_trees_with_one_more_node() {
    for n in 2..=5 {
        let mut images = BTreeSet::new();
        let mut count = 0;
        for tree in enumerate_trees(n).unwrap() {
            let spans: Vec<(usize, usize)> = (1..=n).map(|i| (i, i)).chain(tree.valid_multiword_spans()).collect();
            for (u, v) in spans {
                let big = span_to_tree(&tree, u, v).unwrap();
                assert_eq!(tree_to_span(&big).unwrap(), (tree.clone(), u, v));
                images.insert(big.edges().to_vec());
                count += 1;
            }
        }
        assert_eq!(images.len(), count);
        assert_eq!(images, trees_by_subsets(n + 1));
    }
}

#[test]
fn curve_stays_below_e_n() {
    let curve = edges_curve(30, 6).unwrap();
    for p in &curve {
        assert!(p.average_closed_form < p.e_times_n);
        if let Some(b) = p.average_brute_force {
            assert!((b - p.average_closed_form).abs() < 1e-9);
        }
    }
    assert!(curve[27].average_closed_form / curve[27].e_times_n > 0.95);
}
