mod common;

use std::collections::BTreeSet;

use dgner::combinatorics::{enumerate_trees, random_tree};
use dgner::corpus::DependencyTree;
use dgner::lattice::{all_spans, build_tree_lattice, single_arc_spans, valid_spans, Mode, ModelKind, SpanLattice};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn span_set(lat: &SpanLattice) -> BTreeSet<(usize, usize)> {
    lat.spans().iter().map(|s| (s.start, s.end)).collect()
}

fn heads_strategy(max_n: usize) -> impl Strategy<Value = Vec<usize>> {
    (1..=max_n, any::<u64>()).prop_map(|(n, seed)| random_heads(n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #[test]
    fn production_spans_match_chain_oracle(heads in heads_strategy(14), l in 1usize..16) {
        let tree = tree_from_heads(&heads);
        prop_assert_eq!(span_set(&valid_spans(&tree, l)), oracle_dgm_spans(&heads, l));
        prop_assert_eq!(span_set(&single_arc_spans(&tree, l)), oracle_single_arc_spans(&heads, l));
        prop_assert_eq!(span_set(&all_spans(heads.len(), l)), oracle_semi_spans(heads.len(), l));
    }

    #[test]
    fn containment_and_l_monotonicity(heads in heads_strategy(30), l in 1usize..10) {
        let tree = tree_from_heads(&heads);
        for kind in ModelKind::ALL {
            let small = build_tree_lattice(&tree, Mode::new(kind, l));
            let big = build_tree_lattice(&tree, Mode::new(kind, l + 1));
            prop_assert!(small.is_subset_of(&big));
            for i in 1..=heads.len() {
                prop_assert!(small.contains(i, i));
            }
        }
        let dgms = build_tree_lattice(&tree, Mode::new(ModelKind::DgmS, l));
        let dgm = build_tree_lattice(&tree, Mode::new(ModelKind::Dgm, l));
        let semi = build_tree_lattice(&tree, Mode::new(ModelKind::Semi, l));
        prop_assert!(dgms.is_subset_of(&dgm));
        prop_assert!(dgm.is_subset_of(&semi));
    }

    #[test]
    fn arc_direction_is_irrelevant(n in 2usize..20, seed in any::<u64>(), l in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = random_tree(n, &mut rng);
        let lattices: Vec<_> = (1..=n)
            .map(|root| {
                let tree = DependencyTree::from_undirected(n, shape.edges(), root, "dep").unwrap();
                (span_set(&valid_spans(&tree, l)), span_set(&single_arc_spans(&tree, l)))
            })
            .collect();
        prop_assert!(lattices.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn exhaustive_oracle_agreement_up_to_eight_nodes() {
    for n in 2..=7 {
        for shape in enumerate_trees(n).unwrap() {
            let tree = DependencyTree::from_undirected(n, shape.edges(), 1, "dep").unwrap();
            assert_eq!(span_set(&valid_spans(&tree, n)), oracle_dgm_spans(tree.heads(), n));
        }
    }
    // n = 8 has 262144 trees; a seeded sample keeps the run short
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5000 {
        let shape = random_tree(8, &mut rng);
        let tree = DependencyTree::from_undirected(8, shape.edges(), 1, "dep").unwrap();
        assert_eq!(span_set(&valid_spans(&tree, 8)), oracle_dgm_spans(tree.heads(), 8));
    }
}

#[test]
fn sampled_average_stays_below_e_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [5usize, 10, 20, 40] {
        let trials = 2000;
        let total: usize = (0..trials)
            .map(|_| {
                let shape = random_tree(n, &mut rng);
                let tree = DependencyTree::from_undirected(n, shape.edges(), 1, "dep").unwrap();
                valid_spans(&tree, n).len()
            })
            .sum();
        let mean = total as f64 / trials as f64;
        assert!(mean < std::f64::consts::E * n as f64, "n = {n}: mean {mean}");
    }
}

#[test]
fn award_sentence_memberships() {
    let tree = tree_from_heads(&[3, 3, 4, 0, 9, 5, 8, 6, 4]);
    let dgm = valid_spans(&tree, 9);
    let dgms = single_arc_spans(&tree, 9);
    assert!(dgm.contains(1, 3));
    assert!(dgm.contains(2, 4));
    assert!(!dgm.contains(2, 5));
    assert!(dgm.contains(5, 8));
    assert!(!dgms.contains(5, 8));
    assert!(dgms.contains(1, 3));
}
