mod common;

use std::collections::HashSet;

use hlgp::hierarchy::{build_subproblems, pair_positions};
use hlgp::PartitionSolution;
use proptest::prelude::*;

proptest! {
    #[test]
    fn matches_shift_and_pair_reference(n in 2usize..=12, k in 1usize..=12) {
        prop_assert_eq!(pair_positions(n, k), common::reference_pairs(n, k));
    }

    #[test]
    fn pairs_are_disjoint_and_cover(n in 2usize..=12, k in 1usize..=12) {
        let pairs = pair_positions(n, k);
        prop_assert_eq!(pairs.len(), n / 2);
        let used: HashSet<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        prop_assert_eq!(used.len(), 2 * (n / 2));
        prop_assert!(used.iter().all(|&p| p < n));
    }

    #[test]
    fn subproblems_unite_the_paired_subgraphs(n in 2usize..=12, k in 1usize..=12) {
        let c = PartitionSolution::new((0..n).map(|i| vec![i]).collect());
        for (sub, (a, b)) in build_subproblems(&c, k, 10) {
            let mut nodes = sub.nodes.clone();
            nodes.sort_unstable();
            let mut want = vec![a, b];
            want.sort_unstable();
            prop_assert_eq!(nodes, want);
            prop_assert_eq!(sub.max_returns, 2);
        }
    }
}

#[test]
fn even_count_pairs_every_neighbour_within_n_levels() {
    for n in (2..=12).step_by(2) {
        let mut seen = HashSet::new();
        for k in 1..=n {
            for (a, b) in pair_positions(n, k) {
                seen.insert((a.min(b), a.max(b)));
            }
        }
        for i in 0..n {
            let j = (i + 1) % n;
            assert!(seen.contains(&(i.min(j), i.max(j))), "n={n} pair ({i},{j})");
        }
    }
}

#[test]
fn odd_count_leaves_one_untouched() {
    for k in 1..=6 {
        let used: HashSet<usize> = pair_positions(5, k).into_iter().flat_map(|(a, b)| [a, b]).collect();
        assert_eq!(used.len(), 4);
    }
}

#[test]
fn two_subgraphs_always_pair_together() {
    for k in 1..=5 {
        let p = pair_positions(2, k)[0];
        assert_eq!((p.0.min(p.1), p.0.max(p.1)), (0, 1));
    }
}
