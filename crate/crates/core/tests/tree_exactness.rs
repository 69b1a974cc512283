use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spelunker_core::synth::{clustered_dataset, random_dataset, random_query, SynthSpec};
use spelunker_core::{brute_force_knn, BallTree, Scalar, SearchHit};

const WEIGHTS: [f64; 3] = [0.25, 1.0, 4.0];

fn same_hits<T: Scalar>(tree: &[SearchHit<T>], brute: &[SearchHit<T>]) -> bool {
    tree.len() == brute.len()
        && tree
            .iter()
            .zip(brute)
            .all(|(a, b)| a.id == b.id && a.distance == b.distance && a.breakdown == b.breakdown)
}

fn run_trials<T: Scalar>(seed: u64, trials: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let n = rng.random_range(1..=256);
        let spec = SynthSpec {
            missing_rate: 0.1,
            vocabulary: rng.random_range(1..8),
            ..SynthSpec::default()
        };
        let dataset = if trial % 3 == 0 {
            clustered_dataset::<T, _>(&mut rng, &spec, n, 4)
        } else {
            random_dataset::<T, _>(&mut rng, &spec, n)
        };
        let leaf = rng.random_range(1..=20);
        let tree = BallTree::build(dataset, leaf).unwrap();
        tree.check_invariants().unwrap();
        for &k in &[1usize, 3, 10] {
            let q = random_query(&mut rng, tree.dataset(), &WEIGHTS);
            let (hits, stats) = tree.knn_search_with_stats(&q, k).unwrap();
            let brute = brute_force_knn(tree.dataset(), &q, k).unwrap();
            assert!(
                same_hits(&hits, &brute),
                "trial {trial} n={n} k={k}: {:?} vs {:?}",
                hits.iter().map(|h| h.id).collect::<Vec<_>>(),
                brute.iter().map(|h| h.id).collect::<Vec<_>>()
            );
            assert!(stats.distance_evals <= n);
            assert_eq!(hits.len(), k.min(n));
        }
    }
}

#[test]
fn tree_matches_brute_force_f64() {
    run_trials::<f64>(7, 300);
}

#[test]
fn tree_matches_brute_force_f32() {
    run_trials::<f32>(11, 150);
}

#[test]
fn every_record_lands_in_exactly_one_leaf() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dataset = random_dataset::<f64, _>(&mut rng, &SynthSpec::default(), 500);
    let tree = BallTree::build(dataset, 8).unwrap();
    let mut seen = vec![0usize; 500];
    for node in tree.nodes().iter().filter(|n| n.is_leaf()) {
        assert!(!node.members.is_empty() && node.members.len() <= 8);
        for &m in &node.members {
            seen[m] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn build_is_deterministic() {
    let make = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        BallTree::build(random_dataset::<f64, _>(&mut rng, &SynthSpec::default(), 300), 4).unwrap()
    };
    assert_eq!(make(), make());
}

#[test]
fn clustered_data_prunes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = SynthSpec {
        missing_rate: 0.0,
        ..SynthSpec::default()
    };
    let tree = BallTree::build(clustered_dataset::<f64, _>(&mut rng, &spec, 2000, 20), 16).unwrap();
    let mut evals = 0;
    for _ in 0..20 {
        let q = random_query(&mut rng, tree.dataset(), &[1.0]);
        evals += tree.knn_search_with_stats(&q, 5).unwrap().1.distance_evals;
    }
    assert!(evals < 20 * 2000, "no pruning at all: {evals}");
}
