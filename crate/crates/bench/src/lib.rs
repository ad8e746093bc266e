//! Deterministic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rio_core::registration::{CompatibilityGraph, ScalarTlsProblem};
use rio_core::simulator::{synthetic_correspondences, SyntheticPair, SyntheticPairSpec};

/// `n` measurements: 60% scattered around zero, the rest uniform outliers.
pub fn tls_problem(n: usize, seed: u64) -> ScalarTlsProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let mut variances = Vec::with_capacity(n);
    for _ in 0..n {
        let var: f64 = rng.random_range(1e-4..1e-2);
        let inlier = rng.random::<f64>() < 0.6;
        values.push(if inlier {
            rng.random_range(-1.0..1.0) * var.sqrt()
        } else {
            rng.random_range(-10.0..10.0)
        });
        variances.push(var);
    }
    ScalarTlsProblem::new(values, variances, 1.0).expect("valid problem")
}

/// Erdős–Rényi graph with a planted clique over the first `clique` nodes.
pub fn planted_graph(n: usize, density: f64, clique: usize, seed: u64) -> CompatibilityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = CompatibilityGraph::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if b < clique || rng.random::<f64>() < density {
                g.add_edge(a, b);
            }
        }
    }
    g
}

pub fn correspondences(count: usize, outlier_rate: f64) -> SyntheticPair {
    synthetic_correspondences(&SyntheticPairSpec {
        count,
        outlier_rate,
        theta: 0.05,
        geometry_seed: 1,
        noise_seed: 2,
        ..Default::default()
    })
}
