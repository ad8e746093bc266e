//! Slow, obviously-correct reference solvers for cross-checking.

use crate::error::{Error, Result};
use crate::registration::{CompatibilityGraph, ScalarTlsProblem, ScalarTlsSolution};

/// Grid spacing of the dense scan in [`oracle_scalar_tls`].
pub const ORACLE_GRID_STEP: f64 = 1e-4;
/// Largest graph [`oracle_max_clique`] accepts.
pub const ORACLE_MAX_NODES: usize = 15;

/// Global minimiser of the truncated quadratic sum with inlier half-width
/// `σ·c̄`, found by evaluating a dense grid over the boundary hull together
/// with the clamped weighted mean of every boundary-delimited interval.
/// Ties between candidates go to the smallest `x`.
pub fn oracle_scalar_tls(problem: &ScalarTlsProblem) -> Result<ScalarTlsSolution> {
    problem.validate()?;
    let xs = &problem.values;
    let vars = &problem.variances;
    let cbar2 = problem.cbar2;
    let widths: Vec<f64> = vars.iter().map(|v| (v * cbar2).sqrt()).collect();
    let cost = |x: f64| -> f64 {
        xs.iter()
            .zip(vars)
            .zip(&widths)
            .map(|((&xm, &v), &w)| if (x - xm).abs() <= w { (x - xm).powi(2) / v } else { cbar2 })
            .sum()
    };

    let mut bounds: Vec<f64> = xs.iter().zip(&widths).flat_map(|(x, w)| [x - w, x + w]).collect();
    bounds.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = xs.clone();
    candidates.extend(&bounds);
    for pair in bounds.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let mid = 0.5 * (lo + hi);
        let (mut num, mut den) = (0.0, 0.0);
        for ((&xm, &v), &w) in xs.iter().zip(vars).zip(&widths) {
            if (mid - xm).abs() < w {
                num += xm / v;
                den += 1.0 / v;
            }
        }
        if den > 0.0 {
            candidates.push((num / den).clamp(lo, hi));
        }
    }
    let (lo, hi) = (bounds[0], bounds[bounds.len() - 1]);
    let steps = ((hi - lo) / ORACLE_GRID_STEP).ceil() as usize;
    candidates.extend((0..=steps).map(|k| lo + k as f64 * ORACLE_GRID_STEP));
    candidates.sort_by(f64::total_cmp);

    let mut best = (f64::NAN, f64::INFINITY);
    for &x in &candidates {
        let c = cost(x);
        if c < best.1 - 1e-12 * (1.0 + best.1.abs().min(1e300)) || best.0.is_nan() {
            best = (x, c);
        }
    }
    let x_hat = best.0;
    let inliers: Vec<usize> = (0..xs.len()).filter(|&m| (x_hat - xs[m]).abs() <= widths[m]).collect();
    let info: f64 = inliers.iter().map(|&m| 1.0 / vars[m]).sum();
    Ok(ScalarTlsSolution {
        x_hat,
        variance: if info > 0.0 { 1.0 / info } else { f64::INFINITY },
        inliers,
        cost: best.1,
    })
}

/// Maximum clique by exhaustive subset enumeration; among cliques of the
/// largest size, the lexicographically smallest sorted node list.
pub fn oracle_max_clique(graph: &CompatibilityGraph) -> Result<Vec<usize>> {
    let n = graph.node_count();
    if n > ORACLE_MAX_NODES {
        return Err(Error::Domain(format!(
            "exhaustive clique search refuses {n} nodes (limit {ORACLE_MAX_NODES})"
        )));
    }
    if n == 0 {
        return Err(Error::Degenerate("graph has no nodes".into()));
    }
    let mut best: Vec<usize> = Vec::new();
    for mask in 1u32..(1 << n) {
        if (mask.count_ones() as usize) < best.len() {
            continue;
        }
        let nodes: Vec<usize> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
        let is_clique = nodes
            .iter()
            .enumerate()
            .all(|(i, &a)| nodes[i + 1..].iter().all(|&b| graph.has_edge(a, b)));
        if is_clique && (nodes.len() > best.len() || nodes < best) {
            best = nodes;
        }
    }
    Ok(best)
}
