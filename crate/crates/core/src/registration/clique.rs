//! Exact maximum clique by branch and bound.
//!
//! Vertices are renumbered in degeneracy order and candidate sets are bitsets
//! in that numbering; the bound at every node is the number of colours in a
//! greedy colouring of the candidate set. A first pass finds the clique
//! number, a second pass builds the lexicographically smallest clique of that
//! size one vertex at a time.

use super::graph::{CompatibilityGraph, NodeSet};
use crate::error::{Error, Result};

pub const DEFAULT_CLIQUE_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxClique {
    /// Clique members, ascending.
    pub nodes: Vec<usize>,
    /// False when the branch budget ran out before optimality was proven.
    pub exact: bool,
}

pub fn max_clique(g: &CompatibilityGraph) -> Result<MaxClique> {
    max_clique_with_budget(g, DEFAULT_CLIQUE_BUDGET)
}

pub fn max_clique_with_budget(g: &CompatibilityGraph, budget: u64) -> Result<MaxClique> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::Degenerate("maximum clique of an empty graph".into()));
    }
    let search = Search::new(g, budget);
    search.run()
}

struct Search {
    n: usize,
    /// `order[k]` is the original vertex at position `k`.
    order: Vec<usize>,
    /// Adjacency in position space.
    adj: Vec<NodeSet>,
    steps: u64,
    budget: u64,
}

impl Search {
    fn new(g: &CompatibilityGraph, budget: u64) -> Self {
        let n = g.node_count();
        let order = degeneracy_order(g);
        let mut position = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        let adj = order
            .iter()
            .map(|&v| {
                let mut s = NodeSet::empty(n);
                for u in g.adjacency(v).iter() {
                    s.insert(position[u]);
                }
                s
            })
            .collect();
        Self {
            n,
            order,
            adj,
            steps: 0,
            budget,
        }
    }

    fn exhausted(&self) -> bool {
        self.steps >= self.budget
    }

    fn run(mut self) -> Result<MaxClique> {
        let mut best = Vec::new();
        let mut current = Vec::new();
        self.expand(&mut current, NodeSet::full(self.n), &mut best);
        if best.is_empty() {
            best.push(0);
        }
        if self.exhausted() {
            return Ok(self.finish(best, false));
        }
        let omega = best.len();
        match self.lexicographic(omega) {
            Some(nodes) => Ok(MaxClique { nodes, exact: true }),
            None => Ok(self.finish(best, false)),
        }
    }

    fn finish(&self, positions: Vec<usize>, exact: bool) -> MaxClique {
        let mut nodes: Vec<_> = positions.into_iter().map(|k| self.order[k]).collect();
        nodes.sort_unstable();
        MaxClique { nodes, exact }
    }

    /// Greedy colouring of `p`; returns vertices in colour order with their
    /// colour numbers (1-based, non-decreasing).
    fn colour_sort(&self, p: &NodeSet) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(p.len());
        let mut uncoloured = p.clone();
        let mut colour = 0;
        while !uncoloured.is_empty() {
            colour += 1;
            let mut available = uncoloured.clone();
            while let Some(v) = available.first() {
                available.remove(v);
                available.subtract(&self.adj[v]);
                uncoloured.remove(v);
                out.push((v, colour));
            }
        }
        out
    }

    fn expand(&mut self, current: &mut Vec<usize>, mut p: NodeSet, best: &mut Vec<usize>) {
        let coloured = self.colour_sort(&p);
        for &(v, colour) in coloured.iter().rev() {
            if current.len() + colour <= best.len() || self.exhausted() {
                return;
            }
            self.steps += 1;
            current.push(v);
            let next = p.intersect(&self.adj[v]);
            if next.is_empty() {
                if current.len() > best.len() {
                    *best = current.clone();
                }
            } else {
                self.expand(current, next, best);
            }
            current.pop();
            p.remove(v);
        }
    }

    /// True when `p` holds a clique of `target` vertices.
    fn has_clique(&mut self, p: NodeSet, target: usize) -> bool {
        if target == 0 {
            return true;
        }
        let mut p = p;
        let coloured = self.colour_sort(&p);
        for &(v, colour) in coloured.iter().rev() {
            if colour < target || self.exhausted() {
                return false;
            }
            self.steps += 1;
            if self.has_clique(p.intersect(&self.adj[v]), target - 1) {
                return true;
            }
            p.remove(v);
        }
        false
    }

    /// Lexicographically smallest clique of size `omega` in original labels.
    fn lexicographic(&mut self, omega: usize) -> Option<Vec<usize>> {
        let mut position = vec![0; self.n];
        for (k, &v) in self.order.iter().enumerate() {
            position[v] = k;
        }
        let mut chosen = Vec::with_capacity(omega);
        let mut candidates = NodeSet::full(self.n);
        let mut last = None;
        while chosen.len() < omega {
            let mut picked = None;
            let start = last.map_or(0, |l| l + 1);
            for v in start..self.n {
                let pv = position[v];
                if !candidates.contains(pv) {
                    continue;
                }
                let mut rest = candidates.intersect(&self.adj[pv]);
                for u in 0..=v {
                    rest.remove(position[u]);
                }
                if self.has_clique(rest.clone(), omega - chosen.len() - 1) {
                    picked = Some((v, rest));
                    break;
                }
                if self.exhausted() {
                    return None;
                }
            }
            let (v, rest) = picked?;
            chosen.push(v);
            candidates = rest;
            last = Some(v);
        }
        Some(chosen)
    }
}

/// Reverse peeling order (repeatedly removing a minimum-degree vertex), so
/// vertices of the densest core come first.
fn degeneracy_order(g: &CompatibilityGraph) -> Vec<usize> {
    let n = g.node_count();
    let mut degree: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let mut removed = vec![false; n];
    let mut peel = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !removed[v])
            .min_by_key(|&v| (degree[v], v))
            .expect("vertex remains");
        removed[v] = true;
        peel.push(v);
        for u in g.neighbors(v) {
            if !removed[u] {
                degree[u] -= 1;
            }
        }
    }
    peel.reverse();
    peel
}
