use crate::error::{Error, Result};
use crate::matching::CorrespondenceSet;
use crate::radar::Keypoint;

/// Fixed-size bitset over graph nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct NodeSet {
    words: Vec<u64>,
}

impl NodeSet {
    pub(crate) fn empty(n: usize) -> Self {
        Self {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub(crate) fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    pub(crate) fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub(crate) fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub(crate) fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub(crate) fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub(crate) fn intersect(&self, other: &NodeSet) -> NodeSet {
        NodeSet {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    pub(crate) fn first(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, w)| **w != 0)
            .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
    }

    pub(crate) fn subtract(&mut self, other: &NodeSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut word = w;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let bit = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(wi * 64 + bit)
            })
        })
    }
}

/// Undirected simple graph over correspondence indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompatibilityGraph {
    n: usize,
    adjacency: Vec<NodeSet>,
}

impl CompatibilityGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![NodeSet::empty(n); n],
        }
    }

    /// Builds a graph from an edge list; self-loops and duplicates are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adjacency[a].insert(b);
            self.adjacency[b].insert(a);
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(b)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).sum::<usize>() / 2
    }

    /// Edges `(a, b)` with `a < b` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|a| self.neighbors(a).filter(move |&b| b > a).map(move |b| (a, b)))
            .collect()
    }

    pub fn is_clique(&self, nodes: &[usize]) -> bool {
        nodes
            .iter()
            .enumerate()
            .all(|(i, &a)| nodes[i + 1..].iter().all(|&b| self.has_edge(a, b)))
    }

    pub(crate) fn adjacency(&self, v: usize) -> &NodeSet {
        &self.adjacency[v]
    }
}

/// Pairwise consistency graph: correspondences `i` and `j` are joined when
/// the lengths of their in-scan difference vectors agree within `thr` meters.
pub fn build_graph(
    prev: &[Keypoint],
    curr: &[Keypoint],
    corr: &CorrespondenceSet,
    thr: f64,
) -> Result<CompatibilityGraph> {
    let n = corr.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("compatibility graph needs 2 correspondences, got {n}")));
    }
    let p: Vec<_> = corr.pairs.iter().map(|c| prev[c.prev].xy).collect();
    let q: Vec<_> = corr.pairs.iter().map(|c| curr[c.curr].xy).collect();
    let mut g = CompatibilityGraph::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let residual = ((q[j] - q[i]).norm() - (p[j] - p[i]).norm()).abs();
            if residual <= thr {
                g.add_edge(i, j);
            }
        }
    }
    Ok(g)
}
