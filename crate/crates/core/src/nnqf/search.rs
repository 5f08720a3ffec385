//! Exact nearest-neighbor search under the filter's ordering rules.
//!
//! Candidates are ordered by ascending distance, ties by ascending index.
//! A row's neighbor set is the first `k` candidates whose distance does not
//! exceed `epsilon`. The query row itself is a candidate (distance 0).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};

use super::distance::distance;
use crate::dataprep::FeatureMatrix;
use crate::par;

/// Neighbors of one query, nearest first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Neighbors {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl Neighbors {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Search parameters shared by every strategy.
#[derive(Debug, Clone, Copy)]
pub struct SearchParams<'a> {
    pub k: usize,
    pub epsilon: f64,
    pub weights: &'a [f64],
}

/// All-rows self-query search over a training matrix.
pub trait NeighborSearch: Sync {
    /// Neighbors of every row of `x` among the rows of `x`.
    fn search_all(&self, x: &FeatureMatrix, params: SearchParams<'_>) -> Vec<Neighbors>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStrategy {
    /// k-d tree for low-dimensional inputs, brute force otherwise.
    #[default]
    Auto,
    BruteForce,
    KdTree,
}

/// Largest dimension for which `Auto` picks the tree.
pub const KD_TREE_MAX_DIM: usize = 8;

impl SearchStrategy {
    pub fn resolve(self, n_rows: usize, n_cols: usize) -> SearchStrategy {
        match self {
            SearchStrategy::Auto if n_cols <= KD_TREE_MAX_DIM && n_rows > 64 => SearchStrategy::KdTree,
            SearchStrategy::Auto => SearchStrategy::BruteForce,
            s => s,
        }
    }
}

impl NeighborSearch for SearchStrategy {
    fn search_all(&self, x: &FeatureMatrix, params: SearchParams<'_>) -> Vec<Neighbors> {
        match self.resolve(x.n_rows(), x.n_cols()) {
            SearchStrategy::KdTree => KdTree::build(x).search_all(x, params),
            _ => BruteForce.search_all(x, params),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn into_neighbors(mut c: Vec<Candidate>) -> Neighbors {
    c.sort_unstable();
    Neighbors {
        indices: c.iter().map(|c| c.index).collect(),
        distances: c.iter().map(|c| c.dist).collect(),
    }
}

/// Exhaustive scan; the correctness reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForce;

impl NeighborSearch for BruteForce {
    fn search_all(&self, x: &FeatureMatrix, params: SearchParams<'_>) -> Vec<Neighbors> {
        par::map_range(x.n_rows(), |i| brute_force_query(x, x.row(i), params, None))
    }
}

/// Scans every stored row for one query. `visits`, when given, is
/// incremented once per distance evaluation.
pub fn brute_force_query(
    data: &FeatureMatrix,
    query: &[f64],
    params: SearchParams<'_>,
    visits: Option<&AtomicUsize>,
) -> Neighbors {
    let n = data.n_rows();
    let mut cand: Vec<Candidate> = (0..n)
        .map(|j| Candidate { dist: distance(query, data.row(j), params.weights), index: j })
        .filter(|c| c.dist <= params.epsilon)
        .collect();
    if let Some(v) = visits {
        v.fetch_add(n, AtomicOrdering::Relaxed);
    }
    if params.k == 0 {
        return Neighbors::default();
    }
    if cand.len() > params.k {
        cand.select_nth_unstable(params.k - 1);
        cand.truncate(params.k);
    }
    into_neighbors(cand)
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Exact k-d tree over the rows of a matrix.
///
/// Pruning uses a per-axis lower bound accumulated in the same order as the
/// distance kernel, so it never exceeds the true (rounded) distance and the
/// result is identical to [`BruteForce`].
pub struct KdTree<'a> {
    data: &'a FeatureMatrix,
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    pub fn build(data: &'a FeatureMatrix) -> Self {
        let mut order: Vec<usize> = (0..data.n_rows()).collect();
        let root = Self::build_node(data, &mut order, 0);
        Self { data, order, root }
    }

    fn build_node(data: &FeatureMatrix, idx: &mut [usize], offset: usize) -> Node {
        let len = idx.len();
        if len <= LEAF_SIZE || data.n_cols() == 0 {
            return Node::Leaf { start: offset, end: offset + len };
        }
        let (dim, spread) = (0..data.n_cols())
            .map(|d| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = data.get(i, d);
                    (lo.min(v), hi.max(v))
                });
                (d, hi - lo)
            })
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(spread > 0.0) {
            return Node::Leaf { start: offset, end: offset + len };
        }
        let mid = len / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| data.get(a, dim).total_cmp(&data.get(b, dim)));
        let value = data.get(idx[mid], dim);
        let (l, r) = idx.split_at_mut(mid);
        Node::Split {
            dim,
            value,
            left: Box::new(Self::build_node(data, l, offset)),
            right: Box::new(Self::build_node(data, r, offset + mid)),
        }
    }

    /// Neighbors of an arbitrary query point.
    pub fn query(&self, query: &[f64], params: SearchParams<'_>) -> Neighbors {
        if params.k == 0 {
            return Neighbors::default();
        }
        let mut heap = BinaryHeap::with_capacity(params.k + 1);
        let mut off = vec![0.0; query.len()];
        self.visit(&self.root, query, params, &mut off, &mut heap);
        into_neighbors(heap.into_vec())
    }

    fn bound(off: &[f64], w: &[f64]) -> f64 {
        let mut s = 0.0;
        for d in 0..off.len() {
            s += w[d] * off[d] * off[d];
        }
        s.sqrt()
    }

    fn visit(
        &self,
        node: &Node,
        q: &[f64],
        p: SearchParams<'_>,
        off: &mut [f64],
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match node {
            Node::Leaf { start, end } => {
                for &j in &self.order[*start..*end] {
                    let c = Candidate { dist: distance(q, self.data.row(j), p.weights), index: j };
                    if c.dist > p.epsilon {
                        continue;
                    }
                    if heap.len() < p.k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("non-empty") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[*dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.visit(near, q, p, off, heap);
                let saved = off[*dim];
                off[*dim] = diff.abs();
                let bound = Self::bound(off, p.weights);
                let full = heap.len() >= p.k;
                if bound <= p.epsilon && !(full && bound > heap.peek().expect("non-empty").dist) {
                    self.visit(far, q, p, off, heap);
                }
                off[*dim] = saved;
            }
        }
    }
}

impl NeighborSearch for KdTree<'_> {
    fn search_all(&self, x: &FeatureMatrix, params: SearchParams<'_>) -> Vec<Neighbors> {
        par::map_range(x.n_rows(), |i| self.query(x.row(i), params))
    }
}

/// Wraps a strategy and counts how many all-rows searches it ran.
#[derive(Debug, Default)]
pub struct CountingSearch<S> {
    inner: S,
    calls: AtomicUsize,
}

impl<S> CountingSearch<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(AtomicOrdering::SeqCst)
    }
}

impl<S: NeighborSearch> NeighborSearch for CountingSearch<S> {
    fn search_all(&self, x: &FeatureMatrix, params: SearchParams<'_>) -> Vec<Neighbors> {
        self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        self.inner.search_all(x, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(v: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(v.to_vec(), 1).unwrap()
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let x = line(&[0.0, 1.0, 2.0, 10.0]);
        let p = SearchParams { k: 2, epsilon: f64::INFINITY, weights: &[1.0] };
        let n = BruteForce.search_all(&x, p);
        // Row 1 (value 1): self, then the d=1 tie between rows 0 and 2.
        assert_eq!(n[1].indices, vec![1, 0]);
        assert_eq!(n[1].distances, vec![0.0, 1.0]);
    }

    #[test]
    fn epsilon_limits_cardinality() {
        let x = line(&[0.0, 1.0, 2.0, 10.0]);
        let p = SearchParams { k: 2, epsilon: 0.5, weights: &[1.0] };
        let n = BruteForce.search_all(&x, p);
        assert_eq!(n[1].indices, vec![1]);
    }

    #[test]
    fn k_equals_n_returns_everything() {
        let x = line(&[0.3, 0.1, 0.9, 0.5, 0.2]);
        let p = SearchParams { k: 5, epsilon: f64::INFINITY, weights: &[1.0] };
        for nb in BruteForce.search_all(&x, p) {
            let mut s = nb.indices.clone();
            s.sort_unstable();
            assert_eq!(s, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn tree_matches_brute_force_with_duplicates() {
        // Many exact duplicates stress the tie rule across leaves.
        let v: Vec<f64> = (0..400).map(|i| ((i * 7) % 13) as f64 * 0.1).collect();
        let x = FeatureMatrix::new(v, 2).unwrap();
        let w = [1.0, 3.0];
        for k in [1, 5, 40, 200] {
            let p = SearchParams { k, epsilon: f64::INFINITY, weights: &w };
            assert_eq!(KdTree::build(&x).search_all(&x, p), BruteForce.search_all(&x, p));
        }
    }

    #[test]
    fn visits_count_every_row() {
        let x = line(&[0.0, 1.0, 2.0]);
        let v = AtomicUsize::new(0);
        let p = SearchParams { k: 1, epsilon: f64::INFINITY, weights: &[1.0] };
        brute_force_query(&x, &[0.4], p, Some(&v));
        brute_force_query(&x, &[1.4], p, Some(&v));
        assert_eq!(v.load(AtomicOrdering::Relaxed), 6);
    }
}
