//! Exact nearest-neighbor search.
//!
//! Neighbors are ranked by `(squared Euclidean distance, index)`, so ties go to
//! the lower point index and every query has exactly one correct answer. The
//! k-d tree below returns that answer; [`linear_scan`] is the reference.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::dataset::squared_distance;

const LEAF_SIZE: usize = 16;

/// A neighbor of a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    /// Squared Euclidean distance to the query.
    pub sq_dist: f64,
}

impl Neighbor {
    pub fn dist(&self) -> f64 {
        self.sq_dist.sqrt()
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.sq_dist
            .total_cmp(&other.sq_dist)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry(Neighbor);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

#[derive(Debug)]
enum NodeKind {
    Leaf,
    Split { left: usize, right: usize },
}

#[derive(Debug)]
struct Node {
    start: usize,
    end: usize,
    kind: NodeKind,
}

/// Static k-d tree over a row-major `n x dim` point set.
#[derive(Debug)]
pub struct KdTree<'a> {
    data: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
    // Per-node bounding boxes, `2 * dim` values each: lows then highs.
    boxes: Vec<f64>,
}

impl<'a> KdTree<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "data length must be a multiple of dim");
        let n = data.len() / dim;
        let mut tree = KdTree {
            data,
            dim,
            order: (0..n).collect(),
            nodes: Vec::new(),
            boxes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            kind: NodeKind::Leaf,
        });
        let d = self.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &p in &self.order[start..end] {
            let x = &self.data[p * d..(p + 1) * d];
            for k in 0..d {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        let (axis, spread) = (0..d)
            .map(|k| (k, hi[k] - lo[k]))
            .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        self.boxes.extend_from_slice(&lo);
        self.boxes.extend_from_slice(&hi);

        if end - start <= LEAF_SIZE || spread <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        let data = self.data;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data[a * d + axis]
                .total_cmp(&data[b * d + axis])
                .then(a.cmp(&b))
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id].kind = NodeKind::Split { left, right };
        id
    }

    /// Lower bound on the squared distance from `q` to anything in node `id`.
    #[inline]
    fn box_bound(&self, id: usize, q: &[f64]) -> f64 {
        let d = self.dim;
        let lo = &self.boxes[2 * d * id..2 * d * id + d];
        let hi = &self.boxes[2 * d * id + d..2 * d * (id + 1)];
        let mut acc = 0.0;
        for k in 0..d {
            let t = if q[k] < lo[k] {
                lo[k] - q[k]
            } else if q[k] > hi[k] {
                q[k] - hi[k]
            } else {
                0.0
            };
            acc += t * t;
        }
        acc
    }

    /// The `k` nearest points to `query`, ascending, skipping `exclude`.
    pub fn knn(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        debug_assert_eq!(query.len(), self.dim);
        if k == 0 || self.order.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if heap.len() == k {
                let worst = heap.peek().unwrap().0.sq_dist;
                if self.box_bound(id, query) > worst {
                    continue;
                }
            }
            let node = &self.nodes[id];
            match node.kind {
                NodeKind::Leaf => {
                    for &p in &self.order[node.start..node.end] {
                        if Some(p) == exclude {
                            continue;
                        }
                        let cand = Neighbor {
                            index: p,
                            sq_dist: squared_distance(self.point(p), query),
                        };
                        if heap.len() < k {
                            heap.push(HeapEntry(cand));
                        } else if cand.key_cmp(&heap.peek().unwrap().0) == Ordering::Less {
                            heap.pop();
                            heap.push(HeapEntry(cand));
                        }
                    }
                }
                NodeKind::Split { left, right } => {
                    // Visit the closer child first.
                    let bl = self.box_bound(left, query);
                    let br = self.box_bound(right, query);
                    if bl <= br {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        let mut out: Vec<Neighbor> = heap.into_iter().map(|e| e.0).collect();
        out.sort_by(Neighbor::key_cmp);
        out
    }

    /// `k` nearest neighbors of every indexed point, self excluded.
    pub fn all_knn(&self, k: usize) -> NeighborTable {
        let n = self.len();
        let k = k.min(n.saturating_sub(1));
        let rows: Vec<Vec<Neighbor>> = (0..n)
            .into_par_iter()
            .map(|i| self.knn(self.point(i), k, Some(i)))
            .collect();
        NeighborTable::from_rows(k, rows)
    }
}

/// The reference search: score every point, sort by `(distance, index)`.
pub fn linear_scan(data: &[f64], dim: usize, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
    let n = data.len() / dim;
    let mut all: Vec<Neighbor> = (0..n)
        .filter(|&i| Some(i) != exclude)
        .map(|i| Neighbor {
            index: i,
            sq_dist: squared_distance(&data[i * dim..(i + 1) * dim], query),
        })
        .collect();
    all.sort_by(Neighbor::key_cmp);
    all.truncate(k);
    all
}

/// Fixed-width table of nearest neighbors, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    k: usize,
    neighbors: Vec<Neighbor>,
}

impl NeighborTable {
    pub fn from_rows(k: usize, rows: Vec<Vec<Neighbor>>) -> Self {
        let mut neighbors = Vec::with_capacity(rows.len() * k);
        for row in rows {
            assert_eq!(row.len(), k, "neighbor rows must all have length k");
            neighbors.extend(row);
        }
        NeighborTable { k, neighbors }
    }

    /// Neighbors per point.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.neighbors.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Neighbor]> {
        self.neighbors.chunks_exact(self.k.max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, dim: usize, seed: u64, grid_values: bool) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim)
            .map(|_| {
                if grid_values {
                    // Coarse integer lattice to force many exact distance ties.
                    rng.random_range(0..4) as f64
                } else {
                    rng.random::<f64>()
                }
            })
            .collect()
    }

    #[test]
    fn matches_linear_scan_on_random_queries() {
        for (seed, dim) in [(1u64, 2usize), (2, 5), (3, 17)] {
            let data = cloud(500, dim, seed, false);
            let tree = KdTree::new(&data, dim);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..100 {
                let i = rng.random_range(0..500);
                let k = rng.random_range(1..40);
                let q = &data[i * dim..(i + 1) * dim];
                assert_eq!(tree.knn(q, k, Some(i)), linear_scan(&data, dim, q, k, Some(i)));
            }
        }
    }

    #[test]
    fn ties_break_by_lower_index() {
        let data = cloud(300, 2, 9, true);
        let tree = KdTree::new(&data, 2);
        for i in 0..300 {
            let q = &data[i * 2..i * 2 + 2];
            assert_eq!(tree.knn(q, 25, Some(i)), linear_scan(&data, 2, q, 25, Some(i)));
        }
    }

    #[test]
    fn duplicate_is_first_neighbor() {
        let data = vec![0.0, 0.0, 5.0, 5.0, 0.0, 0.0, 1.0, 1.0];
        let tree = KdTree::new(&data, 2);
        let nn = tree.knn(&data[0..2], 1, Some(0));
        assert_eq!(nn[0].index, 2);
        assert_eq!(nn[0].sq_dist, 0.0);
    }

    #[test]
    fn full_ranking_when_k_is_n_minus_one() {
        let data = cloud(50, 3, 4, false);
        let table = KdTree::new(&data, 3).all_knn(49);
        for i in 0..50 {
            let mut idx: Vec<usize> = table.row(i).iter().map(|nb| nb.index).collect();
            assert!(table.row(i).windows(2).all(|w| w[0].sq_dist <= w[1].sq_dist));
            idx.push(i);
            idx.sort_unstable();
            assert_eq!(idx, (0..50).collect::<Vec<_>>());
        }
    }

    proptest! {
        #[test]
        fn tree_equals_scan(seed in 0u64..1000, n in 1usize..120, dim in 1usize..6, k in 1usize..20) {
            let data = cloud(n, dim, seed, seed % 2 == 0);
            let tree = KdTree::new(&data, dim);
            let q: Vec<f64> = cloud(1, dim, seed ^ 0xdead, seed % 2 == 0);
            prop_assert_eq!(tree.knn(&q, k, None), linear_scan(&data, dim, &q, k, None));
        }
    }
}
