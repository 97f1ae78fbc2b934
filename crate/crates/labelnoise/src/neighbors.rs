//! Exact 2-nearest-neighbor indices.
//!
//! Everything downstream consumes the same structure: for every row, the two
//! nearest *other* rows under Euclidean distance, closest first, distance
//! ties broken by the smaller row index. Two backends exist — a k-d tree and
//! a quadratic scan — and they are exactly interchangeable; the scan serves
//! as the correctness oracle for the tree.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Precomputed 2-NN lists for every row of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndex {
    pairs: Vec<[usize; 2]>,
}

impl NeighborIndex {
    /// Number of indexed rows.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The two nearest neighbors of row `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> [usize; 2] {
        self.pairs[i]
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Two best (distance², row) candidates, kept sorted ascending; ties fall to
/// the smaller row index via lexicographic comparison.
#[derive(Clone, Copy)]
struct Best2 {
    slots: [(f64, usize); 2],
}

impl Best2 {
    fn new() -> Self {
        Best2 {
            slots: [(f64::INFINITY, usize::MAX); 2],
        }
    }

    fn offer(&mut self, d2: f64, row: usize) {
        let cand = (d2, row);
        if cand < self.slots[0] {
            self.slots[1] = self.slots[0];
            self.slots[0] = cand;
        } else if cand < self.slots[1] {
            self.slots[1] = cand;
        }
    }

    fn worst_d2(&self) -> f64 {
        self.slots[1].0
    }

    fn rows(&self) -> [usize; 2] {
        [self.slots[0].1, self.slots[1].1]
    }
}

/// A k-d tree over a set of dataset rows. Nodes are stored flat; children are
/// indices into `nodes`, `usize::MAX` meaning none.
struct KdTree<'a> {
    feats: &'a [f64],
    dim: usize,
    nodes: Vec<KdNode>,
    root: usize,
}

struct KdNode {
    row: usize,
    axis: usize,
    coord: f64,
    left: usize,
    right: usize,
}

const NONE: usize = usize::MAX;

impl<'a> KdTree<'a> {
    fn build(feats: &'a [f64], dim: usize, rows: &[usize]) -> Self {
        let mut tree = KdTree {
            feats,
            dim,
            nodes: Vec::with_capacity(rows.len()),
            root: NONE,
        };
        let mut work: Vec<usize> = rows.to_vec();
        tree.root = tree.build_rec(&mut work);
        tree
    }

    fn coord(&self, row: usize, axis: usize) -> f64 {
        self.feats[row * self.dim + axis]
    }

    fn build_rec(&mut self, rows: &mut [usize]) -> usize {
        if rows.is_empty() {
            return NONE;
        }
        // split on the axis with the widest spread over this cell
        let mut axis = 0;
        let mut best_spread = -1.0;
        for a in 0..self.dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &r in rows.iter() {
                let v = self.coord(r, a);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                axis = a;
            }
        }
        let mid = rows.len() / 2;
        rows.select_nth_unstable_by(mid, |&a, &b| {
            (self.coord(a, axis), a)
                .partial_cmp(&(self.coord(b, axis), b))
                .expect("finite coordinates")
        });
        let row = rows[mid];
        let coord = self.coord(row, axis);
        let node = self.nodes.len();
        self.nodes.push(KdNode {
            row,
            axis,
            coord,
            left: NONE,
            right: NONE,
        });
        // children built after the parent is pushed so indices stay stable
        let (lo, hi) = rows.split_at_mut(mid);
        let left = self.build_rec(lo);
        let right = self.build_rec(&mut hi[1..]);
        self.nodes[node].left = left;
        self.nodes[node].right = right;
        node
    }

    fn query(&self, anchor: usize, q: &[f64], node: usize, best: &mut Best2) {
        if node == NONE {
            return;
        }
        let n = &self.nodes[node];
        if n.row != anchor {
            best.offer(dist2(q, &self.feats[n.row * self.dim..(n.row + 1) * self.dim]), n.row);
        }
        let diff = q[n.axis] - n.coord;
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.query(anchor, q, near, best);
        // the far side may still hold an equally-distant, smaller-index row,
        // so it is pruned only when strictly farther than the current worst
        if diff * diff <= best.worst_d2() {
            self.query(anchor, q, far, best);
        }
    }
}

fn ensure_enough(count: usize, what: &str) -> Result<()> {
    if count < 3 {
        return Err(Error::InvalidConfig(format!(
            "2-NN needs at least 3 rows, {what} has {count}"
        )));
    }
    Ok(())
}

fn knn_into(ds: &LabeledDataset, rows: &[usize], pairs: &mut [[usize; 2]]) {
    let tree = KdTree::build(ds.features(), ds.dim(), rows);
    for &r in rows {
        let mut best = Best2::new();
        tree.query(r, ds.feature_row(r), tree.root, &mut best);
        pairs[r] = best.rows();
    }
}

/// Build the 2-NN index with the k-d tree backend.
pub fn build_index(ds: &LabeledDataset) -> Result<NeighborIndex> {
    ensure_enough(ds.len(), "dataset")?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let mut pairs = vec![[NONE; 2]; ds.len()];
    knn_into(ds, &rows, &mut pairs);
    Ok(NeighborIndex { pairs })
}

/// Build the 2-NN index by quadratic scan; the oracle backend.
pub fn build_index_brute(ds: &LabeledDataset) -> Result<NeighborIndex> {
    ensure_enough(ds.len(), "dataset")?;
    let mut pairs = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let mut best = Best2::new();
        for j in 0..ds.len() {
            if j != i {
                best.offer(dist2(ds.feature_row(i), ds.feature_row(j)), j);
            }
        }
        pairs.push(best.rows());
    }
    Ok(NeighborIndex { pairs })
}

/// Build a group-restricted 2-NN index: each row's neighbors are the nearest
/// rows *of its own group*. Requires group tags and at least 3 rows per
/// group.
pub fn build_index_grouped(ds: &LabeledDataset) -> Result<NeighborIndex> {
    let groups = ds.groups().ok_or(Error::MissingGroups)?;
    let mut pairs = vec![[NONE; 2]; ds.len()];
    for g in 0..ds.group_count() {
        let rows: Vec<usize> = (0..ds.len())
            .filter(|&i| groups[i] as usize == g)
            .collect();
        ensure_enough(rows.len(), &format!("group {g}"))?;
        knn_into(ds, &rows, &mut pairs);
    }
    Ok(NeighborIndex { pairs })
}
