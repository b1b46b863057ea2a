//! Exact k-nearest-neighbor search over the joint `(x, mu)` space.
//!
//! Queries and stored records are compared with a scaled Euclidean metric:
//! state axes are divided by the spatial bandwidth and parameter axes by the
//! parameter bandwidth, so neighbor ranking agrees with the Gaussian kernel
//! weights used by the score estimator. Ties are broken by lower record
//! index. The index is a static k-d tree, read-only after construction.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::simulate::ObservedDataset;

const LEAF_SIZE: usize = 16;

/// Per-axis divisors for the joint metric: `d` state axes then `d_mu`
/// parameter axes.
pub fn axis_scales(d: usize, d_mu: usize, nu_x: f64, nu_mu: f64) -> Vec<f64> {
    let mut scales = vec![nu_x; d];
    scales.extend(std::iter::repeat(nu_mu).take(d_mu));
    scales
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        start: usize,
        len: usize,
    },
}

/// A candidate neighbor ordered by (distance, record index).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist_sq: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Static k-d tree over the scaled joint coordinates of a dataset.
pub struct NeighborIndex {
    dim: usize,
    scales: Vec<f64>,
    /// Scaled joint coordinates in record order, row-major.
    coords: Vec<f64>,
    /// Record indices, permuted so each leaf owns a contiguous range.
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl NeighborIndex {
    /// Builds the index over all records of `ds`.
    pub fn build(ds: &ObservedDataset, scales: &[f64]) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = ds.d() + ds.d_mu();
        if scales.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{dim} axis scales"),
                got: format!("{}", scales.len()),
            });
        }
        if scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidInput("axis scales must be positive".into()));
        }
        let n = ds.len();
        let mut coords = Vec::with_capacity(n * dim);
        for j in 0..n {
            let t = ds.transition(j);
            for (a, &v) in t.x_n.iter().chain(t.mu).enumerate() {
                coords.push(v / scales[a]);
            }
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::new();
        build_node(&coords, dim, &mut order, 0, 0, &mut nodes);
        Ok(Self {
            dim,
            scales: scales.to_vec(),
            coords,
            order,
            nodes,
        })
    }

    /// Number of indexed records.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, record: u32) -> &[f64] {
        let j = record as usize;
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    fn scale_query(&self, x: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        if x.len() + mu.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: format!("query of joint dimension {}", self.dim),
                got: format!("{}", x.len() + mu.len()),
            });
        }
        Ok(x.iter()
            .chain(mu)
            .enumerate()
            .map(|(a, &v)| v / self.scales[a])
            .collect())
    }

    /// The `n` records nearest to `(x, mu)` in the scaled metric, sorted by
    /// nondecreasing distance with ties broken by lower record index.
    pub fn k_nearest(&self, x: &[f64], mu: &[f64], n: usize) -> Result<Vec<u32>> {
        if n == 0 {
            return Err(Error::InvalidInput("neighbor count must be >= 1".into()));
        }
        let q = self.scale_query(x, mu)?;
        let k = n.min(self.len());
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(0, &q, k, &mut heap);
        let mut out = heap.into_sorted_vec();
        debug_assert_eq!(out.len(), k);
        Ok(out.drain(..).map(|c| c.index).collect())
    }

    fn search(&self, node: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, len } => {
                for &record in &self.order[start..start + len] {
                    let p = self.point(record);
                    let mut dist_sq = 0.0;
                    for a in 0..self.dim {
                        let diff = q[a] - p[a];
                        dist_sq += diff * diff;
                    }
                    let cand = Candidate {
                        dist_sq,
                        index: record,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("non-empty heap") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // The far side may still hold an equal-distance, lower-index
                // candidate, so prune only on strict excess.
                let worst = heap.peek().map(|c| c.dist_sq).unwrap_or(f64::INFINITY);
                if heap.len() < k || diff * diff <= worst {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

fn build_node(
    coords: &[f64],
    dim: usize,
    order: &mut [u32],
    offset: usize,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            len: order.len(),
        });
        return id;
    }
    let axis = depth % dim;
    let mid = order.len() / 2;
    let coord = |r: u32| coords[r as usize * dim + axis];
    order.select_nth_unstable_by(mid, |&a, &b| coord(a).total_cmp(&coord(b)).then(a.cmp(&b)));
    let value = coord(order[mid]);
    nodes.push(Node::Leaf { start: 0, len: 0 }); // placeholder
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(coords, dim, lo, offset, depth + 1, nodes);
    let right = build_node(coords, dim, hi, offset + mid, depth + 1, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;
    use rand::Rng;

    fn dataset_from_points(points: &[(f64, f64)]) -> ObservedDataset {
        // One record per point: x scalar state, mu scalar parameter.
        let mut mu_grid: Vec<Vec<f64>> = points.iter().map(|&(_, mu)| vec![mu]).collect();
        mu_grid.sort_by(|a, b| a[0].total_cmp(&b[0]));
        mu_grid.dedup();
        let storage: Vec<([f64; 1], [f64; 1], [f64; 1])> = points
            .iter()
            .map(|&(x, mu)| ([x], [mu], [x + 1.0]))
            .collect();
        ObservedDataset::from_records(
            "synthetic",
            1,
            1,
            0.1,
            mu_grid,
            storage
                .iter()
                .map(|(x, mu, xp)| (&x[..], &mu[..], &xp[..])),
        )
        .unwrap()
    }

    fn brute_force(
        ds: &ObservedDataset,
        scales: &[f64],
        x: &[f64],
        mu: &[f64],
        n: usize,
    ) -> Vec<u32> {
        let dim = ds.d() + ds.d_mu();
        let q: Vec<f64> = x
            .iter()
            .chain(mu)
            .enumerate()
            .map(|(a, &v)| v / scales[a])
            .collect();
        let mut all: Vec<(f64, u32)> = (0..ds.len())
            .map(|j| {
                let t = ds.transition(j);
                let mut dist_sq = 0.0;
                for (a, &v) in t.x_n.iter().chain(t.mu).enumerate() {
                    let diff = q[a] - v / scales[a];
                    dist_sq += diff * diff;
                }
                (dist_sq, j as u32)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(n.min(ds.len()));
        all.into_iter().map(|(_, j)| j).collect()
    }

    #[test]
    fn single_record_tree() {
        let ds = dataset_from_points(&[(0.5, 0.0)]);
        let idx = NeighborIndex::build(&ds, &axis_scales(1, 1, 1.0, 1.0)).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.k_nearest(&[0.0], &[0.0], 3).unwrap(), vec![0]);
    }

    #[test]
    fn duplicates_both_retrievable() {
        let ds = dataset_from_points(&[(1.0, 0.5), (1.0, 0.5), (2.0, 0.5)]);
        let idx = NeighborIndex::build(&ds, &axis_scales(1, 1, 1.0, 1.0)).unwrap();
        assert_eq!(idx.k_nearest(&[1.0], &[0.5], 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn exact_match_comes_first() {
        let ds = dataset_from_points(&[(0.0, 0.0), (3.0, 0.25), (-2.0, 0.75)]);
        let idx = NeighborIndex::build(&ds, &axis_scales(1, 1, 1.0, 1.0)).unwrap();
        let got = idx.k_nearest(&[3.0], &[0.25], 3).unwrap();
        assert_eq!(got[0], 1);
    }

    #[test]
    fn requesting_more_than_len_returns_all() {
        let ds = dataset_from_points(&[(0.0, 0.0), (1.0, 0.5), (2.0, 1.0)]);
        let idx = NeighborIndex::build(&ds, &axis_scales(1, 1, 1.0, 1.0)).unwrap();
        let got = idx.k_nearest(&[0.4], &[0.1], 100).unwrap();
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = ObservedDataset::from_records("empty", 1, 1, 0.1, vec![], std::iter::empty())
            .unwrap();
        assert!(matches!(
            NeighborIndex::build(&ds, &axis_scales(1, 1, 1.0, 1.0)),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn matches_brute_force_on_random_data() {
        for (size, queries) in [(100usize, 80usize), (2000, 80), (10_000, 40)] {
            let mut rng = RngSeed(size as u64).rng();
            let points: Vec<(f64, f64)> = (0..size)
                .map(|_| (rng.gen::<f64>() * 10.0 - 5.0, rng.gen::<f64>()))
                .collect();
            let ds = dataset_from_points(&points);
            let scales = axis_scales(1, 1, 1.0, 0.5);
            let idx = NeighborIndex::build(&ds, &scales).unwrap();
            for _ in 0..queries {
                let x = [rng.gen::<f64>() * 10.0 - 5.0];
                let mu = [rng.gen::<f64>()];
                let n = rng.gen_range(1..=64);
                let fast = idx.k_nearest(&x, &mu, n).unwrap();
                let slow = brute_force(&ds, &scales, &x, &mu, n);
                assert_eq!(fast, slow, "size {size} n {n}");
            }
        }
    }

    #[test]
    fn distances_nondecreasing() {
        let mut rng = RngSeed(42).rng();
        let points: Vec<(f64, f64)> = (0..500)
            .map(|_| (rng.gen::<f64>() * 4.0, rng.gen::<f64>()))
            .collect();
        let ds = dataset_from_points(&points);
        let scales = axis_scales(1, 1, 0.7, 0.2);
        let idx = NeighborIndex::build(&ds, &scales).unwrap();
        let got = idx.k_nearest(&[1.0], &[0.5], 50).unwrap();
        let dist = |j: u32| {
            let t = ds.transition(j as usize);
            let dx = (1.0 - t.x_n[0]) / 0.7;
            let dmu = (0.5 - t.mu[0]) / 0.2;
            dx * dx + dmu * dmu
        };
        for w in got.windows(2) {
            assert!(dist(w[0]) <= dist(w[1]));
        }
    }
}
