//! Kozachenko-Leonenko nearest-neighbour entropy estimator.

use rayon::prelude::*;
use statrs::function::gamma::{digamma, ln_gamma};

use super::particles::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;

/// Neighbour rank used by [`entropy`](super::DensityState::entropy).
pub const DEFAULT_K: usize = 3;

/// KL estimate `ψ(N) − ψ(k) + log V_d + d Σ_i w_i log ε_i`, where ε_i is the
/// Euclidean distance from particle i to its k-th nearest neighbour.
pub fn kl_entropy(e: &ParticleEnsemble, k: usize) -> Result<f64> {
    let n = e.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if n < k + 1 {
        return Err(Error::invalid(format!("k-NN entropy with k={k} needs more than {k} particles, got {n}")));
    }
    let d = e.dim();
    let dist = kth_neighbor_distances(e.positions(), d, k);
    let mut acc = NeumaierSum::new();
    for (r, w) in dist.iter().zip(e.weights()) {
        if *r <= 0.0 {
            return Err(Error::Degenerate("coincident particles give a zero neighbour distance".into()));
        }
        acc.add(w * r.ln());
    }
    let df = d as f64;
    let log_unit_ball = 0.5 * df * std::f64::consts::PI.ln() - ln_gamma(0.5 * df + 1.0);
    Ok(digamma(n as f64) - digamma(k as f64) + log_unit_ball + df * acc.value())
}

/// Distance from every point to its k-th nearest other point.
pub fn kth_neighbor_distances(points: &[f64], dim: usize, k: usize) -> Vec<f64> {
    if dim == 1 {
        kth_neighbor_1d(points, k)
    } else {
        let tree = KdTree::build(points, dim);
        (0..points.len() / dim)
            .into_par_iter()
            .map(|i| tree.kth_distance(i, k))
            .collect()
    }
}

fn kth_neighbor_1d(points: &[f64], k: usize) -> Vec<f64> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| points[i]).collect();
    let per_rank: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| {
            let x = sorted[r];
            let (mut lo, mut hi) = (r, r);
            let mut dist = 0.0;
            for _ in 0..k {
                let left = if lo > 0 { x - sorted[lo - 1] } else { f64::INFINITY };
                let right = if hi + 1 < n { sorted[hi + 1] - x } else { f64::INFINITY };
                if left <= right {
                    lo -= 1;
                    dist = left;
                } else {
                    hi += 1;
                    dist = right;
                }
            }
            dist
        })
        .collect();
    let mut out = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        out[i] = per_rank[r];
    }
    out
}

/// Static k-d tree over row-major points.
struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    nodes: Vec<Node>,
    index: Vec<usize>,
}

struct Node {
    start: usize,
    end: usize,
    axis: usize,
    split: f64,
    children: Option<(usize, usize)>,
}

const LEAF_SIZE: usize = 16;

impl<'a> KdTree<'a> {
    fn build(points: &'a [f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut tree = KdTree { points, dim, nodes: Vec::new(), index: (0..n).collect() };
        tree.build_node(0, n, 0);
        tree
    }

    fn coord(&self, i: usize, a: usize) -> f64 {
        self.points[i * self.dim + a]
    }

    fn build_node(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        let axis = depth % self.dim;
        self.nodes.push(Node { start, end, axis, split: 0.0, children: None });
        if end - start > LEAF_SIZE {
            let mid = start + (end - start) / 2;
            let (points, dim) = (self.points, self.dim);
            self.index[start..end]
                .select_nth_unstable_by(mid - start, |&x, &y| points[x * dim + axis].total_cmp(&points[y * dim + axis]));
            let split = self.coord(self.index[mid], axis);
            let left = self.build_node(start, mid, depth + 1);
            let right = self.build_node(mid, end, depth + 1);
            self.nodes[id].split = split;
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    fn dist_sq(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.points[i * self.dim..(i + 1) * self.dim], &self.points[j * self.dim..(j + 1) * self.dim]);
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    fn kth_distance(&self, query: usize, k: usize) -> f64 {
        // Sorted ascending list of the k smallest squared distances seen so far.
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        self.search(0, query, k, &mut best);
        best[k - 1].sqrt()
    }

    fn search(&self, node: usize, query: usize, k: usize, best: &mut Vec<f64>) {
        let nd = &self.nodes[node];
        match nd.children {
            None => {
                for &j in &self.index[nd.start..nd.end] {
                    if j == query {
                        continue;
                    }
                    let d2 = self.dist_sq(query, j);
                    if best.len() < k || d2 < best[best.len() - 1] {
                        let pos = best.partition_point(|v| *v <= d2);
                        best.insert(pos, d2);
                        best.truncate(k);
                    }
                }
            }
            Some((left, right)) => {
                let delta = self.coord(query, nd.axis) - nd.split;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, best);
                if best.len() < k || delta * delta < best[best.len() - 1] {
                    self.search(far, query, k, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{gaussian::GaussianDensity, particles::sample};
    use crate::rng::CounterRng;

    fn brute_force(points: &[f64], dim: usize, k: usize) -> Vec<f64> {
        let n = points.len() / dim;
        (0..n)
            .map(|i| {
                let mut d: Vec<f64> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        (0..dim)
                            .map(|a| (points[i * dim + a] - points[j * dim + a]).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                d.sort_by(f64::total_cmp);
                d[k - 1]
            })
            .collect()
    }

    #[test]
    fn neighbour_search_matches_brute_force() {
        let rng = CounterRng::new(1);
        for dim in 1..=3 {
            let n = 300;
            let pts: Vec<f64> = (0..n * dim).map(|i| rng.uniforms(i as u64, 9)[0] * 4.0).collect();
            for k in [1, 3, 5] {
                let fast = kth_neighbor_distances(&pts, dim, k);
                let slow = brute_force(&pts, dim, k);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-14, "dim={dim} k={k}");
                }
            }
        }
    }

    #[test]
    fn standard_normal_entropy_from_samples() {
        let g = GaussianDensity::univariate(0.0, 1.0).unwrap();
        let e = sample(&g, 100_000, 21).unwrap();
        let h = kl_entropy(&e, DEFAULT_K).unwrap();
        assert!((h - g.entropy()).abs() < 0.02, "h = {h}");
    }

    #[test]
    fn two_dimensional_estimate() {
        let g = GaussianDensity::from_slices(&[0.0, 0.0], &[1.0, 0.5, 0.5, 2.0]).unwrap();
        let e = sample(&g, 50_000, 4).unwrap();
        let h = kl_entropy(&e, DEFAULT_K).unwrap();
        assert!((h - g.entropy()).abs() < 0.03, "h = {h} vs {}", g.entropy());
    }

    #[test]
    fn too_few_particles() {
        let e = ParticleEnsemble::uniform(vec![0.0, 1.0, 2.0], 1).unwrap();
        assert!(kl_entropy(&e, 3).is_err());
        let dup = ParticleEnsemble::uniform(vec![0.0, 0.0, 0.0, 0.0, 1.0], 1).unwrap();
        assert!(matches!(kl_entropy(&dup, 3), Err(Error::Degenerate(_))));
    }
}
