use rayon::prelude::*;

use super::gaussian::GaussianDensity;
use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::numeric::{compensated_sum, NeumaierSum};
use crate::rng::{CounterRng, SAMPLING_TAG};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weighted point cloud; positions are stored row-major (`n × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    dim: usize,
    weights: Vec<f64>,
    seed_provenance: u64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, dim: usize, weights: Vec<f64>, seed_provenance: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("particle dimension must be positive"));
        }
        if positions.len() % dim != 0 {
            return Err(Error::invalid("position buffer is not a multiple of the dimension"));
        }
        let n = positions.len() / dim;
        if n < 2 {
            return Err(Error::invalid(format!("an ensemble needs at least two particles, got {n}")));
        }
        check_dim(n, weights.len())?;
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("particle positions must be finite"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("particle weights must be finite and nonnegative"));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("particle weights sum to {total}, not 1")));
        }
        Ok(Self { positions, dim, weights, seed_provenance })
    }

    /// Equal weights 1/n.
    pub fn uniform(positions: Vec<f64>, dim: usize) -> Result<Self> {
        let n = if dim == 0 { 0 } else { positions.len() / dim };
        Self::new(positions, dim, vec![1.0 / n.max(1) as f64; n], 0)
    }

    /// Positions and unnormalised weights; weights are rescaled to sum to 1.
    pub fn weighted(positions: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        let total = compensated_sum(weights.iter().copied());
        if !(total > 0.0) {
            return Err(Error::Degenerate("particle weights carry no mass".into()));
        }
        Self::new(positions, dim, weights.iter().map(|w| w / total).collect(), 0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn seed_provenance(&self) -> u64 {
        self.seed_provenance
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-15)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![NeumaierSum::new(); self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (a, x) in self.point(i).iter().enumerate() {
                acc[a].add(w * x);
            }
        }
        acc.iter().map(NeumaierSum::value).collect()
    }

    /// Weighted (biased) covariance, row-major d×d.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let m = self.mean();
        let mut acc = vec![NeumaierSum::new(); d * d];
        for (i, w) in self.weights.iter().enumerate() {
            let x = self.point(i);
            for a in 0..d {
                for b in 0..d {
                    acc[a * d + b].add(w * (x[a] - m[a]) * (x[b] - m[b]));
                }
            }
        }
        acc.iter().map(NeumaierSum::value).collect()
    }

    /// Weighted mean of Φ over the particles.
    pub fn expectation(&self, p: &Potential) -> Result<f64> {
        check_dim(p.dim(), self.dim)?;
        let values: Vec<f64> = self
            .positions
            .par_chunks(self.dim)
            .map(|x| p.value_unchecked(x))
            .collect();
        Ok(compensated_sum(values.iter().zip(&self.weights).map(|(v, w)| v * w)))
    }

    pub fn translated(&self, shift: &[f64]) -> Result<ParticleEnsemble> {
        check_dim(self.dim, shift.len())?;
        let mut out = self.clone();
        for x in out.positions.chunks_mut(self.dim) {
            for (xi, s) in x.iter_mut().zip(shift) {
                *xi += s;
            }
        }
        Ok(out)
    }
}

/// Draws `n` particles from `g`. Particle `i` uses counter stream `i`, so the
/// result depends only on `(g, n, seed)`.
pub fn sample(g: &GaussianDensity, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n < 2 {
        return Err(Error::invalid("sampling needs n >= 2"));
    }
    let d = g.dim();
    let rng = CounterRng::new(seed);
    let l = g.cholesky();
    let mean = g.mean();
    let mut positions = vec![0.0; n * d];
    positions.par_chunks_mut(d).enumerate().for_each(|(i, x)| {
        let mut z = vec![0.0; d];
        rng.fill_normals(i as u64, SAMPLING_TAG, &mut z);
        for a in 0..d {
            let mut v = mean[a];
            for b in 0..=a {
                v += l[(a, b)] * z[b];
            }
            x[a] = v;
        }
    });
    ParticleEnsemble::new(positions, d, vec![1.0 / n as f64; n], seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_construction() {
        assert!(ParticleEnsemble::uniform(vec![0.0], 1).is_err());
        assert!(ParticleEnsemble::new(vec![0.0, 1.0], 1, vec![0.6, 0.6], 0).is_err());
        assert!(ParticleEnsemble::new(vec![0.0, 1.0], 1, vec![-0.5, 1.5], 0).is_err());
        assert!(ParticleEnsemble::new(vec![0.0, 1.0, 2.0], 2, vec![1.0], 0).is_err());
        let e = ParticleEnsemble::weighted(vec![0.0, 1.0], 1, vec![1.0, 3.0]).unwrap();
        assert_eq!(e.weights(), &[0.25, 0.75]);
        assert!((e.mean()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = GaussianDensity::univariate(0.0, 1.0).unwrap();
        let a = sample(&g, 1000, 5).unwrap();
        let b = sample(&g, 1000, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.positions(), sample(&g, 1000, 6).unwrap().positions());
    }

    #[test]
    fn sample_mean_within_clt_band() {
        let g = GaussianDensity::univariate(0.0, 1.0).unwrap();
        let e = sample(&g, 100_000, 11).unwrap();
        assert!(e.mean()[0].abs() < 0.02);
    }

    #[test]
    fn sample_covariance_2d() {
        let cov = [1.5, -0.6, -0.6, 0.8];
        let g = GaussianDensity::from_slices(&[1.0, -2.0], &cov).unwrap();
        let e = sample(&g, 100_000, 3).unwrap();
        let c = e.covariance();
        let diff: f64 = c.iter().zip(&cov).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = cov.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff / norm < 0.05, "relative Frobenius error {}", diff / norm);
    }

    #[test]
    fn expectation_is_weighted_mean() {
        let p = Potential::quadratic(2.0, 1).unwrap();
        let e = ParticleEnsemble::weighted(vec![1.0, 3.0], 1, vec![3.0, 1.0]).unwrap();
        assert!((e.expectation(&p).unwrap() - (0.75 * 1.0 + 0.25 * 9.0)).abs() < 1e-15);
    }
}
