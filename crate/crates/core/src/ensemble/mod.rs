//! Ensemble states q(θ) in particle, grid and Gaussian form.

mod gaussian;
mod grid;
pub mod knn;
mod particles;

use serde::{Deserialize, Serialize};

pub use gaussian::{spd_sqrt, GaussianDensity, GaussianSpec};
pub use grid::{grid_from_gaussian, Axis, GridDensity, DENSITY_FLOOR, LOG_CLAMP_RELATIVE, MAX_GRID_DIM};
pub use particles::{sample, ParticleEnsemble};

use crate::error::{Error, Result};
use crate::landscape::Potential;
use crate::rng::CounterRng;

/// The ensemble state q_s.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityState {
    Particles(ParticleEnsemble),
    Grid(GridDensity),
    Gaussian(GaussianDensity),
}

impl DensityState {
    pub fn dim(&self) -> usize {
        match self {
            DensityState::Particles(e) => e.dim(),
            DensityState::Grid(g) => g.dim(),
            DensityState::Gaussian(g) => g.dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DensityState::Particles(_) => "particles",
            DensityState::Grid(_) => "grid",
            DensityState::Gaussian(_) => "gaussian",
        }
    }

    /// Differential entropy H[q]: closed form for Gaussians, midpoint
    /// quadrature for grids, Kozachenko-Leonenko (k = 3) for particles.
    /// May be negative.
    pub fn entropy(&self) -> Result<f64> {
        match self {
            DensityState::Particles(e) => knn::kl_entropy(e, knn::DEFAULT_K),
            DensityState::Grid(g) => Ok(g.entropy()),
            DensityState::Gaussian(g) => Ok(g.entropy()),
        }
    }

    /// E_q[Φ].
    pub fn expectation(&self, p: &Potential) -> Result<f64> {
        match self {
            DensityState::Particles(e) => e.expectation(p),
            DensityState::Grid(g) => g.expectation(p),
            DensityState::Gaussian(g) => g.expectation(p),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            DensityState::Particles(e) => e.mean(),
            DensityState::Grid(g) => g.mean(),
            DensityState::Gaussian(g) => g.mean().iter().copied().collect(),
        }
    }

    /// Row-major covariance matrix.
    pub fn covariance(&self) -> Vec<f64> {
        match self {
            DensityState::Particles(e) => e.covariance(),
            DensityState::Grid(g) => g.covariance(),
            DensityState::Gaussian(g) => g.covariance().transpose().iter().copied().collect(),
        }
    }

    pub fn translated(&self, shift: &[f64]) -> Result<DensityState> {
        Ok(match self {
            DensityState::Particles(e) => DensityState::Particles(e.translated(shift)?),
            DensityState::Grid(g) => DensityState::Grid(g.translated(shift)?),
            DensityState::Gaussian(g) => DensityState::Gaussian(g.translated(shift)?),
        })
    }
}

impl From<ParticleEnsemble> for DensityState {
    fn from(e: ParticleEnsemble) -> Self {
        DensityState::Particles(e)
    }
}

impl From<GridDensity> for DensityState {
    fn from(g: GridDensity) -> Self {
        DensityState::Grid(g)
    }
}

impl From<GaussianDensity> for DensityState {
    fn from(g: GaussianDensity) -> Self {
        DensityState::Gaussian(g)
    }
}

/// One weighted component of a Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub gaussian: GaussianSpec,
}

/// Finite Gaussian mixture, used to build multimodal initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianDensity>,
}

impl GaussianMixture {
    pub fn new(components: &[MixtureComponent]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight > 0.0) || !c.weight.is_finite()) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        let comps = components
            .iter()
            .map(|c| GaussianDensity::from_spec(&c.gaussian))
            .collect::<Result<Vec<_>>>()?;
        let d = comps[0].dim();
        if comps.iter().any(|c| c.dim() != d) {
            return Err(Error::invalid("mixture components differ in dimension"));
        }
        Ok(Self {
            weights: components.iter().map(|c| c.weight / total).collect(),
            components: comps,
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, &GaussianDensity)> {
        self.weights.iter().copied().zip(&self.components)
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.components().map(|(w, g)| w * g.pdf(x)).sum()
    }

    /// Rasterises the mixture, applying the single-Gaussian guards per component.
    pub fn to_grid(&self, axes: &[Axis]) -> Result<GridDensity> {
        for g in &self.components {
            grid_from_gaussian(g, axes)?;
        }
        GridDensity::from_fn(axes.to_vec(), |x| self.pdf(x))?.normalize()
    }

    /// Draws `n` particles; the component of particle i is chosen from its own
    /// counter stream so results are independent of scheduling.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ParticleEnsemble> {
        if self.components.len() == 1 {
            return sample(&self.components[0], n, seed);
        }
        let d = self.dim();
        let draws: Vec<ParticleEnsemble> = self
            .components
            .iter()
            .enumerate()
            .map(|(c, g)| sample(g, n, seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(c as u64 + 1))))
            .collect::<Result<_>>()?;
        let pick = CounterRng::new(seed ^ 0xA5A5_5A5A_0F0F_F0F0);
        let mut positions = Vec::with_capacity(n * d);
        for i in 0..n {
            let u = pick.uniforms(i as u64, 0)[0];
            let mut acc = 0.0;
            let mut chosen = self.weights.len() - 1;
            for (c, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = c;
                    break;
                }
            }
            positions.extend_from_slice(draws[chosen].point(i));
        }
        ParticleEnsemble::new(positions, d, vec![1.0 / n as f64; n], seed)
    }

    /// The single component when the mixture is one Gaussian.
    pub fn as_gaussian(&self) -> Option<&GaussianDensity> {
        (self.components.len() == 1).then(|| &self.components[0])
    }
}
