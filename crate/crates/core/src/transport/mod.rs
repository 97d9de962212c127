//! Wasserstein-2 distances, optimal couplings and displacement geodesics.
//!
//! Costs are squared Euclidean throughout. Functions named `w2_*` return the
//! distance W₂; the squared value is what every ledger and report carries.

mod exact;
mod gaussian;
mod geodesic;
mod quantile;
mod sinkhorn;

use serde::{Deserialize, Serialize};

pub use exact::{w2_discrete_exact, EXACT_MAX_ATOMS};
pub use gaussian::{bures_map, w2_gaussian, w2_squared_gaussian};
pub use geodesic::{mccann_discrete, mccann_interpolate, path_action, GeodesicPath, InterpolationRule};
pub use quantile::{gaussian_quantile_atoms, w2_1d, QuantileFunction};
pub use sinkhorn::{sinkhorn, SinkhornOptions, SinkhornOutcome};

use crate::ensemble::{DensityState, ParticleEnsemble};
use crate::error::{check_dim, Error, Result};
use crate::numeric::NeumaierSum;

/// Marginal tolerance of a plan.
pub const PLAN_MARGINAL_TOL: f64 = 1e-9;

/// W₂ solver selection. Ordered from most to least precise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Gaussian,
    Quantile,
    Exact,
    Sinkhorn,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::Gaussian, Backend::Quantile, Backend::Exact, Backend::Sinkhorn];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Gaussian => "gaussian",
            Backend::Quantile => "quantile",
            Backend::Exact => "exact",
            Backend::Sinkhorn => "sinkhorn",
        }
    }

    /// Whether this backend can compare `a` with `b` as given.
    pub fn applies(self, a: &DensityState, b: &DensityState) -> bool {
        use DensityState::*;
        if a.dim() != b.dim() {
            return false;
        }
        match self {
            Backend::Gaussian => matches!((a, b), (Gaussian(_), Gaussian(_))),
            Backend::Quantile => a.dim() == 1 && !matches!(a, Gaussian(_)) && !matches!(b, Gaussian(_)),
            Backend::Exact => match (a, b) {
                (Particles(x), Particles(y)) => x.len() <= EXACT_MAX_ATOMS && y.len() <= EXACT_MAX_ATOMS,
                _ => false,
            },
            Backend::Sinkhorn => matches!((a, b), (Particles(_), Particles(_))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown backend '{s}' (expected gaussian, quantile, exact or sinkhorn)")))
    }
}

/// A coupling between two weighted point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub dim: usize,
    /// Source support, row-major `rows × dim`.
    pub source: Vec<f64>,
    /// Target support, row-major `cols × dim`.
    pub target: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// Dense coupling, row-major `rows × cols`.
    pub coupling: Vec<f64>,
    /// Σᵢⱼ πᵢⱼ |xᵢ − yⱼ|².
    pub cost: f64,
}

impl TransportPlan {
    pub(crate) fn from_coupling(a: &ParticleEnsemble, b: &ParticleEnsemble, coupling: Vec<f64>) -> Self {
        let mut plan = Self {
            dim: a.dim(),
            source: a.positions().to_vec(),
            target: b.positions().to_vec(),
            rows: a.len(),
            cols: b.len(),
            coupling,
            cost: 0.0,
        };
        plan.cost = plan.recompute_cost();
        plan
    }

    pub fn source_point(&self, i: usize) -> &[f64] {
        &self.source[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target_point(&self, j: usize) -> &[f64] {
        &self.target[j * self.dim..(j + 1) * self.dim]
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.cols + j]
    }

    /// Nonzero entries `(i, j, mass)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.coupling
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(move |(k, m)| (k / self.cols, k % self.cols, *m))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.coupling.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.coupling.chunks(self.cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    pub fn recompute_cost(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for (i, j, m) in self.entries() {
            acc.add(m * sq_dist(self.source_point(i), self.target_point(j)));
        }
        acc.value()
    }

    /// Largest marginal deviation against the given weights.
    pub fn marginal_violation(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(self.rows, a.len())?;
        check_dim(self.cols, b.len())?;
        let rows = self.row_sums().iter().zip(a).map(|(r, w)| (r - w).abs()).fold(0.0, f64::max);
        let cols = self.col_sums().iter().zip(b).map(|(c, w)| (c - w).abs()).fold(0.0, f64::max);
        Ok(rows.max(cols))
    }

    /// Checks nonnegativity, marginals within 1e-9 and the recorded cost.
    pub fn validate(&self, a: &[f64], b: &[f64]) -> Result<()> {
        if self.coupling.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::invalid("coupling has negative or non-finite mass"));
        }
        let v = self.marginal_violation(a, b)?;
        if v > PLAN_MARGINAL_TOL {
            return Err(Error::invalid(format!("plan marginals deviate by {v:.3e}")));
        }
        let c = self.recompute_cost();
        if (c - self.cost).abs() > 1e-12 * c.max(1.0) {
            return Err(Error::invalid("plan cost does not match its coupling"));
        }
        Ok(())
    }
}

/// W₂² between two states with the requested backend.
///
/// Returns the squared distance and, for discrete backends, the plan.
pub fn w2_squared(a: &DensityState, b: &DensityState, backend: Backend) -> Result<(f64, Option<TransportPlan>)> {
    check_dim(a.dim(), b.dim())?;
    if !backend.applies(a, b) {
        return Err(Error::invalid(format!(
            "backend {backend} cannot compare {} with {} in dimension {}",
            a.kind_name(),
            b.kind_name(),
            a.dim()
        )));
    }
    use DensityState::*;
    match (backend, a, b) {
        (Backend::Gaussian, Gaussian(x), Gaussian(y)) => Ok((w2_squared_gaussian(x, y)?, None)),
        (Backend::Quantile, _, _) => {
            let qa = QuantileFunction::from_state(a)?;
            let qb = QuantileFunction::from_state(b)?;
            Ok((qa.w2_squared(&qb), None))
        }
        (Backend::Exact, Particles(x), Particles(y)) => {
            let (_, plan) = w2_discrete_exact(x, y)?;
            Ok((plan.cost, Some(plan)))
        }
        (Backend::Sinkhorn, Particles(x), Particles(y)) => {
            let out = sinkhorn(x, y, &SinkhornOptions::default())?;
            Ok((out.plan.cost, Some(out.plan)))
        }
        _ => unreachable!("applicability checked above"),
    }
}

/// The most precise backend able to compare `a` and `b`.
pub fn preferred_backend(a: &DensityState, b: &DensityState) -> Option<Backend> {
    Backend::ALL.into_iter().find(|k| k.applies(a, b))
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Dense squared-distance matrix, row-major.
pub(crate) fn cost_matrix(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for i in 0..a.len() {
        let x = a.point(i);
        c.extend((0..b.len()).map(|j| sq_dist(x, b.point(j))));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::GaussianDensity;

    #[test]
    fn backend_names_round_trip() {
        for b in Backend::ALL {
            assert_eq!(b.name().parse::<Backend>().unwrap(), b);
            assert_eq!(serde_json::to_string(&b).unwrap(), format!("\"{}\"", b.name()));
        }
        assert!("emd".parse::<Backend>().is_err());
    }

    #[test]
    fn preference_order() {
        let g: DensityState = GaussianDensity::univariate(0.0, 1.0).unwrap().into();
        assert_eq!(preferred_backend(&g, &g), Some(Backend::Gaussian));
        let p: DensityState = ParticleEnsemble::uniform(vec![0.0, 1.0], 1).unwrap().into();
        assert_eq!(preferred_backend(&p, &p), Some(Backend::Quantile));
        let p2: DensityState = ParticleEnsemble::uniform(vec![0.0, 1.0, 2.0, 3.0], 2).unwrap().into();
        assert_eq!(preferred_backend(&p2, &p2), Some(Backend::Exact));
        assert_eq!(preferred_backend(&g, &p), None);
    }

    #[test]
    fn inapplicable_backend_is_input_error() {
        let g: DensityState = GaussianDensity::univariate(0.0, 1.0).unwrap().into();
        assert!(matches!(w2_squared(&g, &g, Backend::Exact), Err(Error::InvalidInput(_))));
    }
}
