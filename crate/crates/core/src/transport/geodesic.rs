use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{bures_map, w2_discrete_exact, w2_squared_gaussian, QuantileFunction, TransportPlan};
use crate::dynamics::{TrajectoryRecord, VelocityField};
use crate::ensemble::{Axis, DensityState, GaussianDensity, GridDensity, ParticleEnsemble};
use crate::error::{check_dim, Error, Result};
use crate::numeric::{trapezoid, NeumaierSum};
use crate::thermo::accumulate_sigma;

/// Cells used to rasterise 1D geodesics when evaluating their action.
const ACTION_GRID_CELLS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationRule {
    GaussianClosedForm,
    Quantile1d,
    PlanDisplacement,
}

impl InterpolationRule {
    /// Rule for a pair of endpoints, if one exists.
    pub fn for_pair(q0: &DensityState, q1: &DensityState) -> Result<Self> {
        use DensityState::*;
        check_dim(q0.dim(), q1.dim())?;
        match (q0, q1) {
            (Gaussian(_), Gaussian(_)) => Ok(Self::GaussianClosedForm),
            (Grid(_), Grid(_)) if q0.dim() == 1 => Ok(Self::Quantile1d),
            (Particles(_), Particles(_)) => Ok(Self::PlanDisplacement),
            _ => Err(Error::invalid(format!(
                "no displacement interpolation between {} and {} in dimension {}",
                q0.kind_name(),
                q1.kind_name(),
                q0.dim()
            ))),
        }
    }

    /// Whether the rule is exact (closed form) rather than rasterised.
    pub fn is_closed_form(self) -> bool {
        !matches!(self, Self::Quantile1d)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Interpolant {
    Gaussian { g0: GaussianDensity, g1: GaussianDensity, map: DMatrix<f64> },
    Quantile { f0: QuantileFunction, f1: QuantileFunction, axis: Axis, endpoints: (GridDensity, GridDensity) },
    Plan(TransportPlan),
}

/// The constant-speed W₂ geodesic between two states, sampled at `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub rule: InterpolationRule,
    pub times: Vec<f64>,
    interp: Interpolant,
}

impl GeodesicPath {
    pub fn new(q0: &DensityState, q1: &DensityState, times: Vec<f64>) -> Result<Self> {
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid("geodesic sample times must increase within [0, 1]"));
        }
        let rule = InterpolationRule::for_pair(q0, q1)?;
        let interp = match (q0, q1) {
            (DensityState::Gaussian(g0), DensityState::Gaussian(g1)) => {
                Interpolant::Gaussian { g0: g0.clone(), g1: g1.clone(), map: bures_map(g0, g1)? }
            }
            (DensityState::Grid(a), DensityState::Grid(b)) => Interpolant::Quantile {
                f0: QuantileFunction::from_grid(a)?,
                f1: QuantileFunction::from_grid(b)?,
                axis: common_axis(a, b),
                endpoints: (a.clone(), b.clone()),
            },
            (DensityState::Particles(a), DensityState::Particles(b)) => Interpolant::Plan(w2_discrete_exact(a, b)?.1),
            _ => unreachable!("rule selection covers all pairs"),
        };
        Ok(Self { rule, times, interp })
    }

    /// Geodesic sampled at `k + 1` equally spaced times.
    pub fn uniform(q0: &DensityState, q1: &DensityState, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("need at least one interval"));
        }
        Self::new(q0, q1, (0..=k).map(|i| i as f64 / k as f64).collect())
    }

    /// W₂² between the endpoints under the path's own rule.
    pub fn w2_squared(&self) -> Result<f64> {
        match &self.interp {
            Interpolant::Gaussian { g0, g1, .. } => w2_squared_gaussian(g0, g1),
            Interpolant::Quantile { f0, f1, .. } => Ok(f0.w2_squared(f1)),
            Interpolant::Plan(plan) => Ok(plan.cost),
        }
    }

    /// q_s on the geodesic.
    pub fn state_at(&self, s: f64) -> Result<DensityState> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::invalid(format!("s must lie in [0, 1], got {s}")));
        }
        match &self.interp {
            Interpolant::Gaussian { g0, g1, map } => Ok(gaussian_at(g0, g1, map, s)?.into()),
            Interpolant::Quantile { f0, f1, axis, endpoints } => Ok(if s == 0.0 {
                endpoints.0.clone().into()
            } else if s == 1.0 {
                endpoints.1.clone().into()
            } else {
                f0.interpolate(f1, s).to_grid(*axis)?.into()
            }),
            Interpolant::Plan(plan) => Ok(mccann_discrete(plan, s)?.into()),
        }
    }

    /// Action rate ∫ q_s |v_s|² at normalised time s.
    pub fn sigma_at(&self, s: f64) -> Result<f64> {
        match &self.interp {
            Interpolant::Gaussian { g0, g1, map } => {
                // v_s(x) = (A − I) T_s⁻¹ (x − m_s) + Δm with T_s = (1 − s) I + s A.
                let d = g0.dim();
                let id = DMatrix::identity(d, d);
                let t_s = &id * (1.0 - s) + map * s;
                let t_inv = t_s
                    .try_inverse()
                    .ok_or_else(|| Error::Degenerate("displacement map is singular".into()))?;
                let matrix = (map - &id) * t_inv;
                let g_s = gaussian_at(g0, g1, map, s)?;
                let dm = g1.mean() - g0.mean();
                let offset = &dm - &matrix * g_s.mean();
                VelocityField::Affine { matrix, offset }.gaussian_action_rate(&g_s)
            }
            Interpolant::Quantile { f0, f1, .. } => quantile_sigma(f0, f1, s),
            Interpolant::Plan(plan) => {
                let mut acc = NeumaierSum::new();
                for (i, j, m) in plan.entries() {
                    let v: f64 = plan
                        .source_point(i)
                        .iter()
                        .zip(plan.target_point(j))
                        .map(|(x, y)| (y - x) * (y - x))
                        .sum();
                    acc.add(m * v);
                }
                Ok(acc.value())
            }
        }
    }

    /// Trapezoidal ∫₀¹ σ_s ds over the sample times.
    pub fn action(&self) -> Result<f64> {
        if self.times.len() < 3 {
            return Err(Error::Resolution("path action needs at least three sample times".into()));
        }
        if self.times[0] != 0.0 || self.times[self.times.len() - 1] != 1.0 {
            return Err(Error::invalid("geodesic sample times must span [0, 1]"));
        }
        let sigma = self.times.iter().map(|&s| self.sigma_at(s)).collect::<Result<Vec<_>>>()?;
        Ok(trapezoid(&self.times, &sigma))
    }
}

fn gaussian_at(g0: &GaussianDensity, g1: &GaussianDensity, map: &DMatrix<f64>, s: f64) -> Result<GaussianDensity> {
    if s == 0.0 {
        return Ok(g0.clone());
    }
    if s == 1.0 {
        return Ok(g1.clone());
    }
    let d = g0.dim();
    let t_s = DMatrix::identity(d, d) * (1.0 - s) + map * s;
    let cov = &t_s * g0.covariance() * &t_s;
    let mean = g0.mean() * (1.0 - s) + g1.mean() * s;
    GaussianDensity::new(mean, (&cov + cov.transpose()) * 0.5)
}

/// Eulerian rate on a fine grid: q_s is rasterised and the velocity at x is
/// Q₁(u) − Q₀(u) with u = F_s(x).
fn quantile_sigma(f0: &QuantileFunction, f1: &QuantileFunction, s: f64) -> Result<f64> {
    let fs = f0.interpolate(f1, s);
    let (lo, hi) = (fs.min(), fs.max());
    if !(hi > lo) {
        // A point mass moving rigidly.
        return Ok(f0.w2_squared(f1));
    }
    let axis = Axis::new(lo, hi, ACTION_GRID_CELLS)?;
    let q = fs.to_grid(axis)?;
    let w = axis.width();
    let mut acc = NeumaierSum::new();
    for (c, &rho) in q.values().iter().enumerate() {
        if rho > 0.0 {
            let u = fs.cdf(axis.center(c));
            let v = f1.eval(u) - f0.eval(u);
            acc.add(rho * w * v * v);
        }
    }
    Ok(acc.value())
}

fn common_axis(a: &GridDensity, b: &GridDensity) -> Axis {
    if a.same_grid(b) {
        return a.axes()[0];
    }
    let (x, y) = (a.axes()[0], b.axes()[0]);
    let lo = x.lo.min(y.lo);
    let hi = x.hi.max(y.hi);
    let width = x.width().min(y.width());
    Axis { lo, hi, cells: ((hi - lo) / width).round().max(1.0) as usize }
}

/// Displacement of plan atoms: each pair (xᵢ, yⱼ) with mass πᵢⱼ moves to
/// (1 − s) xᵢ + s yⱼ.
pub fn mccann_discrete(plan: &TransportPlan, s: f64) -> Result<ParticleEnsemble> {
    let mut positions = Vec::new();
    let mut weights = Vec::new();
    for (i, j, m) in plan.entries() {
        positions.extend(plan.source_point(i).iter().zip(plan.target_point(j)).map(|(x, y)| (1.0 - s) * x + s * y));
        weights.push(m);
    }
    ParticleEnsemble::weighted(positions, plan.dim, weights)
}

/// Point q_s on the W₂ geodesic from `q0` to `q1`.
pub fn mccann_interpolate(q0: &DensityState, q1: &DensityState, s: f64) -> Result<DensityState> {
    GeodesicPath::new(q0, q1, vec![0.0, 1.0])?.state_at(s)
}

/// Normalised action ∫₀¹ σ_s ds of a recorded trajectory.
pub fn path_action(traj: &TrajectoryRecord) -> Result<f64> {
    if traj.snapshots.len() < 3 {
        return Err(Error::Resolution(format!(
            "path action needs at least three snapshots, got {}",
            traj.snapshots.len()
        )));
    }
    Ok(accumulate_sigma(traj)?.sigma_total)
}
