//! Free energy, entropy production and their bookkeeping along trajectories.
//!
//! Entropy production follows the transport convention σ = ∫ q |v|² (no 1/T
//! factor).

use serde::{Deserialize, Serialize};

use crate::dynamics::{TrajectoryRecord, VelocityField};
use crate::ensemble::{DensityState, GridDensity};
use crate::error::{Error, Result};
use crate::landscape::Potential;
use crate::numeric::{trapezoid, NeumaierSum};

/// F = E_q[Φ] − T H[q] with its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoReport {
    #[serde(rename = "F")]
    pub free_energy: f64,
    #[serde(rename = "H")]
    pub entropy: f64,
    #[serde(rename = "E_phi")]
    pub mean_objective: f64,
    #[serde(rename = "T")]
    pub temperature: f64,
    pub at_s: f64,
}

impl ThermoReport {
    pub fn at(mut self, s: f64) -> Self {
        self.at_s = s;
        self
    }
}

pub fn free_energy(q: &DensityState, p: &Potential, temperature: f64) -> Result<ThermoReport> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be >= 0, got {temperature}")));
    }
    let mean_objective = q.expectation(p)?;
    let (entropy, free_energy) = if temperature == 0.0 {
        // The entropy term vanishes; particles may still carry a defined H.
        let h = q.entropy().unwrap_or(f64::NAN);
        (h, mean_objective)
    } else {
        let h = q.entropy()?;
        (h, mean_objective - temperature * h)
    };
    Ok(ThermoReport { free_energy, entropy, mean_objective, temperature, at_s: 0.0 })
}

/// σ = ∫ q |v|² dθ by midpoint quadrature on the density's grid.
pub fn entropy_production_rate(q: &GridDensity, v: &VelocityField) -> Result<f64> {
    let VelocityField::Grid { axes, dim, values } = v else {
        return Err(Error::unsupported("closed-form velocity with a grid density"));
    };
    if axes.as_slice() != q.axes() || *dim != q.dim() {
        return Err(Error::invalid("velocity field and density live on different grids"));
    }
    let mut acc = NeumaierSum::new();
    for (qi, vi) in q.values().iter().zip(values.chunks(*dim)) {
        acc.add(qi * vi.iter().map(|c| c * c).sum::<f64>());
    }
    Ok(acc.value() * q.cell_volume())
}

/// Accumulated entropy production and the free-energy balance of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationLedger {
    /// `(s, σ_s)` pairs in normalised time.
    pub sigma_series: Vec<[f64; 2]>,
    /// Σ_{0:1} = ∫₀¹ σ_s ds.
    #[serde(rename = "Sigma")]
    pub sigma_total: f64,
    pub horizon: f64,
    /// Σ_{0:𝒯} = Σ_{0:1} / 𝒯, the production in physical time.
    #[serde(rename = "Sigma_physical")]
    pub sigma_physical: f64,
    #[serde(rename = "F_drop")]
    pub f_drop: f64,
    /// |F_drop − Σ_{0:𝒯}|.
    pub residual: f64,
    pub quadrature: Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    Trapezoid,
    GaussLegendre,
}

/// Integrates σ_s over the record and balances it against F(q₀) − F(q₁).
///
/// Recorded rates are integrated with the trapezoidal rule; closed-form
/// Gaussian runs integrate their analytic rate with Gauss-Legendre.
pub fn accumulate_sigma(traj: &TrajectoryRecord) -> Result<DissipationLedger> {
    if traj.snapshots.len() < 2 {
        return Err(Error::Resolution("accumulating σ needs at least two snapshots".into()));
    }
    if traj.snapshots.windows(2).any(|w| !(w[1].s > w[0].s)) {
        return Err(Error::invalid("snapshot times must be strictly increasing"));
    }
    let sigma = traj
        .sigma_series()
        .ok_or_else(|| Error::unsupported("entropy production is not available for particle trajectories"))?;
    let times = traj.times();
    let (sigma_total, quadrature) = match &traj.closed_form {
        Some(ou) => (ou.total_sigma()?, Quadrature::GaussLegendre),
        None => (trapezoid(&times, &sigma), Quadrature::Trapezoid),
    };
    let horizon = traj.horizon();
    let sigma_physical = sigma_total / horizon;
    let f_drop = traj.first().thermo.free_energy - traj.last().thermo.free_energy;
    Ok(DissipationLedger {
        sigma_series: times.iter().zip(&sigma).map(|(s, v)| [*s, *v]).collect(),
        sigma_total,
        horizon,
        sigma_physical,
        f_drop,
        residual: (f_drop - sigma_physical).abs(),
        quadrature,
    })
}

/// The two terms of F(q₀) − F(q₁).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergySplit {
    /// E_{q₀}[Φ] − E_{q₁}[Φ]
    pub objective_drop: f64,
    /// T (H[q₀] − H[q₁])
    pub entropy_term: f64,
}

impl FreeEnergySplit {
    /// F(q₀) − F(q₁)
    pub fn total(&self) -> f64 {
        self.objective_drop - self.entropy_term
    }
}

pub fn decompose_free_energy(
    q0: &DensityState,
    q1: &DensityState,
    p: &Potential,
    temperature: f64,
) -> Result<FreeEnergySplit> {
    let a = free_energy(q0, p, temperature)?;
    let b = free_energy(q1, p, temperature)?;
    Ok(split_reports(&a, &b))
}

/// Decomposition from already computed reports.
pub fn split_reports(a: &ThermoReport, b: &ThermoReport) -> FreeEnergySplit {
    let entropy_term = if a.temperature == 0.0 { 0.0 } else { a.temperature * (a.entropy - b.entropy) };
    FreeEnergySplit { objective_drop: a.mean_objective - b.mean_objective, entropy_term }
}
