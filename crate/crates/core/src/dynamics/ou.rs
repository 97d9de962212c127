//! Closed-form Gaussian solutions for quadratic potentials (Ornstein-Uhlenbeck).

use nalgebra::DMatrix;

use super::velocity::VelocityField;
use super::{Schedule, Snapshot, TrajectoryRecord};
use crate::ensemble::{DensityState, GaussianDensity};
use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::numeric::integrate;
use crate::thermo::free_energy;

/// OU flow from a Gaussian initial state:
/// m(τ) = e^{−kτ} m₀,  V(τ) = e^{−2kτ} V₀ + (T/k)(1 − e^{−2kτ}) I.
#[derive(Debug, Clone, PartialEq)]
pub struct OuProcess {
    pub stiffness: f64,
    pub temperature: f64,
    pub initial: GaussianDensity,
    pub horizon: f64,
}

impl OuProcess {
    pub fn new(initial: GaussianDensity, p: &Potential, temperature: f64, horizon: f64) -> Result<Self> {
        check_dim(p.dim(), initial.dim())?;
        let stiffness = p
            .stiffness()
            .ok_or_else(|| Error::unsupported("closed-form Gaussian dynamics need a quadratic potential"))?;
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::invalid("temperature must be >= 0"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon must be > 0"));
        }
        Ok(Self { stiffness, temperature, initial, horizon })
    }

    /// State at physical time τ.
    pub fn state_at_time(&self, tau: f64) -> Result<GaussianDensity> {
        let d = self.initial.dim();
        let decay = (-self.stiffness * tau).exp();
        let mean = self.initial.mean() * decay;
        let relax = -(-2.0 * self.stiffness * tau).exp_m1();
        let cov = self.initial.covariance() * (decay * decay)
            + DMatrix::identity(d, d) * (self.temperature / self.stiffness * relax);
        GaussianDensity::new(mean, cov)
    }

    /// State at normalised time s.
    pub fn state_at(&self, s: f64) -> Result<GaussianDensity> {
        self.state_at_time(s * self.horizon)
    }

    /// Physical-time velocity field at normalised time s.
    pub fn velocity_at(&self, s: f64) -> Result<VelocityField> {
        VelocityField::gaussian_ou(&self.state_at(s)?, self.stiffness, self.temperature)
    }

    /// Normalised entropy-production rate σ_s = 𝒯² ∫ q |v_τ|².
    pub fn sigma_at(&self, s: f64) -> Result<f64> {
        let g = self.state_at(s)?;
        Ok(self.horizon * self.horizon * self.velocity_at(s)?.gaussian_action_rate(&g)?)
    }

    /// ∫₀¹ σ_s ds by composite Gauss-Legendre quadrature of the closed-form rate.
    pub fn total_sigma(&self) -> Result<f64> {
        // Rates decay like e^{−2k𝒯 s}; scale the panel count with k𝒯.
        let panels = (64.0 * (1.0 + self.stiffness * self.horizon)).ceil() as usize;
        let mut err = None;
        let v = integrate(
            |s| match self.sigma_at(s) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            },
            0.0,
            1.0,
            panels.min(4096),
            12,
        );
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

/// Closed-form OU trajectory sampled at the schedule's record steps.
pub fn simulate_ou(g0: &GaussianDensity, p: &Potential, temperature: f64, sched: &Schedule) -> Result<TrajectoryRecord> {
    sched.validate()?;
    let process = OuProcess::new(g0.clone(), p, temperature, sched.horizon)?;
    let snapshots = sched
        .record_steps()
        .into_iter()
        .map(|step| {
            let s = sched.s_of(step);
            let state = DensityState::Gaussian(process.state_at(s)?);
            let thermo = free_energy(&state, p, temperature)?.at(s);
            Ok(Snapshot { s, state, thermo, sigma: Some(process.sigma_at(s)?) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryRecord {
        snapshots,
        schedule: *sched,
        temperature,
        potential: p.clone(),
        closed_form: Some(process),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relaxation_from_displaced_stationary_variance() {
        let p = Potential::quadratic(1.0, 1).unwrap();
        let g0 = GaussianDensity::univariate(2.0, 1.0).unwrap();
        let ou = OuProcess::new(g0, &p, 1.0, 1.0).unwrap();
        let g1 = ou.state_at(1.0).unwrap();
        assert!((g1.mean()[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((g1.covariance()[(0, 0)] - 1.0).abs() < 1e-15);
        // σ_s = k² μ_s² = 4 e^{−2s}; Σ = 2 (1 − e^{−2}).
        assert!((ou.sigma_at(0.5).unwrap() - 4.0 * (-1.0f64).exp()).abs() < 1e-13);
        assert!((ou.total_sigma().unwrap() - 2.0 * (1.0 - (-2.0f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn horizon_rescales_rates() {
        let p = Potential::quadratic(0.7, 1).unwrap();
        let g0 = GaussianDensity::univariate(-1.0, 0.4).unwrap();
        let a = OuProcess::new(g0.clone(), &p, 0.3, 1.0).unwrap();
        let b = OuProcess::new(g0, &p, 0.3, 2.0).unwrap();
        assert_eq!(a.state_at(1.0).unwrap(), b.state_at(0.5).unwrap());
        assert!((b.sigma_at(0.5).unwrap() - 4.0 * a.sigma_at(1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn requires_quadratic_potential() {
        let dw = Potential::double_well(1.0, 1).unwrap();
        let g0 = GaussianDensity::univariate(0.0, 1.0).unwrap();
        assert!(matches!(OuProcess::new(g0, &dw, 1.0, 1.0), Err(Error::Unsupported(_))));
    }
}
