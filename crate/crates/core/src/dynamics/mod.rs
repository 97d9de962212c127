//! Time evolution of ensemble states.
//!
//! All dynamics run in physical time τ ∈ [0, 𝒯]; snapshots are labelled by the
//! normalised time s = τ/𝒯. Entropy-production rates stored on snapshots use
//! the normalised convention σ_s = 𝒯² ∫ q |v_τ|² dθ, so that ∫₀¹ σ_s ds is the
//! action of the path in normalised time.

mod fokker_planck;
mod langevin;
mod ou;
mod velocity;

use serde::{Deserialize, Serialize};

pub use fokker_planck::{cfl_time_step, fp_step, simulate_fokker_planck, FokkerPlanckSolver};
pub use langevin::{langevin_step, simulate_langevin};
pub use ou::{simulate_ou, OuProcess};
pub use velocity::{velocity_field, VelocityField};

use crate::ensemble::DensityState;
use crate::error::{Error, Result};
use crate::landscape::Potential;
use crate::thermo::ThermoReport;

/// Integration horizon and recording cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub horizon: f64,
    pub steps: usize,
    pub record_every: usize,
}

impl Schedule {
    pub fn new(horizon: f64, steps: usize, record_every: usize) -> Result<Self> {
        let s = Self { horizon, steps, record_every };
        s.validate()?;
        Ok(s)
    }

    /// `steps` chosen so that dt does not exceed `max_dt`, with roughly
    /// `records` recorded intervals.
    pub fn with_max_dt(horizon: f64, max_dt: f64, records: usize) -> Result<Self> {
        if !(max_dt > 0.0) {
            return Err(Error::invalid("maximum time step must be > 0"));
        }
        let steps = ((horizon / max_dt).ceil() as usize).max(1);
        let record_every = (steps / records.max(1)).max(1);
        Self::new(horizon, steps, record_every)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be >= 1"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be >= 1"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Normalised time of a step index.
    pub fn s_of(&self, step: usize) -> f64 {
        step as f64 / self.steps as f64
    }

    /// Steps at which snapshots are taken; always contains 0 and `steps`.
    pub fn record_steps(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.steps).step_by(self.record_every).collect();
        out.push(self.steps);
        out
    }
}

/// One recorded state with its thermodynamic bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub s: f64,
    pub state: DensityState,
    pub thermo: ThermoReport,
    /// Normalised entropy-production rate σ_s, when computable.
    pub sigma: Option<f64>,
}

/// Time-ordered snapshots of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub snapshots: Vec<Snapshot>,
    pub schedule: Schedule,
    pub temperature: f64,
    pub potential: Potential,
    /// Present for closed-form Gaussian (OU) runs.
    pub closed_form: Option<OuProcess>,
}

impl TrajectoryRecord {
    pub fn horizon(&self) -> f64 {
        self.schedule.horizon
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.s).collect()
    }

    /// σ_s at every snapshot, or `None` if any snapshot lacks it.
    pub fn sigma_series(&self) -> Option<Vec<f64>> {
        self.snapshots.iter().map(|s| s.sigma).collect()
    }

    pub fn first(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        &self.snapshots[self.snapshots.len() - 1]
    }

    /// Checks the ordering invariants: s strictly increasing from 0 to 1 and
    /// σ ≥ 0.
    pub fn validate(&self) -> Result<()> {
        if self.snapshots.len() < 2 {
            return Err(Error::Resolution("a trajectory needs at least two snapshots".into()));
        }
        if self.snapshots.windows(2).any(|w| !(w[1].s > w[0].s)) {
            return Err(Error::invalid("snapshot times must be strictly increasing"));
        }
        if self.first().s != 0.0 || self.last().s != 1.0 {
            return Err(Error::invalid("snapshots must start at s = 0 and end at s = 1"));
        }
        if self.snapshots.iter().any(|s| s.sigma.is_some_and(|v| !(v >= 0.0))) {
            return Err(Error::invalid("entropy production must be nonnegative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_records_endpoints() {
        let s = Schedule::new(2.0, 10, 3).unwrap();
        assert_eq!(s.record_steps(), vec![0, 3, 6, 9, 10]);
        assert_eq!(Schedule::new(1.0, 9, 3).unwrap().record_steps(), vec![0, 3, 6, 9]);
        assert!((s.dt() - 0.2).abs() < 1e-15);
        assert_eq!(s.s_of(10), 1.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(0.0, 10, 1).is_err());
        assert!(Schedule::new(1.0, 0, 1).is_err());
        assert!(Schedule::new(1.0, 10, 0).is_err());
        let s = Schedule::with_max_dt(1.0, 0.003, 10).unwrap();
        assert!(s.dt() <= 0.003);
        assert_eq!(s.steps, 334);
    }
}
