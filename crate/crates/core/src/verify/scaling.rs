use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{endpoint_distances, Mode, ScenarioConfig, DEFAULT_GEODESIC_INTERVALS};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::numeric::trapezoid;
use crate::thermo::accumulate_sigma;
use crate::transport::GeodesicPath;

/// Which path a scaling row measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    /// The base run's normalised path traversed over 𝒯: Φ and T are both
    /// multiplied by 𝒯₀/𝒯, which leaves q_s unchanged.
    Normalized,
    /// The base potential and temperature run for physical time 𝒯.
    FixedPotential,
    /// The endpoint geodesic traversed over 𝒯.
    Geodesic,
}

impl PathKind {
    pub fn name(self) -> &'static str {
        match self {
            PathKind::Normalized => "normalized",
            PathKind::FixedPotential => "fixed-potential",
            PathKind::Geodesic => "geodesic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub horizon: f64,
    pub path: PathKind,
    /// Σ_{0:𝒯}, the action in physical time.
    #[serde(rename = "Sigma_physical")]
    pub sigma_physical: f64,
    #[serde(rename = "Sigma_physical_x_horizon")]
    pub action_times_horizon: f64,
    #[serde(rename = "W2_squared_over_horizon")]
    pub w2_over_horizon: f64,
    #[serde(rename = "F_drop")]
    pub f_drop: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Physical action × 𝒯 of the first normalised (or geodesic) row.
    pub reference: f64,
    /// Allowed relative spread of action × 𝒯 around `reference`.
    pub tolerance: f64,
    pub pass: bool,
}

impl ScalingTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("horizon,Sigma_physical,Sigma_physical_x_horizon,W2_squared_over_horizon,F_drop,pass,path\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_f64(r.horizon),
                fmt_f64(r.sigma_physical),
                fmt_f64(r.action_times_horizon),
                fmt_f64(r.w2_over_horizon),
                r.f_drop.map(fmt_f64).unwrap_or_default(),
                r.pass,
                r.path.name()
            ));
        }
        out
    }
}

struct Measured {
    horizon: f64,
    path: PathKind,
    sigma_physical: f64,
    w2: f64,
    f_drop: Option<f64>,
}

/// Measures physical action over each horizon.
///
/// Dynamics scenarios contribute one normalised-path row per horizon (its
/// action × 𝒯 must be constant) and one fixed-potential row per horizon
/// different from the base one; every row must satisfy F_drop ≥ W₂²/𝒯.
/// Geodesic scenarios contribute one row per horizon.
pub fn check_time_scaling(cfg: &ScenarioConfig, horizons: &[f64]) -> Result<ScalingTable> {
    if horizons.is_empty() {
        return Err(Error::invalid("horizons: need at least one"));
    }
    if let Some(h) = horizons.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        return Err(Error::invalid(format!("horizons: must be > 0, got {h}")));
    }
    let prepared = cfg.prepare()?;
    let base = &prepared.config;
    let tol = base.tolerances();
    let measured: Vec<Measured> = match base.mode {
        Mode::Geodesic => {
            let q1 = prepared.q1.as_ref().ok_or_else(|| Error::invalid("target: required"))?;
            let k = base.geodesic_intervals.unwrap_or(DEFAULT_GEODESIC_INTERVALS).max(2);
            let path = GeodesicPath::uniform(&prepared.q0, q1, k)?;
            let w2 = path.w2_squared()?;
            let sigma_s = path.times.iter().map(|&s| path.sigma_at(s)).collect::<Result<Vec<_>>>()?;
            horizons
                .iter()
                .map(|&h| {
                    // Physical time τ = s𝒯 carries velocity v_s / 𝒯.
                    let tau: Vec<f64> = path.times.iter().map(|s| s * h).collect();
                    let rate: Vec<f64> = sigma_s.iter().map(|v| v / (h * h)).collect();
                    Measured { horizon: h, path: PathKind::Geodesic, sigma_physical: trapezoid(&tau, &rate), w2, f_drop: None }
                })
                .collect()
        }
        Mode::Dynamics => {
            let mut jobs: Vec<(f64, PathKind)> = horizons.iter().map(|&h| (h, PathKind::Normalized)).collect();
            jobs.extend(horizons.iter().filter(|&&h| h != base.horizon).map(|&h| (h, PathKind::FixedPotential)));
            jobs.par_iter()
                .map(|&(h, kind)| {
                    let run = rescaled(base, h, kind)?;
                    let traj = run.prepare()?.simulate()?;
                    let ledger = accumulate_sigma(&traj)?;
                    let (chosen, d) = endpoint_distances(&traj.first().state, &traj.last().state, &base.backends)?;
                    Ok(Measured {
                        horizon: h,
                        path: kind,
                        sigma_physical: ledger.sigma_physical,
                        w2: d[chosen.name()],
                        f_drop: Some(ledger.f_drop),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e: Error| e.context("time scaling"))?
        }
    };
    let reference = measured[0].sigma_physical * measured[0].horizon;
    let spread = tol.scaling * reference.abs().max(1.0);
    let rows: Vec<ScalingRow> = measured
        .iter()
        .map(|m| {
            let action_times_horizon = m.sigma_physical * m.horizon;
            let w2_over_horizon = m.w2 / m.horizon;
            let allowance = tol.esl_allowance(w2_over_horizon);
            // The bound is on F_drop for dynamics and on the action itself for geodesics.
            let lhs = m.f_drop.unwrap_or(m.sigma_physical);
            let bound_ok = lhs >= w2_over_horizon - allowance;
            let constant_ok = m.path == PathKind::FixedPotential || (action_times_horizon - reference).abs() <= spread;
            ScalingRow {
                horizon: m.horizon,
                path: m.path,
                sigma_physical: m.sigma_physical,
                action_times_horizon,
                w2_over_horizon,
                f_drop: m.f_drop,
                pass: bound_ok && constant_ok,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(ScalingTable { rows, reference, tolerance: tol.scaling, pass })
}

/// The base scenario traversed over horizon `h`.
fn rescaled(base: &ScenarioConfig, h: f64, kind: PathKind) -> Result<ScenarioConfig> {
    let mut c = base.clone();
    c.horizons.clear();
    c.horizon = h;
    let steps = base.integrator.steps.unwrap_or(1);
    let every = base.record_every.unwrap_or(1);
    match kind {
        PathKind::Normalized => {
            let r = base.horizon / h;
            c.temperature = base.temperature * r;
            c.potential = Some(base.potential()?.scaled(r)?);
        }
        PathKind::FixedPotential => {
            let records = (steps / every).max(1);
            let new_steps = ((steps as f64) * h / base.horizon).ceil() as usize;
            c.integrator.steps = Some(new_steps.max(1));
            c.record_every = Some((new_steps / records).max(1));
        }
        PathKind::Geodesic => unreachable!("geodesic rows are measured directly"),
    }
    Ok(c)
}
