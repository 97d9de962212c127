//! Checks of the dissipation identity, the speed limit Σ ≥ W₂², the
//! objective-improvement bound, geodesic tightness and finite-time scaling,
//! and the reports that collect them.

mod scaling;
mod scenario;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use scaling::{check_time_scaling, PathKind, ScalingRow, ScalingTable};
pub use scenario::{
    preset, random_ou_scenarios, GridSpec, InitialState, Integrator, Mode, Prepared, Representation, ScenarioConfig,
    ToleranceOverrides, DEFAULT_GEODESIC_INTERVALS, DEFAULT_PARTICLE_DT, DEFAULT_RECORDS, PRESETS, SUITE,
};

use crate::dynamics::TrajectoryRecord;
use crate::ensemble::DensityState;
use crate::error::{Error, Result};
use crate::thermo::{accumulate_sigma, split_reports, DissipationLedger, Quadrature};
use crate::transport::{w2_squared, Backend, GeodesicPath, InterpolationRule, EXACT_MAX_ATOMS};

/// Below this many snapshots a trapezoidal Σ is flagged as under-resolved.
pub const MIN_RESOLVED_SNAPSHOTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EslScale {
    /// Slack must exceed −tol.
    Absolute,
    /// Slack must exceed −tol · max(1, W₂²).
    RelativeToW2,
}

/// Tolerances of every check, recorded in each report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub esl: f64,
    pub esl_scale: EslScale,
    /// Relative to max(1, |F_drop|).
    pub dissipation: f64,
    pub tightness: f64,
    /// Relative spread allowed in physical action × 𝒯.
    pub scaling: f64,
}

impl Tolerances {
    /// Exact (closed-form or discrete-plan) computations.
    pub fn closed_form() -> Self {
        Self { esl: 1e-6, esl_scale: EslScale::Absolute, dissipation: 1e-9, tightness: 1e-6, scaling: 1e-6 }
    }

    /// Grid discretisations.
    pub fn grid() -> Self {
        Self { esl: 1e-2, esl_scale: EslScale::RelativeToW2, dissipation: 1e-2, tightness: 1e-3, scaling: 1e-2 }
    }

    pub fn with_overrides(mut self, o: &ToleranceOverrides) -> Self {
        if let Some(v) = o.esl {
            self.esl = v;
        }
        if let Some(v) = o.dissipation {
            self.dissipation = v;
        }
        self
    }

    /// How far below zero a slack may fall given the compared W₂².
    pub fn esl_allowance(&self, w2_squared: f64) -> f64 {
        match self.esl_scale {
            EslScale::Absolute => self.esl,
            EslScale::RelativeToW2 => self.esl * w2_squared.abs().max(1.0),
        }
    }

    /// Tightness tolerance for a geodesic built with `rule`.
    pub fn tightness_for(&self, rule: InterpolationRule) -> f64 {
        if rule.is_closed_form() {
            self.tightness.min(Self::closed_form().tightness)
        } else {
            self.tightness.max(Self::grid().tightness)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationCheck {
    pub ledger: DissipationLedger,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// |F(q₀) − F(q₁) − Σ_{0:𝒯}| against tol · max(1, |F_drop|).
pub fn check_dissipation(traj: &TrajectoryRecord, tol: &Tolerances) -> Result<DissipationCheck> {
    if matches!(traj.first().state, DensityState::Particles(_)) {
        return Err(Error::unsupported("the dissipation check needs a grid or closed-form trajectory"));
    }
    let ledger = accumulate_sigma(traj)?;
    let tolerance = tol.dissipation * ledger.f_drop.abs().max(1.0);
    Ok(DissipationCheck { residual: ledger.residual, pass: ledger.residual <= tolerance, tolerance, ledger })
}

/// W₂² between two states with every applicable backend in `preference`
/// order (most precise first when empty). The entropic backend is skipped
/// when the exact one applies.
pub fn endpoint_distances(
    q0: &DensityState,
    q1: &DensityState,
    preference: &[Backend],
) -> Result<(Backend, BTreeMap<String, f64>)> {
    let order: Vec<Backend> = if preference.is_empty() { Backend::ALL.to_vec() } else { preference.to_vec() };
    let applicable: Vec<Backend> = order.iter().copied().filter(|b| b.applies(q0, q1)).collect();
    let Some(&chosen) = applicable.first() else {
        let why = match (q0, q1) {
            (DensityState::Particles(a), DensityState::Particles(b))
                if a.len().max(b.len()) > EXACT_MAX_ATOMS && !order.contains(&Backend::Sinkhorn) =>
            {
                " (support too large for the exact solver)"
            }
            _ => "",
        };
        return Err(Error::invalid(format!(
            "no W2 backend among [{}] applies to {} vs {} in dimension {}{why}",
            order.iter().map(|b| b.name()).collect::<Vec<_>>().join(", "),
            q0.kind_name(),
            q1.kind_name(),
            q0.dim()
        )));
    };
    let mut distances = BTreeMap::new();
    for b in applicable {
        if b == Backend::Sinkhorn && chosen != Backend::Sinkhorn && Backend::Exact.applies(q0, q1) {
            continue;
        }
        let (d, _) = w2_squared(q0, q1, b).map_err(|e| e.context(format!("{b} backend")))?;
        distances.insert(b.name().to_string(), d);
    }
    Ok((chosen, distances))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EslCheck {
    #[serde(rename = "Sigma")]
    pub sigma: f64,
    #[serde(rename = "W2_squared")]
    pub w2_squared: f64,
    pub slack: f64,
    pub backend: Backend,
    /// W₂² keyed by backend name.
    pub distances: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub pass: bool,
}

fn esl_from(sigma: f64, q0: &DensityState, q1: &DensityState, tol: &Tolerances, pref: &[Backend]) -> Result<EslCheck> {
    let (backend, distances) = endpoint_distances(q0, q1, pref)?;
    let w2 = distances[backend.name()];
    let slack = sigma - w2;
    let tolerance = tol.esl_allowance(w2);
    Ok(EslCheck { sigma, w2_squared: w2, slack, backend, distances, tolerance, pass: slack >= -tolerance })
}

/// Σ_{0:1} − W₂(q₀, q₁)², with W₂ from the most precise applicable backend.
pub fn check_esl(traj: &TrajectoryRecord, tol: &Tolerances, preference: &[Backend]) -> Result<EslCheck> {
    let ledger = accumulate_sigma(traj)?;
    esl_from(ledger.sigma_total, &traj.first().state, &traj.last().state, tol, preference)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveCheck {
    pub objective_drop: f64,
    /// T (H[q₀] − H[q₁])
    pub entropy_term: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// gap = (E_{q₀}Φ − E_{q₁}Φ) − W₂²/𝒯 − T (H[q₀] − H[q₁]).
///
/// For 𝒯 = 1 this is the plain objective bound; longer horizons relax it by
/// 1/𝒯 exactly as the free-energy bound F_drop ≥ W₂²/𝒯.
pub fn check_objective_bound(traj: &TrajectoryRecord, w2_squared: f64, tol: &Tolerances) -> Result<ObjectiveCheck> {
    let split = split_reports(&traj.first().thermo, &traj.last().thermo);
    let gap = split.objective_drop - w2_squared / traj.horizon() - split.entropy_term;
    let tolerance = tol.esl_allowance(w2_squared);
    Ok(ObjectiveCheck {
        objective_drop: split.objective_drop,
        entropy_term: split.entropy_term,
        gap,
        tolerance,
        pass: gap >= -tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessCheck {
    pub rule: InterpolationRule,
    pub action: f64,
    #[serde(rename = "W2_squared")]
    pub w2_squared: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Action of the constant-speed geodesic minus W₂² of its endpoints.
pub fn check_geodesic_tightness(
    q0: &DensityState,
    q1: &DensityState,
    intervals: usize,
    tol: &Tolerances,
) -> Result<TightnessCheck> {
    let path = GeodesicPath::uniform(q0, q1, intervals.max(2))?;
    tightness_of(&path, tol)
}

fn tightness_of(path: &GeodesicPath, tol: &Tolerances) -> Result<TightnessCheck> {
    let action = path.action()?;
    let w2 = path.w2_squared()?;
    let slack = action - w2;
    let tolerance = tol.tightness_for(path.rule);
    Ok(TightnessCheck { rule: path.rule, action, w2_squared: w2, slack, tolerance, pass: slack.abs() <= tolerance })
}

/// Backend name matching a geodesic's interpolation rule.
pub fn rule_backend(rule: InterpolationRule) -> Backend {
    match rule {
        InterpolationRule::GaussianClosedForm => Backend::Gaussian,
        InterpolationRule::Quantile1d => Backend::Quantile,
        InterpolationRule::PlanDisplacement => Backend::Exact,
    }
}

/// Outcome of each check; `None` when a check does not apply.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassFlags {
    pub dissipation: Option<bool>,
    pub esl: Option<bool>,
    pub objective: Option<bool>,
    pub scaling: Option<bool>,
    pub tightness: Option<bool>,
}

impl PassFlags {
    /// True when no enabled check failed.
    pub fn all(&self) -> bool {
        [self.dissipation, self.esl, self.objective, self.scaling, self.tightness]
            .into_iter()
            .all(|f| f != Some(false))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EslReport {
    pub scenario: String,
    pub mode: Mode,
    pub representation: Representation,
    #[serde(rename = "T")]
    pub temperature: f64,
    pub horizon: f64,
    /// Σ_{0:1}, the action in normalised time.
    #[serde(rename = "Sigma")]
    pub sigma: f64,
    /// Σ_{0:𝒯} = Σ_{0:1}/𝒯.
    #[serde(rename = "Sigma_physical")]
    pub sigma_physical: f64,
    #[serde(rename = "W2_squared")]
    pub w2_squared: f64,
    pub slack: f64,
    #[serde(rename = "F_drop")]
    pub f_drop: Option<f64>,
    pub residual: Option<f64>,
    pub objective_gap: Option<f64>,
    pub entropy_term: Option<f64>,
    pub backend: Backend,
    /// Endpoint W₂² keyed by backend name.
    pub distances: BTreeMap<String, f64>,
    pub tightness_slack: Option<f64>,
    pub scaling: Option<ScalingTable>,
    /// Warnings about under-resolved quantities.
    pub resolution: Vec<String>,
    pub tolerances: Tolerances,
    pub pass: PassFlags,
    pub seed: u64,
}

impl EslReport {
    pub fn passed(&self) -> bool {
        self.pass.all()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("json: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

/// Runs a scenario and every check that applies to it.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<EslReport> {
    run_inner(cfg).map_err(|e| e.context(format!("scenario '{}'", cfg.name)))
}

fn run_inner(cfg: &ScenarioConfig) -> Result<EslReport> {
    let prepared = cfg.prepare()?;
    let cfg = &prepared.config;
    let tol = cfg.tolerances();
    let intervals = cfg.geodesic_intervals.unwrap_or(DEFAULT_GEODESIC_INTERVALS);
    let scaling = if cfg.horizons.is_empty() { None } else { Some(check_time_scaling(cfg, &cfg.horizons)?) };
    let mut report = match cfg.mode {
        Mode::Geodesic => {
            let q1 = prepared.q1.as_ref().ok_or_else(|| Error::invalid("target: required"))?;
            let path = GeodesicPath::uniform(&prepared.q0, q1, intervals.max(2))?;
            let tight = tightness_of(&path, &tol)?;
            let mut esl = esl_from(tight.action, &prepared.q0, q1, &tol, &[rule_backend(path.rule)])?;
            if !cfg.backends.is_empty() {
                esl.distances = endpoint_distances(&prepared.q0, q1, &cfg.backends)?.1;
            }
            EslReport {
                scenario: cfg.name.clone(),
                mode: cfg.mode,
                representation: cfg.representation,
                temperature: cfg.temperature,
                horizon: cfg.horizon,
                sigma: esl.sigma,
                sigma_physical: esl.sigma / cfg.horizon,
                w2_squared: esl.w2_squared,
                slack: esl.slack,
                f_drop: None,
                residual: None,
                objective_gap: None,
                entropy_term: None,
                backend: esl.backend,
                distances: esl.distances,
                tightness_slack: Some(tight.slack),
                scaling: None,
                resolution: Vec::new(),
                tolerances: tol,
                pass: PassFlags { esl: Some(esl.pass), tightness: Some(tight.pass), ..Default::default() },
                seed: cfg.seed,
            }
        }
        Mode::Dynamics => {
            let traj = prepared.simulate()?;
            let diss = check_dissipation(&traj, &tol)?;
            let esl = esl_from(diss.ledger.sigma_total, &traj.first().state, &traj.last().state, &tol, &cfg.backends)?;
            let obj = check_objective_bound(&traj, esl.w2_squared, &tol)?;
            let tight = match InterpolationRule::for_pair(&traj.first().state, &traj.last().state) {
                Ok(_) => Some(check_geodesic_tightness(&traj.first().state, &traj.last().state, intervals, &tol)?),
                Err(_) => None,
            };
            let mut resolution = Vec::new();
            if diss.ledger.quadrature == Quadrature::Trapezoid {
                let n = traj.snapshots.len();
                if n < MIN_RESOLVED_SNAPSHOTS || !diss.pass {
                    resolution.push(format!(
                        "Sigma integrated by the trapezoidal rule from {n} snapshots; dissipation residual {:.3e} \
                         (tolerance {:.3e}); decrease record_every to resolve the entropy-production rate",
                        diss.residual, diss.tolerance
                    ));
                }
            }
            EslReport {
                scenario: cfg.name.clone(),
                mode: cfg.mode,
                representation: cfg.representation,
                temperature: cfg.temperature,
                horizon: cfg.horizon,
                sigma: diss.ledger.sigma_total,
                sigma_physical: diss.ledger.sigma_physical,
                w2_squared: esl.w2_squared,
                slack: esl.slack,
                f_drop: Some(diss.ledger.f_drop),
                residual: Some(diss.residual),
                objective_gap: Some(obj.gap),
                entropy_term: Some(obj.entropy_term),
                backend: esl.backend,
                distances: esl.distances,
                tightness_slack: tight.as_ref().map(|t| t.slack),
                scaling: None,
                resolution,
                tolerances: tol,
                pass: PassFlags {
                    dissipation: Some(diss.pass),
                    esl: Some(esl.pass),
                    objective: Some(obj.pass),
                    tightness: tight.map(|t| t.pass),
                    scaling: None,
                },
                seed: cfg.seed,
            }
        }
    };
    if let Some(table) = scaling {
        report.pass.scaling = Some(table.pass);
        report.scaling = Some(table);
    }
    Ok(report)
}

/// Runs independent scenarios in parallel; results come back ordered by
/// scenario name regardless of scheduling.
pub fn run_suite(cfgs: &[ScenarioConfig]) -> Vec<(String, Result<EslReport>)> {
    let mut out: Vec<(String, Result<EslReport>)> =
        cfgs.par_iter().map(|c| (c.name.clone(), run_scenario(c))).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
