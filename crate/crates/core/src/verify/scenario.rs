//! Scenario configuration, built-in presets and the randomized OU generator.

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_fokker_planck, simulate_langevin, simulate_ou, FokkerPlanckSolver, Schedule, TrajectoryRecord};
use crate::ensemble::{
    grid_from_gaussian, sample, Axis, DensityState, GaussianDensity, GaussianMixture, GaussianSpec, GridDensity,
    MixtureComponent,
};
use crate::error::{Error, Result};
use crate::landscape::Potential;
use crate::rng::CounterRng;
use crate::transport::Backend;

use super::Tolerances;

/// Snapshots recorded when `record_every` is not given.
pub const DEFAULT_RECORDS: usize = 200;
/// Euler-Maruyama step used for particles when the integrator is unset.
pub const DEFAULT_PARTICLE_DT: f64 = 1e-3;
/// Intervals used to sample geodesics when unset.
pub const DEFAULT_GEODESIC_INTERVALS: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Evolve the initial state under Fokker-Planck / Langevin dynamics.
    #[default]
    Dynamics,
    /// Traverse the W₂ geodesic from `initial` to `target`.
    Geodesic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    Gaussian,
    Grid,
    Particles,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Gaussian => "gaussian",
            Representation::Grid => "grid",
            Representation::Particles => "particles",
        }
    }
}

/// How a state is specified in a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialState {
    Gaussian(GaussianSpec),
    Mixture { components: Vec<MixtureComponent> },
    /// The stationary state ∝ exp(−Φ/T) of the configured potential.
    Gibbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub domain: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn axes(&self) -> Result<Vec<Axis>> {
        if self.domain.len() != self.cells.len() {
            return Err(Error::invalid("grid.domain and grid.cells differ in length"));
        }
        self.domain.iter().zip(&self.cells).map(|(d, &n)| Axis::new(d[0], d[1], n)).collect()
    }
}

/// Either `steps` or `dt`; the resolved config always carries `steps`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integrator {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub esl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissipation: Option<f64>,
}

/// A complete scenario description, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub mode: Mode,
    pub representation: Representation,
    #[serde(rename = "T", default)]
    pub temperature: f64,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geodesic_intervals: Option<usize>,
    /// Preference order for the endpoint W₂; empty means most precise first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub backends: Vec<Backend>,
    /// Horizons for the time-scaling check; empty disables it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    pub initial: InitialState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<InitialState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {}", e.message())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config serialization: {e}")))
    }

    pub fn potential(&self) -> Result<&Potential> {
        self.potential
            .as_ref()
            .ok_or_else(|| Error::invalid("potential: required for dynamics scenarios"))
    }

    /// Tolerances for this scenario's representation with overrides applied.
    pub fn tolerances(&self) -> Tolerances {
        let base = match self.representation {
            Representation::Grid => Tolerances::grid(),
            Representation::Gaussian | Representation::Particles => Tolerances::closed_form(),
        };
        base.with_overrides(&self.tolerances)
    }

    /// Checks every field against the preconditions of the routines it feeds.
    /// Cheap: builds solvers and initial states but runs no dynamics.
    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    /// Fills in `integrator.steps` and `record_every`; the result reproduces
    /// the same run and is what manifests record.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        Ok(self.prepare()?.config)
    }

    fn check_fields(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::invalid("name: must not be empty"));
        }
        positive("horizon", self.horizon)?;
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::invalid(format!("T: must be finite and >= 0, got {}", self.temperature)));
        }
        if let Some(p) = &self.potential {
            p.validate().map_err(|e| e.context("potential"))?;
        }
        if let Some(steps) = self.integrator.steps {
            if steps == 0 {
                return Err(Error::invalid("integrator.steps: must be >= 1"));
            }
        }
        if let Some(dt) = self.integrator.dt {
            positive("integrator.dt", dt)?;
        }
        if self.record_every == Some(0) {
            return Err(Error::invalid("record_every: must be >= 1"));
        }
        if let Some(n) = self.particles {
            if n < 2 {
                return Err(Error::invalid(format!("particles: need at least 2, got {n}")));
            }
        }
        if self.geodesic_intervals == Some(0) {
            return Err(Error::invalid("geodesic_intervals: must be >= 1"));
        }
        for h in &self.horizons {
            positive("horizons", *h)?;
        }
        if let Some(v) = self.tolerances.esl {
            positive("tolerances.esl", v)?;
        }
        if let Some(v) = self.tolerances.dissipation {
            positive("tolerances.dissipation", v)?;
        }
        match self.mode {
            Mode::Dynamics => {
                self.potential()?;
                if self.target.is_some() {
                    return Err(Error::invalid("target: only used by geodesic scenarios"));
                }
            }
            Mode::Geodesic => {
                if self.target.is_none() {
                    return Err(Error::invalid("target: required for geodesic scenarios"));
                }
            }
        }
        Ok(())
    }

    fn build_state(&self, spec: &InitialState, seed: u64, what: &str) -> Result<DensityState> {
        let ctx = |e: Error| e.context(what.to_string());
        let gibbs_gaussian = || -> Result<GaussianDensity> {
            let p = self.potential()?;
            let k = p
                .stiffness()
                .ok_or_else(|| Error::unsupported("a Gibbs state outside the grid needs a quadratic potential"))?;
            positive("T", self.temperature)?;
            GaussianDensity::isotropic(&vec![0.0; p.dim()], self.temperature / k)
        };
        let state = match self.representation {
            Representation::Gaussian => match spec {
                InitialState::Gaussian(g) => GaussianDensity::from_spec(g)?.into(),
                InitialState::Mixture { components } => GaussianMixture::new(components)?
                    .as_gaussian()
                    .cloned()
                    .ok_or_else(|| Error::unsupported("the gaussian representation needs a single component"))?
                    .into(),
                InitialState::Gibbs => gibbs_gaussian().map_err(ctx)?.into(),
            },
            Representation::Grid => {
                let axes = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| Error::invalid("grid: required for the grid representation"))?
                    .axes()
                    .map_err(|e| e.context("grid"))?;
                match spec {
                    InitialState::Gaussian(g) => grid_from_gaussian(&GaussianDensity::from_spec(g).map_err(ctx)?, &axes),
                    InitialState::Mixture { components } => GaussianMixture::new(components).map_err(ctx)?.to_grid(&axes),
                    InitialState::Gibbs => gibbs_grid(self.potential()?, self.temperature, axes),
                }
                .map_err(ctx)?
                .into()
            }
            Representation::Particles => {
                let n = self
                    .particles
                    .ok_or_else(|| Error::invalid("particles: required for the particle representation"))?;
                match spec {
                    InitialState::Gaussian(g) => sample(&GaussianDensity::from_spec(g).map_err(ctx)?, n, seed),
                    InitialState::Mixture { components } => GaussianMixture::new(components).map_err(ctx)?.sample(n, seed),
                    InitialState::Gibbs => sample(&gibbs_gaussian().map_err(ctx)?, n, seed),
                }
                .map_err(ctx)?
                .into()
            }
        };
        Ok(state)
    }

    /// Validates, resolves defaults and builds the endpoint states.
    pub fn prepare(&self) -> Result<Prepared> {
        self.check_fields()?;
        let q0 = self.build_state(&self.initial, self.seed, "initial")?;
        let q1 = match &self.target {
            Some(t) => {
                let q1 = self.build_state(t, self.seed.wrapping_add(1), "target")?;
                if q1.dim() != q0.dim() {
                    return Err(Error::invalid("target: dimension differs from initial"));
                }
                Some(q1)
            }
            None => None,
        };
        if let Some(p) = &self.potential {
            if p.dim() != q0.dim() {
                return Err(Error::invalid(format!(
                    "potential: dimension {} differs from initial dimension {}",
                    p.dim(),
                    q0.dim()
                )));
            }
        }
        let mut config = self.clone();
        let steps = match self.mode {
            Mode::Geodesic => {
                config.geodesic_intervals.get_or_insert(DEFAULT_GEODESIC_INTERVALS);
                None
            }
            Mode::Dynamics => Some(self.resolve_steps(&q0)?),
        };
        if let Some(steps) = steps {
            config.integrator = Integrator { steps: Some(steps), dt: None };
            config.record_every.get_or_insert((steps / DEFAULT_RECORDS).max(1));
        }
        let schedule = match steps {
            Some(steps) => Some(Schedule::new(self.horizon, steps, config.record_every.unwrap_or(1))?),
            None => None,
        };
        Ok(Prepared { config, q0, q1, schedule })
    }

    fn resolve_steps(&self, q0: &DensityState) -> Result<usize> {
        let Integrator { steps, dt } = self.integrator;
        if steps.is_some() && dt.is_some() {
            return Err(Error::invalid("integrator: give either steps or dt, not both"));
        }
        let from_dt = |dt: f64| ((self.horizon / dt).ceil() as usize).max(1);
        match (self.representation, q0) {
            (Representation::Gaussian, _) => {
                // The closed form is exact at any resolution; steps only set
                // the snapshot spacing.
                self.potential()?
                    .stiffness()
                    .ok_or_else(|| Error::unsupported("the gaussian representation needs a quadratic potential"))?;
                Ok(steps.or(dt.map(from_dt)).unwrap_or(DEFAULT_RECORDS))
            }
            (Representation::Grid, DensityState::Grid(q)) => {
                let solver = FokkerPlanckSolver::new(q.axes(), self.potential()?, self.temperature)?;
                let max_dt = solver.max_dt();
                let steps = steps.or(dt.map(from_dt)).unwrap_or_else(|| from_dt(max_dt));
                solver.check_dt(self.horizon / steps as f64)?;
                Ok(steps)
            }
            (Representation::Particles, _) => Ok(steps.unwrap_or_else(|| from_dt(dt.unwrap_or(DEFAULT_PARTICLE_DT)))),
            _ => unreachable!("state built from the representation"),
        }
    }
}

fn gibbs_grid(p: &Potential, temperature: f64, axes: Vec<Axis>) -> Result<GridDensity> {
    positive("T", temperature)?;
    let probe = GridDensity::from_fn(axes.clone(), |x| p.value_unchecked(x))?;
    let floor = probe.values().iter().copied().fold(f64::INFINITY, f64::min);
    GridDensity::from_fn(axes, |x| (-(p.value_unchecked(x) - floor) / temperature).exp())?.normalize()
}

/// A validated scenario with defaults filled in and endpoint states built.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub q0: DensityState,
    /// Geodesic target.
    pub q1: Option<DensityState>,
    /// Present for dynamics scenarios.
    pub schedule: Option<Schedule>,
}

impl Prepared {
    /// Runs the scenario's dynamics.
    pub fn simulate(&self) -> Result<TrajectoryRecord> {
        let cfg = &self.config;
        let sched = self
            .schedule
            .as_ref()
            .ok_or_else(|| Error::invalid("geodesic scenarios have no dynamics to simulate"))?;
        let p = cfg.potential()?;
        match &self.q0 {
            DensityState::Gaussian(g) => simulate_ou(g, p, cfg.temperature, sched),
            DensityState::Grid(q) => simulate_fokker_planck(q, p, cfg.temperature, sched),
            DensityState::Particles(e) => simulate_langevin(e, p, cfg.temperature, sched, cfg.seed),
        }
    }
}

fn gauss(mean: &[f64], covariance: &[&[f64]]) -> InitialState {
    InitialState::Gaussian(GaussianSpec {
        mean: mean.to_vec(),
        covariance: covariance.iter().map(|r| r.to_vec()).collect(),
    })
}

fn grid1(lo: f64, hi: f64, cells: usize) -> Option<GridSpec> {
    Some(GridSpec { domain: vec![[lo, hi]], cells: vec![cells] })
}

fn base(name: &str, representation: Representation, initial: InitialState) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        mode: Mode::Dynamics,
        representation,
        temperature: 1.0,
        horizon: 1.0,
        seed: 0,
        record_every: None,
        particles: None,
        geodesic_intervals: None,
        backends: Vec::new(),
        horizons: Vec::new(),
        integrator: Integrator::default(),
        tolerances: ToleranceOverrides::default(),
        potential: None,
        initial,
        target: None,
        grid: None,
    }
}

/// Built-in scenarios with a one-line description each.
pub const PRESETS: &[(&str, &str)] = &[
    ("ou-relaxation", "grid Fokker-Planck, quadratic k=1, T=1, N(2,1) on [-8,8] with 2048 cells"),
    ("ou-closed-form", "closed-form Gaussian OU, k=1, T=1, N(2,1)"),
    ("geodesic-gaussian", "2D Bures-Wasserstein geodesic between two Gaussians"),
    ("geodesic-grid", "1D quantile geodesic from a bimodal to a unimodal grid density"),
    ("double-well", "grid Fokker-Planck, double well a=1, T=0.25, N(0,0.04) at the barrier, horizon 4"),
    ("stationary", "grid Fokker-Planck started at its own Gibbs state"),
    ("langevin-ou", "particle Langevin OU, 10^5 particles (simulation only)"),
    ("coarse-ou", "grid OU over horizon 4 recorded at only two snapshots (under-resolved on purpose)"),
];

/// Presets run by the default verification suite.
pub const SUITE: &[&str] = &["ou-relaxation", "ou-closed-form", "geodesic-gaussian", "geodesic-grid", "double-well", "stationary"];

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let quad = || Potential::quadratic(1.0, 1).ok();
    let ou0 = || gauss(&[2.0], &[&[1.0]]);
    let cfg = match name {
        "ou-relaxation" => ScenarioConfig {
            potential: quad(),
            grid: grid1(-8.0, 8.0, 2048),
            horizons: vec![1.0, 2.0, 4.0],
            ..base(name, Representation::Grid, ou0())
        },
        "ou-closed-form" => ScenarioConfig {
            potential: quad(),
            horizons: vec![1.0, 2.0, 4.0],
            ..base(name, Representation::Gaussian, ou0())
        },
        "geodesic-gaussian" => ScenarioConfig {
            mode: Mode::Geodesic,
            temperature: 0.0,
            horizons: vec![1.0, 2.0, 4.0],
            target: Some(gauss(&[4.0, 1.0], &[&[2.0, 0.5], &[0.5, 1.0]])),
            ..base(name, Representation::Gaussian, gauss(&[0.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]]))
        },
        "geodesic-grid" => ScenarioConfig {
            mode: Mode::Geodesic,
            temperature: 0.0,
            horizons: vec![1.0, 2.0, 4.0],
            grid: grid1(-8.0, 8.0, 2048),
            target: Some(gauss(&[0.5], &[&[1.44]])),
            ..base(
                name,
                Representation::Grid,
                InitialState::Mixture {
                    components: vec![
                        MixtureComponent { weight: 0.5, gaussian: GaussianSpec { mean: vec![2.0], covariance: vec![vec![0.25]] } },
                        MixtureComponent { weight: 0.5, gaussian: GaussianSpec { mean: vec![-2.5], covariance: vec![vec![0.4]] } },
                    ],
                },
            )
        },
        "double-well" => ScenarioConfig {
            temperature: 0.25,
            horizon: 4.0,
            potential: Potential::double_well(1.0, 1).ok(),
            grid: grid1(-3.0, 3.0, 1024),
            horizons: vec![2.0, 4.0, 8.0],
            ..base(name, Representation::Grid, gauss(&[0.0], &[&[0.04]]))
        },
        "stationary" => ScenarioConfig {
            potential: quad(),
            grid: grid1(-8.0, 8.0, 512),
            ..base(name, Representation::Grid, InitialState::Gibbs)
        },
        "langevin-ou" => ScenarioConfig {
            potential: quad(),
            particles: Some(100_000),
            integrator: Integrator { steps: None, dt: Some(1e-3) },
            record_every: Some(100),
            ..base(name, Representation::Particles, ou0())
        },
        "coarse-ou" => {
            let mut cfg = ScenarioConfig {
                horizon: 4.0,
                potential: quad(),
                grid: grid1(-8.0, 8.0, 512),
                ..base(name, Representation::Grid, ou0())
            };
            let steps = cfg.resolve()?.integrator.steps.unwrap_or(1);
            cfg.integrator.steps = Some(steps);
            cfg.record_every = Some(steps);
            cfg
        }
        _ => {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            return Err(Error::invalid(format!("unknown scenario '{name}' (presets: {})", known.join(", "))));
        }
    };
    Ok(cfg)
}

/// `n` closed-form OU scenarios with k ∈ [0.5, 4], T ∈ [0.1, 2],
/// μ₀ ∈ [−3, 3] and σ₀² ∈ [0.25, 4], reproducible from `seed`.
pub fn random_ou_scenarios(n: usize, seed: u64) -> Vec<ScenarioConfig> {
    let rng = CounterRng::new(seed);
    (0..n)
        .map(|i| {
            let [u0, u1] = rng.uniforms(i as u64, 0);
            let [u2, u3] = rng.uniforms(i as u64, 1);
            let k = 0.5 + 3.5 * u0;
            let t = 0.1 + 1.9 * u1;
            let mu = -3.0 + 6.0 * u2;
            let var = 0.25 + 3.75 * u3;
            ScenarioConfig {
                temperature: t,
                seed,
                potential: Potential::quadratic(k, 1).ok(),
                ..base(&format!("random-ou-{i:03}"), Representation::Gaussian, gauss(&[mu], &[&[var]]))
            }
        })
        .collect()
}
