use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use eslab_core::transport::Backend;
use eslab_core::verify::{preset, Integrator, Representation, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "eslab", version, about = "Ensemble dynamics, free-energy dissipation and Wasserstein speed limits")]
pub struct Cli {
    /// Worker threads for parallel kernels (results do not depend on it).
    #[arg(long, global = true, value_name = "INT")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario's dynamics and write trajectory, ledger and snapshots.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run a scenario (or the preset suite) and check every bound.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Run every preset of the default suite.
        #[arg(long, conflicts_with_all = ["scenario", "config"])]
        suite: bool,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// W₂ between two density files.
    Transport {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_name = "NAME")]
        backend: Option<Backend>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Physical action and free-energy drop over several horizons.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated horizons; defaults to the scenario's own list.
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        horizons: Vec<f64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    Presets,
}

/// Scenario selection plus overrides.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Preset name, or a path to a scenario TOML file.
    #[arg(long, value_name = "NAME")]
    pub scenario: Option<String>,
    /// Scenario TOML file (a run manifest works too).
    #[arg(long, value_name = "PATH", conflicts_with = "scenario")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "REAL")]
    pub horizon: Option<f64>,
    #[arg(long, value_name = "INT")]
    pub steps: Option<usize>,
    /// Cells per grid axis.
    #[arg(long, value_name = "INT")]
    pub cells: Option<usize>,
    #[arg(long, value_name = "INT")]
    pub particles: Option<usize>,
    #[arg(long, value_name = "REAL")]
    pub temperature: Option<f64>,
    #[arg(long, value_name = "INT")]
    pub record_every: Option<usize>,
    /// W₂ backend for endpoint distances.
    #[arg(long, value_name = "NAME")]
    pub backend: Option<Backend>,
    #[arg(long, value_name = "REAL")]
    pub tol_esl: Option<f64>,
    #[arg(long, value_name = "REAL")]
    pub tol_diss: Option<f64>,
}

fn load_file(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ScenarioConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
}

impl RunArgs {
    /// The selected scenario with overrides applied, validated and resolved.
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let cfg = match (&self.scenario, &self.config) {
            (Some(name), None) => match preset(name) {
                Ok(cfg) => cfg,
                Err(e) if Path::new(name).is_file() => load_file(Path::new(name)).context(e.to_string())?,
                Err(e) => return Err(e.into()),
            },
            (None, Some(path)) => load_file(path)?,
            (None, None) => bail!("choose a scenario with --scenario <NAME> or --config <PATH>"),
            (Some(_), Some(_)) => unreachable!("clap rejects both"),
        };
        self.configure(cfg)
    }

    /// Applies the overrides to `cfg` and resolves it.
    pub fn configure(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig> {
        self.apply(&mut cfg)?;
        cfg.resolve().with_context(|| format!("scenario '{}'", cfg.name))
    }

    fn apply(&self, cfg: &mut ScenarioConfig) -> Result<()> {
        // A resolved step count no longer fits once the grid, horizon or
        // temperature changes; let it be recomputed unless given explicitly.
        if self.steps.is_none() && (self.horizon.is_some() || self.cells.is_some() || self.temperature.is_some()) {
            cfg.integrator.steps = None;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.steps {
            cfg.integrator = Integrator { steps: Some(v), dt: None };
        }
        if let Some(v) = self.cells {
            match (&mut cfg.grid, cfg.representation) {
                (Some(g), Representation::Grid) => g.cells.iter_mut().for_each(|c| *c = v),
                _ => bail!("--cells applies to grid scenarios only"),
            }
        }
        if let Some(v) = self.particles {
            if cfg.representation != Representation::Particles {
                bail!("--particles applies to particle scenarios only");
            }
            cfg.particles = Some(v);
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.record_every {
            cfg.record_every = Some(v);
        }
        if let Some(b) = self.backend {
            cfg.backends = vec![b];
        }
        if let Some(v) = self.tol_esl {
            cfg.tolerances.esl = Some(v);
        }
        if let Some(v) = self.tol_diss {
            cfg.tolerances.dissipation = Some(v);
        }
        Ok(())
    }
}
