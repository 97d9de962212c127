use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use eslab_core::io::{fmt_f64, load_density, write_plan_csv, write_snapshots_csv, write_trajectory_csv, SnapshotIndex};
use eslab_core::thermo::accumulate_sigma;
use eslab_core::transport::{preferred_backend, w2_squared, Backend};
use eslab_core::verify::{check_time_scaling, preset, run_scenario, run_suite, EslReport, PRESETS, SUITE};
use serde_json::json;

use crate::args::RunArgs;

pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

/// Writes every file only after all contents exist, so failures leave the
/// directory untouched.
fn write_all(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn simulate(run: &RunArgs, out: &Path) -> Result<Outcome> {
    let cfg = run.scenario_config()?;
    let manifest = cfg.to_toml()?;
    let traj = cfg.prepare()?.simulate().with_context(|| format!("scenario '{}'", cfg.name))?;

    let mut trajectory = Vec::new();
    write_trajectory_csv(&traj, &mut trajectory)?;
    let ledger = match accumulate_sigma(&traj) {
        Ok(l) => pretty(&l)?,
        Err(e) => pretty(&json!({ "available": false, "reason": e.to_string() }))?,
    };
    let index = SnapshotIndex::new(&traj, "snapshots.csv").to_json()?.into_bytes();
    let mut snapshots = Vec::new();
    write_snapshots_csv(&traj, &mut snapshots)?;

    write_all(
        out,
        &[
            ("manifest.toml", manifest.into_bytes()),
            ("trajectory.csv", trajectory),
            ("ledger.json", ledger),
            ("snapshots.json", index),
            ("snapshots.csv", snapshots),
        ],
    )?;
    let last = traj.last();
    println!(
        "{}: {} snapshots, F {} -> {}, outputs in {}",
        cfg.name,
        traj.snapshots.len(),
        fmt_f64(traj.first().thermo.free_energy),
        fmt_f64(last.thermo.free_energy),
        out.display()
    );
    Ok(Outcome::Pass)
}

fn summary(r: &EslReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
    format!(
        "{:<20} {}  Sigma={:.6e} W2^2={:.6e} slack={:.6e} F_drop={} residual={} [{}]",
        r.scenario,
        if r.passed() { "PASS" } else { "FAIL" },
        r.sigma,
        r.w2_squared,
        r.slack,
        opt(r.f_drop),
        opt(r.residual),
        r.backend
    )
}

pub fn verify(run: &RunArgs, suite: bool, out: Option<&Path>) -> Result<Outcome> {
    if !suite {
        let cfg = run.scenario_config()?;
        let report = run_scenario(&cfg)?;
        println!("{}", summary(&report));
        for note in &report.resolution {
            println!("  resolution: {note}");
        }
        let json = report.to_json()?;
        match out {
            Some(dir) => write_all(dir, &[("report.json", json.into_bytes())])?,
            None => print!("{json}"),
        }
        return Ok(Outcome::from_pass(report.passed()));
    }
    let cfgs = SUITE
        .iter()
        .map(|name| run.configure(preset(name)?))
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for (name, result) in run_suite(&cfgs) {
        let report = result.with_context(|| format!("suite scenario '{name}'"))?;
        println!("{}", summary(&report));
        reports.push(report);
    }
    let pass = reports.iter().all(EslReport::passed);
    let json = pretty(&reports)?;
    if let Some(dir) = out {
        write_all(dir, &[("reports.json", json)])?;
    }
    Ok(Outcome::from_pass(pass))
}

pub fn transport(a: &Path, b: &Path, backend: Option<Backend>, out: Option<&Path>) -> Result<Outcome> {
    let qa = load_density(a)?;
    let qb = load_density(b)?;
    let backend = match backend {
        Some(k) => k,
        None => preferred_backend(&qa, &qb).with_context(|| {
            format!("no W2 backend applies to {} vs {} in dimension {}", qa.kind_name(), qb.kind_name(), qa.dim())
        })?,
    };
    let (d2, plan) = w2_squared(&qa, &qb, backend)?;
    println!("backend     {backend}");
    println!("W2          {}", fmt_f64(d2.max(0.0).sqrt()));
    println!("W2_squared  {}", fmt_f64(d2));
    if let Some(dir) = out {
        let mut files = vec![("distance.json", pretty(&json!({ "backend": backend, "W2": d2.max(0.0).sqrt(), "W2_squared": d2 }))?)];
        if let Some(plan) = &plan {
            let mut buf = Vec::new();
            write_plan_csv(plan, &mut buf)?;
            files.push(("plan.csv", buf));
        }
        write_all(dir, &files)?;
    }
    Ok(Outcome::Pass)
}

pub fn sweep(run: &RunArgs, horizons: &[f64], out: Option<&Path>) -> Result<Outcome> {
    let cfg = run.scenario_config()?;
    let horizons = if horizons.is_empty() { cfg.horizons.clone() } else { horizons.to_vec() };
    if horizons.is_empty() {
        bail!("no horizons: pass --horizons or set `horizons` in the scenario");
    }
    let table = check_time_scaling(&cfg, &horizons).with_context(|| format!("scenario '{}'", cfg.name))?;
    let csv = table.to_csv();
    print!("{csv}");
    if let Some(dir) = out {
        write_all(dir, &[("scaling.csv", csv.into_bytes()), ("manifest.toml", cfg.to_toml()?.into_bytes())])?;
    }
    Ok(Outcome::from_pass(table.pass))
}

pub fn presets() {
    for (name, description) in PRESETS {
        let tag = if SUITE.contains(name) { "suite" } else { "" };
        println!("{name:<20} {tag:<6} {description}");
    }
}
