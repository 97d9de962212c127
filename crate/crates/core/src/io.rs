//! Plain-text file formats for densities, plans and trajectories.
//!
//! * particles: CSV with columns `theta_1..theta_d, weight`
//! * grids: JSON header `{kind, domain, cells, values}` where `values` names a
//!   CSV (columns `theta_1..theta_d, q`, row-major, last axis fastest) or holds
//!   the values inline
//! * Gaussians: JSON `{kind: "gaussian", mean, covariance}`
//! * plans: CSV `i, j, mass`
//! * trajectories: CSV `s, F, H, E_phi, sigma`
//!
//! Floats are written in shortest round-trip form so files reload bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryRecord;
use crate::ensemble::{Axis, DensityState, GaussianDensity, GaussianSpec, GridDensity, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::transport::TransportPlan;

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

fn theta_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("theta_{i}")).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

fn parse_field(s: &str, row: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::invalid(format!("row {row}: cannot parse '{s}' as a number")))
}

/// Reads a headered numeric CSV into rows; every row must have the header's width.
fn read_numeric_csv<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        rows.push(rec.iter().map(|f| parse_field(f, k + 1)).collect::<Result<Vec<_>>>()?);
    }
    Ok((header, rows))
}

pub fn write_particles_csv<W: Write>(e: &ParticleEnsemble, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = theta_header(e.dim());
    header.push("weight".into());
    wtr.write_record(&header).map_err(csv_err)?;
    for i in 0..e.len() {
        let row = e.point(i).iter().chain([&e.weights()[i]]).map(|v| fmt_f64(*v));
        wtr.write_record(row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("particles", e))
}

/// Weights are renormalised when they do not already sum to one.
pub fn read_particles_csv<R: Read>(r: R) -> Result<ParticleEnsemble> {
    let (header, rows) = read_numeric_csv(r)?;
    if header.len() < 2 || header.last().map(String::as_str) != Some("weight") {
        return Err(Error::invalid("particle CSV needs columns theta_1..theta_d, weight"));
    }
    let d = header.len() - 1;
    let mut positions = Vec::with_capacity(rows.len() * d);
    let mut weights = Vec::with_capacity(rows.len());
    for row in &rows {
        positions.extend_from_slice(&row[..d]);
        weights.push(row[d]);
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() <= 1e-12 {
        ParticleEnsemble::new(positions, d, weights, 0)
    } else {
        ParticleEnsemble::weighted(positions, d, weights)
    }
}

/// Grid values either inline or in a CSV next to the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValues {
    File(String),
    Inline(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub domain: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
    pub values: GridValues,
}

impl GridHeader {
    pub fn axes(&self) -> Result<Vec<Axis>> {
        if self.domain.len() != self.cells.len() {
            return Err(Error::invalid("grid header: domain and cells differ in length"));
        }
        self.domain.iter().zip(&self.cells).map(|(d, &n)| Axis::new(d[0], d[1], n)).collect()
    }
}

/// Contents of a JSON density file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityFile {
    Gaussian(GaussianSpec),
    Grid(GridHeader),
}

pub fn write_grid_values_csv<W: Write>(q: &GridDensity, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = theta_header(q.dim());
    header.push("q".into());
    wtr.write_record(&header).map_err(csv_err)?;
    let mut x = vec![0.0; q.dim()];
    for (idx, v) in q.values().iter().enumerate() {
        q.center(idx, &mut x);
        wtr.write_record(x.iter().chain([v]).map(|c| fmt_f64(*c))).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("grid values", e))
}

fn grid_header(q: &GridDensity, values: GridValues) -> GridHeader {
    GridHeader {
        domain: q.axes().iter().map(|a| [a.lo, a.hi]).collect(),
        cells: q.axes().iter().map(|a| a.cells).collect(),
        values,
    }
}

fn json_string<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::invalid(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}

/// Writes `q` as `<path>` (JSON header) plus `<path stem>.csv`, returning
/// both paths.
pub fn write_grid(q: &GridDensity, path: &Path) -> Result<Vec<PathBuf>> {
    let csv_path = path.with_extension("csv");
    let name = csv_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::invalid("grid path has no file name"))?;
    let mut buf = Vec::new();
    write_grid_values_csv(q, &mut buf)?;
    write_file(&csv_path, &buf)?;
    let header = DensityFile::Grid(grid_header(q, GridValues::File(name)));
    write_file(path, json_string(&header)?.as_bytes())?;
    Ok(vec![path.to_path_buf(), csv_path])
}

pub fn write_gaussian(g: &GaussianDensity, path: &Path) -> Result<()> {
    write_file(path, json_string(&DensityFile::Gaussian(g.to_spec()))?.as_bytes())
}

/// Writes a density in its natural format and returns the files created.
/// `path` should end in `.json` for grids and Gaussians and `.csv` for
/// particles.
pub fn save_density(q: &DensityState, path: &Path) -> Result<Vec<PathBuf>> {
    match q {
        DensityState::Particles(e) => {
            let mut buf = Vec::new();
            write_particles_csv(e, &mut buf)?;
            write_file(path, &buf)?;
            Ok(vec![path.to_path_buf()])
        }
        DensityState::Grid(g) => write_grid(g, path),
        DensityState::Gaussian(g) => {
            write_gaussian(g, path)?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

fn grid_from_header(h: &GridHeader, base: &Path) -> Result<GridDensity> {
    let axes = h.axes()?;
    let values = match &h.values {
        GridValues::Inline(v) => v.clone(),
        GridValues::File(name) => {
            let path = base.join(name);
            let (header, rows) = read_numeric_csv(open(&path)?).map_err(|e| e.context(path.display().to_string()))?;
            if header.last().map(String::as_str) != Some("q") {
                return Err(Error::invalid(format!("{}: last column must be q", path.display())));
            }
            rows.iter().map(|r| r[r.len() - 1]).collect()
        }
    };
    GridDensity::new(axes, values)
}

/// Loads a density file: `.csv` is read as particles, anything else as a
/// JSON Gaussian or grid header.
pub fn load_density(path: &Path) -> Result<DensityState> {
    let ctx = |e: Error| e.context(path.display().to_string());
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return read_particles_csv(open(path)?).map(DensityState::Particles).map_err(ctx);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: DensityFile =
        serde_json::from_str(&text).map_err(|e| ctx(Error::invalid(format!("density file: {e}"))))?;
    match file {
        DensityFile::Gaussian(spec) => GaussianDensity::from_spec(&spec).map(DensityState::Gaussian).map_err(ctx),
        DensityFile::Grid(h) => {
            let base = path.parent().unwrap_or(Path::new("."));
            grid_from_header(&h, base).map(DensityState::Grid).map_err(ctx)
        }
    }
}

/// Nonzero entries of the coupling, one per row.
pub fn write_plan_csv<W: Write>(plan: &TransportPlan, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["i", "j", "mass"]).map_err(csv_err)?;
    for (i, j, m) in plan.entries() {
        wtr.write_record([i.to_string(), j.to_string(), fmt_f64(m)]).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("plan", e))
}

/// One row per snapshot; `sigma` is empty when the representation has no
/// production estimate.
pub fn write_trajectory_csv<W: Write>(traj: &TrajectoryRecord, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["s", "F", "H", "E_phi", "sigma"]).map_err(csv_err)?;
    for snap in &traj.snapshots {
        let t = &snap.thermo;
        wtr.write_record([
            fmt_f64(snap.s),
            fmt_f64(t.free_energy),
            fmt_f64(t.entropy),
            fmt_f64(t.mean_objective),
            snap.sigma.map(fmt_f64).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("trajectory", e))
}

/// All snapshot states of a trajectory in one long-format CSV.
///
/// Columns are `snapshot, s` followed by `theta_1..theta_d, q` for grids,
/// `theta_1..theta_d, weight` for particles and `mean_1..mean_d,
/// cov_11..cov_dd` for Gaussians.
pub fn write_snapshots_csv<W: Write>(traj: &TrajectoryRecord, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let first = &traj.first().state;
    let d = first.dim();
    let mut header = vec!["snapshot".to_string(), "s".to_string()];
    match first {
        DensityState::Gaussian(_) => {
            header.extend((1..=d).map(|i| format!("mean_{i}")));
            header.extend((1..=d).flat_map(|i| (1..=d).map(move |j| format!("cov_{i}{j}"))));
        }
        DensityState::Grid(_) => {
            header.extend(theta_header(d));
            header.push("q".into());
        }
        DensityState::Particles(_) => {
            header.extend(theta_header(d));
            header.push("weight".into());
        }
    }
    wtr.write_record(&header).map_err(csv_err)?;
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let lead = [k.to_string(), fmt_f64(snap.s)];
        match &snap.state {
            DensityState::Gaussian(g) => {
                let cov = g.covariance();
                let row = g.mean().iter().copied().chain((0..d).flat_map(|i| (0..d).map(move |j| cov[(i, j)])));
                wtr.write_record(lead.iter().cloned().chain(row.map(fmt_f64))).map_err(csv_err)?;
            }
            DensityState::Grid(q) => {
                let mut x = vec![0.0; d];
                for (idx, v) in q.values().iter().enumerate() {
                    q.center(idx, &mut x);
                    let row = x.iter().chain([v]).map(|c| fmt_f64(*c));
                    wtr.write_record(lead.iter().cloned().chain(row)).map_err(csv_err)?;
                }
            }
            DensityState::Particles(e) => {
                for i in 0..e.len() {
                    let row = e.point(i).iter().chain([&e.weights()[i]]).map(|c| fmt_f64(*c));
                    wtr.write_record(lead.iter().cloned().chain(row)).map_err(csv_err)?;
                }
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("snapshots", e))
}

/// Index of the snapshots CSV: representation, grid geometry and times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotIndex {
    pub representation: String,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<usize>>,
    pub times: Vec<f64>,
    pub values: String,
}

impl SnapshotIndex {
    pub fn new(traj: &TrajectoryRecord, values: impl Into<String>) -> Self {
        let first = &traj.first().state;
        let (domain, cells) = match first {
            DensityState::Grid(q) => {
                let h = grid_header(q, GridValues::Inline(Vec::new()));
                (Some(h.domain), Some(h.cells))
            }
            _ => (None, None),
        };
        Self {
            representation: first.kind_name().into(),
            dim: first.dim(),
            domain,
            cells,
            times: traj.times(),
            values: values.into(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        json_string(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{grid_from_gaussian, sample};
    use crate::transport::w2_discrete_exact;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 1.729_329_433_526_769_6] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn particles_round_trip() {
        let e = sample(&GaussianDensity::isotropic(&[1.0, -2.0], 0.5).unwrap(), 50, 4).unwrap();
        let mut buf = Vec::new();
        write_particles_csv(&e, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta_1,theta_2,weight\n"));
        let back = read_particles_csv(&buf[..]).unwrap();
        assert_eq!(back.positions(), e.positions());
        assert_eq!(back.weights(), e.weights());
    }

    #[test]
    fn unnormalised_particle_weights_are_rescaled() {
        let back = read_particles_csv("theta_1,weight\n0,1\n1,3\n".as_bytes()).unwrap();
        assert_eq!(back.weights(), &[0.25, 0.75]);
        assert!(read_particles_csv("x,y\n0,1\n".as_bytes()).is_err());
        assert!(read_particles_csv("theta_1,weight\n0,abc\n1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn density_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GaussianDensity::from_slices(&[0.5, 1.0], &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let grid = grid_from_gaussian(&GaussianDensity::univariate(0.0, 1.0).unwrap(), &[Axis::new(-8.0, 8.0, 64).unwrap()])
            .unwrap();
        let e = sample(&g, 10, 1).unwrap();
        for (state, name) in [
            (DensityState::Gaussian(g), "g.json"),
            (DensityState::Grid(grid), "q.json"),
            (DensityState::Particles(e), "p.csv"),
        ] {
            let path = dir.path().join(name);
            save_density(&state, &path).unwrap();
            match (load_density(&path).unwrap(), &state) {
                // Seed provenance is not part of the file format.
                (DensityState::Particles(a), DensityState::Particles(b)) => {
                    assert_eq!((a.positions(), a.weights()), (b.positions(), b.weights()))
                }
                (back, _) => assert_eq!(&back, &state, "{name}"),
            }
        }
        assert!(dir.path().join("q.csv").exists());
    }

    #[test]
    fn inline_grid_values_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        fs::write(&path, r#"{"kind":"grid","domain":[[0,1]],"cells":[2],"values":[1.0,1.0]}"#).unwrap();
        let DensityState::Grid(q) = load_density(&path).unwrap() else { panic!() };
        assert_eq!(q.values(), &[1.0, 1.0]);
        fs::write(&path, r#"{"kind":"grid","domain":[[0,1]],"cells":[3],"values":[1.0,1.0]}"#).unwrap();
        assert!(load_density(&path).is_err());
        fs::write(&path, r#"{"kind":"cloud"}"#).unwrap();
        assert!(load_density(&path).is_err());
        assert!(matches!(load_density(&dir.path().join("missing.json")), Err(Error::Io { .. })));
    }

    #[test]
    fn plan_csv_lists_nonzero_entries() {
        let a = ParticleEnsemble::uniform(vec![0.0, 1.0], 1).unwrap();
        let b = ParticleEnsemble::uniform(vec![1.0, 2.0], 1).unwrap();
        let (_, plan) = w2_discrete_exact(&a, &b).unwrap();
        let mut buf = Vec::new();
        write_plan_csv(&plan, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i,j,mass\n0,0,0.5\n1,1,0.5\n");
    }
}
