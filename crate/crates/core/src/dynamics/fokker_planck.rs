//! Conservative finite-volume Fokker-Planck solver.
//!
//! Face fluxes use the Scharfetter-Gummel (exponentially fitted) form
//!
//! ```text
//! J = (T/Δx) [B(ΔΦ/T) q_L − B(−ΔΦ/T) q_R],   B(z) = z / (e^z − 1)
//! ```
//!
//! which reduces to first-order upwinding of the drift when diffusion is
//! negligible and to centred diffusion when the drift is. The discrete Gibbs
//! state q_i ∝ exp(−Φ(x_i)/T) has zero flux through every face, and an
//! explicit step within the stability bound is a stochastic matrix, so the
//! discrete free energy never increases. Boundaries carry no flux.

use log::warn;

use super::velocity::{velocity_field, VelocityField};
use super::{Schedule, Snapshot, TrajectoryRecord};
use crate::ensemble::{Axis, DensityState, GridDensity};
use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::thermo::{entropy_production_rate, free_energy};

const CFL_SAFETY: f64 = 0.4;
const NEGATIVE_SILENT: f64 = -1e-14;
const NEGATIVE_FATAL: f64 = -1e-8;

/// Largest stable time step, 0.4 · min(Δx² / (2 d T), Δx / max |∇Φ|), with
/// the gradient maximum taken over cell centres and faces.
pub fn cfl_time_step(axes: &[Axis], p: &Potential, temperature: f64) -> Result<f64> {
    check_dim(p.dim(), axes.len())?;
    let d = axes.len();
    let dx = axes.iter().map(Axis::width).fold(f64::INFINITY, f64::min);
    let diffusion = if temperature > 0.0 { dx * dx / (2.0 * d as f64 * temperature) } else { f64::INFINITY };
    let gmax = max_gradient_norm(axes, p);
    let drift = if gmax > 0.0 { dx / gmax } else { f64::INFINITY };
    Ok(CFL_SAFETY * diffusion.min(drift))
}

fn max_gradient_norm(axes: &[Axis], p: &Potential) -> f64 {
    // Sample on the half-cell lattice, which contains both centres and faces.
    let d = axes.len();
    let counts: Vec<usize> = axes.iter().map(|a| 2 * a.cells + 1).collect();
    let total: usize = counts.iter().product();
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut best: f64 = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        for a in (0..d).rev() {
            x[a] = axes[a].lo + 0.5 * (rem % counts[a]) as f64 * axes[a].width();
            rem /= counts[a];
        }
        p.gradient_into(&x, &mut g);
        best = best.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    best
}

/// B(z) = z / (e^z − 1), with B(0) = 1.
#[inline]
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Precomputed face transition rates for a fixed grid, potential and
/// temperature.
#[derive(Debug, Clone)]
pub struct FokkerPlanckSolver {
    axes: Vec<Axis>,
    /// Per axis: rate from cell i to its + neighbour, indexed by i.
    forward: Vec<Vec<f64>>,
    /// Per axis: rate from the + neighbour back to cell i, indexed by i.
    backward: Vec<Vec<f64>>,
    strides: Vec<usize>,
    max_out_rate: f64,
    cfl_dt: f64,
    scratch: Vec<f64>,
}

impl FokkerPlanckSolver {
    pub fn new(axes: &[Axis], p: &Potential, temperature: f64) -> Result<Self> {
        check_dim(p.dim(), axes.len())?;
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be >= 0, got {temperature}")));
        }
        let probe = GridDensity::from_fn(axes.to_vec(), |_| 1.0)?;
        let n = probe.len();
        let d = axes.len();
        let mut phi = vec![0.0; n];
        let mut x = vec![0.0; d];
        for (idx, v) in phi.iter_mut().enumerate() {
            probe.center(idx, &mut x);
            *v = p.value_unchecked(&x);
        }
        let mut strides = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].cells;
        }
        let mut forward = vec![vec![0.0; n]; d];
        let mut backward = vec![vec![0.0; n]; d];
        let mut out_rate = vec![0.0; n];
        for a in 0..d {
            let dx2 = axes[a].width().powi(2);
            let stride = strides[a];
            for idx in 0..n {
                if (idx / stride) % axes[a].cells == axes[a].cells - 1 {
                    continue;
                }
                let dphi = phi[idx + stride] - phi[idx];
                let (fwd, bwd) = if temperature > 0.0 {
                    let z = dphi / temperature;
                    (temperature * bernoulli(z) / dx2, temperature * bernoulli(-z) / dx2)
                } else {
                    ((-dphi).max(0.0) / dx2, dphi.max(0.0) / dx2)
                };
                forward[a][idx] = fwd;
                backward[a][idx] = bwd;
                out_rate[idx] += fwd;
                out_rate[idx + stride] += bwd;
            }
        }
        let max_out_rate = out_rate.iter().copied().fold(0.0, f64::max);
        let cfl_dt = cfl_time_step(axes, p, temperature)?;
        Ok(Self {
            axes: axes.to_vec(),
            forward,
            backward,
            strides,
            max_out_rate,
            cfl_dt,
            scratch: vec![0.0; n],
        })
    }

    /// Largest admissible step: the CFL bound, further limited so that every
    /// cell keeps a nonnegative self-weight.
    pub fn max_dt(&self) -> f64 {
        if self.max_out_rate > 0.0 {
            self.cfl_dt.min(1.0 / self.max_out_rate)
        } else {
            self.cfl_dt
        }
    }

    pub fn check_dt(&self, dt: f64) -> Result<()> {
        let max_dt = self.max_dt();
        if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
            return Err(Error::Stability { dt, max_dt });
        }
        Ok(())
    }

    /// Advances `q` in place by `dt`. The step size is not re-checked.
    pub fn step(&mut self, q: &mut GridDensity, dt: f64) -> Result<()> {
        debug_assert_eq!(q.axes(), &self.axes[..]);
        let values = q.values_mut();
        self.scratch.copy_from_slice(values);
        for (a, axis) in self.axes.iter().enumerate() {
            let stride = self.strides[a];
            let (fwd, bwd) = (&self.forward[a], &self.backward[a]);
            for idx in 0..values.len() {
                if (idx / stride) % axis.cells == axis.cells - 1 {
                    continue;
                }
                let flow = dt * (fwd[idx] * values[idx] - bwd[idx] * values[idx + stride]);
                self.scratch[idx] -= flow;
                self.scratch[idx + stride] += flow;
            }
        }
        for (idx, (v, new)) in values.iter_mut().zip(&self.scratch).enumerate() {
            let new = *new;
            if new < 0.0 {
                if new < NEGATIVE_FATAL {
                    return Err(Error::NegativeDensity { value: new, cell: idx });
                }
                if new < NEGATIVE_SILENT {
                    warn!("clamping negative density {new:.3e} in cell {idx}");
                }
                *v = 0.0;
            } else {
                *v = new;
            }
        }
        Ok(())
    }
}

/// One explicit step of ∂q/∂τ = ∇·(q ∇Φ) + T Δq.
pub fn fp_step(q: &GridDensity, p: &Potential, temperature: f64, dt: f64) -> Result<GridDensity> {
    let mut solver = FokkerPlanckSolver::new(q.axes(), p, temperature)?;
    solver.check_dt(dt)?;
    let mut out = q.clone();
    solver.step(&mut out, dt)?;
    Ok(out)
}

/// Evolves a grid density over `sched`, recording free energy and σ_s.
pub fn simulate_fokker_planck(
    q0: &GridDensity,
    p: &Potential,
    temperature: f64,
    sched: &Schedule,
) -> Result<TrajectoryRecord> {
    sched.validate()?;
    let mut solver = FokkerPlanckSolver::new(q0.axes(), p, temperature)?;
    let dt = sched.dt();
    solver.check_dt(dt)?;
    let records = sched.record_steps();
    let mut snapshots = Vec::with_capacity(records.len());
    let mut q = q0.normalize()?;
    let mut next = 0;
    for step in 0..=sched.steps {
        if records[next] == step {
            snapshots.push(grid_snapshot(&q, p, temperature, sched.s_of(step), sched.horizon)?);
            next += 1;
        }
        if step < sched.steps {
            solver.step(&mut q, dt)?;
        }
    }
    Ok(TrajectoryRecord {
        snapshots,
        schedule: *sched,
        temperature,
        potential: p.clone(),
        closed_form: None,
    })
}

pub(crate) fn grid_snapshot(q: &GridDensity, p: &Potential, temperature: f64, s: f64, horizon: f64) -> Result<Snapshot> {
    let v: VelocityField = velocity_field(q, p, temperature)?;
    let sigma = horizon * horizon * entropy_production_rate(q, &v)?;
    let state = DensityState::Grid(q.clone());
    let thermo = free_energy(&state, p, temperature)?.at(s);
    Ok(Snapshot { s, state, thermo, sigma: Some(sigma) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{grid_from_gaussian, GaussianDensity};

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<Axis> {
        vec![Axis::new(lo, hi, n).unwrap()]
    }

    #[test]
    fn bernoulli_identities() {
        for z in [-30.0, -1.0, -1e-12, 0.0, 1e-12, 0.5, 40.0] {
            // B(−z) = B(z) + z
            assert!((bernoulli(-z) - bernoulli(z) - z).abs() < 1e-12 * (1.0 + z.abs()));
        }
        assert_eq!(bernoulli(800.0), 0.0);
        assert!((bernoulli(-800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_density_under_flat_landscape_is_fixed() {
        // A very shallow quadratic on a small domain stands in for constant Φ.
        let p = Potential::quadratic(1e-300, 1).unwrap();
        let q = GridDensity::from_fn(axis(-1.0, 1.0, 64), |_| 0.5).unwrap();
        let dt = cfl_time_step(q.axes(), &p, 1.0).unwrap();
        let next = fp_step(&q, &p, 1.0, dt).unwrap();
        for v in next.values() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn gibbs_state_is_stationary() {
        let p = Potential::quadratic(1.0, 1).unwrap();
        let g = GaussianDensity::univariate(0.0, 1.0).unwrap();
        let q = grid_from_gaussian(&g, &axis(-8.0, 8.0, 512)).unwrap();
        let dt = cfl_time_step(q.axes(), &p, 1.0).unwrap();
        let next = fp_step(&q, &p, 1.0, dt).unwrap();
        let change = q.values().iter().zip(next.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change < 1e-6, "max change {change}");

        let dw = Potential::double_well(1.0, 1).unwrap();
        let gibbs = GridDensity::from_fn(axis(-3.0, 3.0, 600), |x| (-dw.value_unchecked(x) / 0.25).exp())
            .unwrap()
            .normalize()
            .unwrap();
        let dt = cfl_time_step(gibbs.axes(), &dw, 0.25).unwrap();
        let next = fp_step(&gibbs, &dw, 0.25, dt).unwrap();
        let change = gibbs.values().iter().zip(next.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change < 1e-12, "max change {change}");
    }

    #[test]
    fn cfl_violation_is_reported() {
        let p = Potential::quadratic(1.0, 1).unwrap();
        let q = GridDensity::from_fn(axis(-4.0, 4.0, 256), |_| 1.0).unwrap().normalize().unwrap();
        let max_dt = cfl_time_step(q.axes(), &p, 1.0).unwrap();
        match fp_step(&q, &p, 1.0, 2.0 * max_dt) {
            Err(Error::Stability { max_dt: suggested, .. }) => assert!(suggested <= max_dt),
            other => panic!("expected stability error, got {other:?}"),
        }
    }

    #[test]
    fn mass_is_conserved_and_mean_relaxes() {
        let p = Potential::quadratic(1.0, 1).unwrap();
        let g = GaussianDensity::univariate(2.0, 1.0).unwrap();
        let q0 = grid_from_gaussian(&g, &axis(-8.0, 8.0, 1024)).unwrap();
        let solver = FokkerPlanckSolver::new(q0.axes(), &p, 1.0).unwrap();
        let sched = Schedule::with_max_dt(1.0, solver.max_dt(), 50).unwrap();
        let traj = simulate_fokker_planck(&q0, &p, 1.0, &sched).unwrap();
        traj.validate().unwrap();
        let DensityState::Grid(q1) = &traj.last().state else { unreachable!() };
        assert!((q1.mass() - 1.0).abs() < 1e-10);
        let expected = 2.0 * (-1.0f64).exp();
        assert!((q1.mean()[0] - expected).abs() < 1e-3, "mean {}", q1.mean()[0]);
        for w in traj.snapshots.windows(2) {
            assert!(w[1].thermo.free_energy <= w[0].thermo.free_energy + 1e-8);
        }
    }

    #[test]
    fn two_dimensional_relaxation() {
        let p = Potential::quadratic(1.0, 2).unwrap();
        let g = GaussianDensity::from_slices(&[1.0, -0.5], &[0.8, 0.2, 0.2, 0.6]).unwrap();
        let axes = vec![Axis::new(-6.0, 6.0, 96).unwrap(), Axis::new(-6.0, 6.0, 96).unwrap()];
        let q0 = grid_from_gaussian(&g, &axes).unwrap();
        let solver = FokkerPlanckSolver::new(&axes, &p, 0.5).unwrap();
        let sched = Schedule::with_max_dt(0.5, solver.max_dt(), 10).unwrap();
        let traj = simulate_fokker_planck(&q0, &p, 0.5, &sched).unwrap();
        let DensityState::Grid(q1) = &traj.last().state else { unreachable!() };
        let m = q1.mean();
        let decay = (-0.5f64).exp();
        assert!((m[0] - decay).abs() < 5e-3 && (m[1] + 0.5 * decay).abs() < 5e-3, "{m:?}");
        assert!((q1.mass() - 1.0).abs() < 1e-12);
        for w in traj.snapshots.windows(2) {
            assert!(w[1].thermo.free_energy <= w[0].thermo.free_energy + 1e-8);
        }
    }

    #[test]
    fn zero_temperature_transport_is_upwind() {
        let p = Potential::quadratic(1.0, 1).unwrap();
        let q0 = GridDensity::from_fn(axis(-4.0, 4.0, 400), |x| if (x[0] - 2.0).abs() < 0.5 { 1.0 } else { 0.0 })
            .unwrap()
            .normalize()
            .unwrap();
        let solver = FokkerPlanckSolver::new(q0.axes(), &p, 0.0).unwrap();
        let sched = Schedule::with_max_dt(0.5, solver.max_dt(), 5).unwrap();
        let mut q = q0.clone();
        let mut solver = solver;
        for _ in 0..sched.steps {
            solver.step(&mut q, sched.dt()).unwrap();
        }
        assert!(q.values().iter().all(|v| *v >= 0.0));
        assert!((q.mean()[0] - 2.0 * (-0.5f64).exp()).abs() < 0.02);
    }
}
