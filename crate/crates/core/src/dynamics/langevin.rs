use rayon::prelude::*;

use super::{Schedule, Snapshot, TrajectoryRecord};
use crate::ensemble::{DensityState, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::landscape::Potential;
use crate::rng::CounterRng;
use crate::thermo::free_energy;

/// One Euler-Maruyama step θ ← θ − ∇Φ(θ) dt + √(2 T dt) ξ.
///
/// The noise of particle i is drawn from counter stream i at counter `step`,
/// so the update is a pure function of `(e, seed, step)`.
pub fn langevin_step(
    e: &ParticleEnsemble,
    p: &Potential,
    temperature: f64,
    dt: f64,
    seed: u64,
    step: usize,
) -> Result<ParticleEnsemble> {
    check_args(e, p, temperature, dt)?;
    let mut out = e.clone();
    advance(&mut out, p, temperature, dt, &CounterRng::new(seed), step)?;
    Ok(out)
}

fn check_args(e: &ParticleEnsemble, p: &Potential, temperature: f64, dt: f64) -> Result<()> {
    crate::error::check_dim(p.dim(), e.dim())?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be > 0, got {dt}")));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be >= 0, got {temperature}")));
    }
    Ok(())
}

fn advance(
    e: &mut ParticleEnsemble,
    p: &Potential,
    temperature: f64,
    dt: f64,
    rng: &CounterRng,
    step: usize,
) -> Result<()> {
    let d = e.dim();
    let amp = (2.0 * temperature * dt).sqrt();
    let finite = e
        .positions_mut()
        .par_chunks_mut(d)
        .enumerate()
        .map_init(
            || (vec![0.0; d], vec![0.0; d]),
            |(grad, noise), (i, x)| {
                p.gradient_into(x, grad);
                if amp > 0.0 {
                    rng.fill_normals(i as u64, step as u64, noise);
                }
                let mut ok = true;
                for a in 0..d {
                    x[a] += -grad[a] * dt + amp * noise[a];
                    ok &= x[a].is_finite();
                }
                ok
            },
        )
        .reduce(|| true, |a, b| a && b);
    if finite {
        Ok(())
    } else {
        Err(Error::BlowUp { step: step + 1 })
    }
}

/// Integrates the Langevin SDE over `sched`, recording particle snapshots.
///
/// Entropy production is not estimated from raw particle clouds, so the
/// snapshots carry `sigma = None`.
pub fn simulate_langevin(
    e0: &ParticleEnsemble,
    p: &Potential,
    temperature: f64,
    sched: &Schedule,
    seed: u64,
) -> Result<TrajectoryRecord> {
    sched.validate()?;
    check_args(e0, p, temperature, sched.dt())?;
    let rng = CounterRng::new(seed);
    let dt = sched.dt();
    let records = sched.record_steps();
    let mut snapshots = Vec::with_capacity(records.len());
    let mut state = e0.clone();
    let mut next = 0;
    for step in 0..=sched.steps {
        if records[next] == step {
            let s = sched.s_of(step);
            let q = DensityState::Particles(state.clone());
            let thermo = free_energy(&q, p, temperature)?.at(s);
            snapshots.push(Snapshot { s, state: q, thermo, sigma: None });
            next += 1;
        }
        if step < sched.steps {
            advance(&mut state, p, temperature, dt, &rng, step)?;
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
