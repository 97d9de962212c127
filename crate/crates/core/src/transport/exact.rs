use super::{cost_matrix, TransportPlan};
use crate::ensemble::ParticleEnsemble;
use crate::error::{check_dim, Error, Result};

/// Largest support the exact solver accepts on either side.
pub const EXACT_MAX_ATOMS: usize = 512;

// Remaining supply or demand below this is treated as exhausted.
const MASS_EPS: f64 = 1e-15;

/// Exact optimal transport between two weighted point sets under squared
/// Euclidean cost.
///
/// Solves the transportation problem by successive shortest augmenting paths
/// with Dijkstra on reduced costs. Returns W₂ and the optimal plan.
pub fn w2_discrete_exact(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<(f64, TransportPlan)> {
    check_dim(a.dim(), b.dim())?;
    for size in [a.len(), b.len()] {
        if size > EXACT_MAX_ATOMS {
            return Err(Error::Scale { size, limit: EXACT_MAX_ATOMS });
        }
    }
    let cost = cost_matrix(a, b);
    let coupling = solve(&cost, a.weights(), b.weights());
    let plan = TransportPlan::from_coupling(a, b, coupling);
    Ok((plan.cost.max(0.0).sqrt(), plan))
}

fn solve(cost: &[f64], supply: &[f64], demand: &[f64]) -> Vec<f64> {
    let (n, m) = (supply.len(), demand.len());
    let c = |i: usize, j: usize| cost[i * m + j];
    let mut supply = supply.to_vec();
    let mut demand = demand.to_vec();
    let mut flow = vec![0.0; n * m];
    // Sources holding flow into each sink: the only backward arcs.
    let mut carriers: Vec<Vec<usize>> = vec![Vec::new(); m];

    // Reduced cost c_ij + u_i − v_j stays nonnegative on every residual arc.
    let mut u = vec![0.0; n];
    let mut v: Vec<f64> = (0..m).map(|j| (0..n).map(|i| c(i, j)).fold(f64::INFINITY, f64::min)).collect();

    let mut dist_s = vec![0.0; n];
    let mut dist_t = vec![0.0; m];
    let mut done_s = vec![false; n];
    let mut done_t = vec![false; m];
    let mut pred_s = vec![usize::MAX; n];
    let mut pred_t = vec![usize::MAX; m];

    loop {
        let mut any = false;
        for i in 0..n {
            let active = supply[i] > MASS_EPS;
            any |= active;
            dist_s[i] = if active { 0.0 } else { f64::INFINITY };
            done_s[i] = false;
            pred_s[i] = usize::MAX;
        }
        if !any {
            break;
        }
        dist_t.fill(f64::INFINITY);
        done_t.fill(false);
        pred_t.fill(usize::MAX);

        // Dense Dijkstra until the first sink with remaining demand settles.
        let target = loop {
            let mut best = f64::INFINITY;
            let mut pick = None;
            for i in 0..n {
                if !done_s[i] && dist_s[i] < best {
                    best = dist_s[i];
                    pick = Some((true, i));
                }
            }
            for j in 0..m {
                if !done_t[j] && dist_t[j] < best {
                    best = dist_t[j];
                    pick = Some((false, j));
                }
            }
            match pick {
                None => break None,
                Some((true, i)) => {
                    done_s[i] = true;
                    let row = &cost[i * m..(i + 1) * m];
                    for j in 0..m {
                        if done_t[j] {
                            continue;
                        }
                        let nd = best + (row[j] + u[i] - v[j]).max(0.0);
                        if nd < dist_t[j] {
                            dist_t[j] = nd;
                            pred_t[j] = i;
                        }
                    }
                }
                Some((false, j)) => {
                    done_t[j] = true;
                    if demand[j] > MASS_EPS {
                        break Some(j);
                    }
                    for &i in &carriers[j] {
                        if done_s[i] {
                            continue;
                        }
                        let nd = best + (v[j] - u[i] - c(i, j)).max(0.0);
                        if nd < dist_s[i] {
                            dist_s[i] = nd;
                            pred_s[i] = j;
                        }
                    }
                }
            }
        };
        let Some(t) = target else { break };
        let reach = dist_t[t];
        for i in 0..n {
            if done_s[i] {
                u[i] -= reach - dist_s[i];
            }
        }
        for j in 0..m {
            if done_t[j] {
                v[j] -= reach - dist_t[j];
            }
        }

        // Bottleneck along the path t ← i ← j ← i ... ← source.
        let mut delta = demand[t];
        let mut j = t;
        let source = loop {
            let i = pred_t[j];
            if pred_s[i] == usize::MAX {
                break i;
            }
            j = pred_s[i];
            delta = delta.min(flow[i * m + j]);
        };
        delta = delta.min(supply[source]);

        let mut j = t;
        loop {
            let i = pred_t[j];
            add_flow(&mut flow, &mut carriers, m, i, j, delta);
            if pred_s[i] == usize::MAX {
                break;
            }
            j = pred_s[i];
            add_flow(&mut flow, &mut carriers, m, i, j, -delta);
        }
        supply[source] -= delta;
        demand[t] -= delta;
    }
    flow
}

fn add_flow(flow: &mut [f64], carriers: &mut [Vec<usize>], m: usize, i: usize, j: usize, delta: f64) {
    let f = &mut flow[i * m + j];
    let before = *f;
    *f += delta;
    if *f <= MASS_EPS * 1e-3 {
        *f = 0.0;
    }
    if before == 0.0 && *f > 0.0 {
        carriers[j].push(i);
    } else if before > 0.0 && *f == 0.0 {
        carriers[j].retain(|&k| k != i);
    }
}
