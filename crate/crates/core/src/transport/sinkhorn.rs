use rayon::prelude::*;

use super::{cost_matrix, TransportPlan};
use crate::ensemble::ParticleEnsemble;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Entropic regularisation ε (absolute, in units of squared distance).
    pub epsilon: f64,
    /// Total iteration budget across all ε stages.
    pub max_iters: usize,
    /// Stop once the L1 marginal violation falls to this level. The final
    /// plan is then projected onto the exact marginals.
    pub tol: f64,
    /// Anneal ε down from the cost scale, halving per stage.
    pub epsilon_scaling: bool,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self { epsilon: 1e-3, max_iters: 20_000, tol: 1e-4, epsilon_scaling: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornOutcome {
    /// ⟨plan, C⟩ without the entropy term; the distance is its square root.
    pub plan: TransportPlan,
    pub iterations: usize,
    pub violation: f64,
}

impl SinkhornOutcome {
    pub fn distance(&self) -> f64 {
        self.plan.cost.max(0.0).sqrt()
    }
}

// Iterations allowed for each intermediate ε stage.
const STAGE_ITERS: usize = 100;
const STAGE_TOL: f64 = 1e-4;
// Scalings are folded into the log potentials once they leave this range.
const ABSORB: f64 = 1e100;

/// Entropic optimal transport by alternating scaling, stabilised in the log
/// domain.
///
/// Potentials (f, g) live in log space; each inner iteration scales the
/// kernel exp((f_i + g_j − C_ij)/ε) by (u, v) and folds the scalings back into
/// (f, g) whenever they grow large, so nothing underflows even at small ε.
/// ε is annealed from the cost scale when `epsilon_scaling` is set.
///
/// The returned cost is ⟨plan, C⟩, so it estimates the same quantity as the
/// exact solver, biased upwards by O(ε).
pub fn sinkhorn(a: &ParticleEnsemble, b: &ParticleEnsemble, opts: &SinkhornOptions) -> Result<SinkhornOutcome> {
    check_dim(a.dim(), b.dim())?;
    if !(opts.epsilon > 0.0 && opts.epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be > 0, got {}", opts.epsilon)));
    }
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::invalid("sinkhorn needs tol > 0 and max_iters >= 1"));
    }
    let (n, m) = (a.len(), b.len());
    let cost = cost_matrix(a, b);
    let (wa, wb) = (a.weights(), b.weights());

    let c_max = cost.iter().copied().fold(0.0, f64::max);
    let mut stages = Vec::new();
    if opts.epsilon_scaling {
        let mut eps = c_max.max(opts.epsilon);
        while eps > opts.epsilon {
            stages.push(eps);
            eps *= 0.5;
        }
    }
    stages.push(opts.epsilon);

    let mut w = Workspace::new(n, m);
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let last = stages.len() - 1;
    for (k, &eps) in stages.iter().enumerate() {
        let (budget, tol) = if k == last {
            (opts.max_iters.saturating_sub(iterations).max(1), opts.tol)
        } else {
            (STAGE_ITERS, STAGE_TOL.max(opts.tol))
        };
        w.rebuild(&cost, eps);
        for _ in 0..budget {
            let (viol, underflow) = w.scale_rows(wa);
            violation = viol;
            if underflow {
                // Some row of the kernel vanished: take this half step in
                // the log domain instead.
                w.absorb(eps);
                update(&mut w.f, &w.g, |i, j| cost[i * m + j], wa, eps);
                w.rebuild(&cost, eps);
            }
            if w.scale_cols(wb) {
                w.absorb(eps);
                update(&mut w.g, &w.f, |j, i| cost[i * m + j], wb, eps);
                w.rebuild(&cost, eps);
            }
            iterations += 1;
            if w.needs_absorb() {
                w.absorb(eps);
                w.rebuild(&cost, eps);
            }
            if violation <= tol || iterations >= opts.max_iters {
                break;
            }
        }
        // Report the violation of the final iterate.
        violation = w.row_violation(wa);
        w.absorb(eps);
        if iterations >= opts.max_iters && violation > opts.tol {
            return Err(Error::Convergence { iterations, violation });
        }
    }

    w.rebuild(&cost, opts.epsilon);
    let coupling = round_to_marginals(w.kernel, wa, wb);
    let plan = TransportPlan::from_coupling(a, b, coupling);
    Ok(SinkhornOutcome { plan, iterations, violation })
}

struct Workspace {
    n: usize,
    m: usize,
    f: Vec<f64>,
    g: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    /// exp((f_i + g_j − C_ij)/ε), row-major, and its transpose.
    kernel: Vec<f64>,
    kernel_t: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            f: vec![0.0; n],
            g: vec![0.0; m],
            u: vec![1.0; n],
            v: vec![1.0; m],
            kernel: vec![0.0; n * m],
            kernel_t: vec![0.0; n * m],
        }
    }

    fn rebuild(&mut self, cost: &[f64], eps: f64) {
        let (m, n) = (self.m, self.n);
        let (f, g) = (&self.f, &self.g);
        self.kernel.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            for (j, k) in row.iter_mut().enumerate() {
                let e = (f[i] + g[j] - cost[i * m + j]) / eps;
                *k = if e.is_nan() { 0.0 } else { e.exp() };
            }
        });
        let kernel = &self.kernel;
        self.kernel_t.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
            for (i, k) in col.iter_mut().enumerate() {
                *k = kernel[i * m + j];
            }
        });
        self.u.fill(1.0);
        self.v.fill(1.0);
    }

    /// u = a / (K v); returns the row violation Σ|u_i (K v)_i − a_i| before
    /// the update (columns are exact after the previous column step) and
    /// whether any row underflowed.
    fn scale_rows(&mut self, a: &[f64]) -> (f64, bool) {
        let (m, v) = (self.m, &self.v);
        let kernel = &self.kernel;
        let rows: Vec<(f64, bool)> = self
            .u
            .par_iter_mut()
            .enumerate()
            .map(|(i, ui)| {
                let kv = dot(&kernel[i * m..(i + 1) * m], v);
                let before = (*ui * kv - a[i]).abs();
                if a[i] == 0.0 {
                    *ui = 0.0;
                } else if kv > 0.0 && kv.is_finite() {
                    *ui = a[i] / kv;
                } else {
                    return (before, true);
                }
                (before, false)
            })
            .collect();
        (rows.iter().map(|r| r.0).sum(), rows.iter().any(|r| r.1))
    }

    /// v = b / (Kᵀ u); returns whether any column underflowed.
    fn scale_cols(&mut self, b: &[f64]) -> bool {
        let (n, u) = (self.n, &self.u);
        let kernel_t = &self.kernel_t;
        self.v
            .par_iter_mut()
            .enumerate()
            .map(|(j, vj)| {
                let ku = dot(&kernel_t[j * n..(j + 1) * n], u);
                if b[j] == 0.0 {
                    *vj = 0.0;
                } else if ku > 0.0 && ku.is_finite() {
                    *vj = b[j] / ku;
                } else {
                    return true;
                }
                false
            })
            .reduce(|| false, |x, y| x || y)
    }

    fn row_violation(&self, a: &[f64]) -> f64 {
        let m = self.m;
        (0..self.n)
            .map(|i| (self.u[i] * dot(&self.kernel[i * m..(i + 1) * m], &self.v) - a[i]).abs())
            .sum()
    }

    fn needs_absorb(&self) -> bool {
        let out = |x: &f64| !(x.abs() < ABSORB && (*x == 0.0 || x.abs() > 1.0 / ABSORB));
        self.u.iter().chain(&self.v).any(out)
    }

    fn absorb(&mut self, eps: f64) {
        for (fi, ui) in self.f.iter_mut().zip(&self.u) {
            *fi += eps * ui.ln();
        }
        for (gj, vj) in self.g.iter_mut().zip(&self.v) {
            *gj += eps * vj.ln();
        }
        self.u.fill(1.0);
        self.v.fill(1.0);
    }
}

/// Log-domain half step f_i = ε log w_i − ε log Σ_j exp((g_j − C(i, j))/ε).
fn update<C: Fn(usize, usize) -> f64 + Sync>(f: &mut [f64], g: &[f64], cost: C, w: &[f64], eps: f64) {
    f.par_iter_mut().enumerate().for_each(|(i, fi)| {
        if w[i] == 0.0 {
            *fi = f64::NEG_INFINITY;
            return;
        }
        let mx = g.iter().enumerate().map(|(j, gj)| gj - cost(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = g.iter().enumerate().map(|(j, gj)| ((gj - cost(i, j) - mx) / eps).exp()).sum();
        *fi = eps * w[i].ln() - mx - eps * s.ln();
    });
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Projects an approximate coupling onto the transport polytope: scale rows
/// and columns down to their targets, then spread the missing mass as a
/// rank-one correction. The L1 change is at most twice the violation.
fn round_to_marginals(mut p: Vec<f64>, a: &[f64], b: &[f64]) -> Vec<f64> {
    let m = b.len();
    for (row, &ai) in p.chunks_mut(m).zip(a) {
        let r: f64 = row.iter().sum();
        if r > ai {
            let k = ai / r;
            row.iter_mut().for_each(|v| *v *= k);
        }
    }
    let mut col = vec![0.0; m];
    for row in p.chunks(m) {
        for (c, v) in col.iter_mut().zip(row) {
            *c += v;
        }
    }
    let scale: Vec<f64> = col.iter().zip(b).map(|(c, bj)| if *c > *bj { bj / c } else { 1.0 }).collect();
    for row in p.chunks_mut(m) {
        for (v, k) in row.iter_mut().zip(&scale) {
            *v *= k;
        }
    }
    let err_a: Vec<f64> = p.chunks(m).zip(a).map(|(row, ai)| (ai - row.iter().sum::<f64>()).max(0.0)).collect();
    let mut err_b = b.to_vec();
    for row in p.chunks(m) {
        for (e, v) in err_b.iter_mut().zip(row) {
            *e -= v;
        }
    }
    err_b.iter_mut().for_each(|e| *e = e.max(0.0));
    let total: f64 = err_a.iter().sum();
    if total > 0.0 {
        for (row, ea) in p.chunks_mut(m).zip(&err_a) {
            for (v, eb) in row.iter_mut().zip(&err_b) {
                *v += ea * eb / total;
            }
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::transport::w2_discrete_exact;

    fn uniform(x: &[f64], d: usize) -> ParticleEnsemble {
        ParticleEnsemble::uniform(x.to_vec(), d).unwrap()
    }

    fn cloud(seed: u64, n: usize, d: usize, shift: f64) -> ParticleEnsemble {
        let rng = CounterRng::new(seed);
        let mut x = vec![0.0; n * d];
        for (i, p) in x.chunks_mut(d).enumerate() {
            rng.fill_normals(i as u64, 0, p);
        }
        uniform(&x.iter().map(|v| v + shift).collect::<Vec<_>>(), d)
    }

    #[test]
    fn identical_sets_bias_bounded_by_entropy() {
        let a = uniform(&[0.0, 1.0, 2.5, -1.0], 1);
        let opts = SinkhornOptions { epsilon: 1e-2, ..Default::default() };
        let out = sinkhorn(&a, &a, &opts).unwrap();
        assert!(out.plan.cost <= 1e-2 * 4f64.ln() + 1e-6, "{}", out.plan.cost);
    }

    #[test]
    fn two_atoms_near_exact() {
        let out = sinkhorn(&uniform(&[0.0, 1.0], 1), &uniform(&[1.0, 2.0], 1), &SinkhornOptions::default()).unwrap();
        assert!((out.plan.cost - 1.0).abs() < 5e-3);
        assert!(out.violation <= 1e-4);
    }

    #[test]
    fn epsilon_ladder_decreases_to_exact() {
        let a = cloud(1, 60, 2, 0.0);
        let b = cloud(2, 50, 2, 1.5);
        let (w, _) = w2_discrete_exact(&a, &b).unwrap();
        let exact = w * w;
        let mut prev = f64::INFINITY;
        for eps in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3] {
            let out = sinkhorn(&a, &b, &SinkhornOptions { epsilon: eps, ..Default::default() }).unwrap();
            let c = out.plan.cost;
            assert!(c <= prev + 1e-9, "eps {eps}: {c} > {prev}");
            assert!(c >= exact - 1e-6, "eps {eps}: {c} < exact {exact}");
            prev = c;
        }
        assert!((prev - exact).abs() < 5e-3, "{prev} vs {exact}");
    }

    #[test]
    fn plan_marginals() {
        let a = cloud(4, 40, 1, 0.0);
        let b = ParticleEnsemble::weighted((0..30).map(|k| k as f64 * 0.1).collect(), 1, (1..=30).map(f64::from).collect())
            .unwrap();
        let out = sinkhorn(&a, &b, &SinkhornOptions::default()).unwrap();
        out.plan.validate(a.weights(), b.weights()).unwrap();
    }

    #[test]
    fn budget_exhaustion_reports_violation() {
        let a = cloud(5, 30, 1, 0.0);
        let b = cloud(6, 30, 1, 3.0);
        let opts = SinkhornOptions { epsilon: 1e-4, max_iters: 3, tol: 1e-12, epsilon_scaling: false };
        match sinkhorn(&a, &b, &opts) {
            Err(Error::Convergence { iterations, violation }) => {
                assert_eq!(iterations, 3);
                assert!(violation > 1e-12);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn rounding_restores_exact_marginals() {
        let p = vec![0.3, 0.1, 0.05, 0.5];
        let q = round_to_marginals(p, &[0.5, 0.5], &[0.4, 0.6]);
        let rows = [q[0] + q[1], q[2] + q[3]];
        let cols = [q[0] + q[2], q[1] + q[3]];
        for (x, y) in rows.iter().chain(&cols).zip([0.5, 0.5, 0.4, 0.6]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(q.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn cold_start_at_small_epsilon_survives_underflow() {
        let a = cloud(7, 20, 1, 0.0);
        let b = cloud(8, 20, 1, 10.0);
        let opts = SinkhornOptions { epsilon: 1e-2, epsilon_scaling: false, ..Default::default() };
        let out = sinkhorn(&a, &b, &opts).unwrap();
        let (w, _) = w2_discrete_exact(&a, &b).unwrap();
        assert!((out.plan.cost - w * w).abs() < 1e-2, "{} vs {}", out.plan.cost, w * w);
    }

    #[test]
    fn zero_weight_atoms() {
        let a = ParticleEnsemble::new(vec![0.0, 5.0, 1.0], 1, vec![0.5, 0.0, 0.5], 0).unwrap();
        let b = uniform(&[1.0, 2.0], 1);
        let out = sinkhorn(&a, &b, &SinkhornOptions::default()).unwrap();
        assert_eq!(out.plan.row_sums()[1], 0.0);
        assert!((out.plan.cost - 1.0).abs() < 5e-3);
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let a = uniform(&[0.0, 1.0], 1);
        assert!(sinkhorn(&a, &a, &SinkhornOptions { epsilon: 0.0, ..Default::default() }).is_err());
    }
}
