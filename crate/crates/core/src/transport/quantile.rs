use statrs::distribution::{ContinuousCDF, Normal};

use crate::ensemble::{Axis, DensityState, GaussianDensity, GridDensity, ParticleEnsemble};
use crate::error::{check_dim, Error, Result};
use crate::numeric::NeumaierSum;

/// One piece of a quantile function: Q is linear from `q_lo` to `q_hi` as u
/// runs over `[u_lo, u_hi]`. Atoms have `q_lo == q_hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    u_lo: f64,
    u_hi: f64,
    q_lo: f64,
    q_hi: f64,
}

impl Segment {
    fn at(&self, u: f64) -> f64 {
        let h = self.u_hi - self.u_lo;
        if h <= 0.0 {
            return self.q_lo;
        }
        self.q_lo + (self.q_hi - self.q_lo) * ((u - self.u_lo) / h)
    }
}

/// Inverse CDF of a one-dimensional distribution, piecewise linear in u.
///
/// Grids are treated as piecewise-constant densities, so each occupied cell
/// contributes a linear piece; particles contribute flat pieces (atoms).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFunction {
    segments: Vec<Segment>,
}

impl QuantileFunction {
    pub fn from_grid(q: &GridDensity) -> Result<Self> {
        check_dim(1, q.dim())?;
        let axis = q.axes()[0];
        let w = axis.width();
        let masses: Vec<f64> = q.values().iter().map(|v| v * w).collect();
        let pieces = masses
            .iter()
            .enumerate()
            .map(|(i, m)| (*m, axis.edge(i), axis.edge(i + 1)));
        Self::from_pieces(pieces)
    }

    pub fn from_particles(e: &ParticleEnsemble) -> Result<Self> {
        check_dim(1, e.dim())?;
        let mut order: Vec<usize> = (0..e.len()).collect();
        order.sort_by(|&a, &b| e.positions()[a].total_cmp(&e.positions()[b]));
        let pieces = order.into_iter().map(|i| {
            let x = e.positions()[i];
            (e.weights()[i], x, x)
        });
        Self::from_pieces(pieces)
    }

    pub fn from_state(q: &DensityState) -> Result<Self> {
        match q {
            DensityState::Grid(g) => Self::from_grid(g),
            DensityState::Particles(e) => Self::from_particles(e),
            DensityState::Gaussian(_) => Err(Error::unsupported(
                "quantile backend takes grids or particles; use the Gaussian backend for Gaussians",
            )),
        }
    }

    /// Pieces `(mass, x_lo, x_hi)` in increasing x; zero-mass pieces are dropped.
    fn from_pieces<I: IntoIterator<Item = (f64, f64, f64)>>(pieces: I) -> Result<Self> {
        let pieces: Vec<_> = pieces.into_iter().filter(|p| p.0 > 0.0).collect();
        let mut total = NeumaierSum::new();
        for p in &pieces {
            total.add(p.0);
        }
        let total = total.value();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Degenerate("distribution carries no mass".into()));
        }
        let mut cum = NeumaierSum::new();
        let mut segments = Vec::with_capacity(pieces.len());
        let mut u = 0.0;
        for (k, (m, lo, hi)) in pieces.iter().enumerate() {
            cum.add(*m);
            let u_hi = if k + 1 == pieces.len() { 1.0 } else { (cum.value() / total).min(1.0) };
            segments.push(Segment { u_lo: u, u_hi, q_lo: *lo, q_hi: *hi });
            u = u_hi;
        }
        Ok(Self { segments })
    }

    /// Q(u) for u in [0, 1] (right-continuous at atoms).
    pub fn eval(&self, u: f64) -> f64 {
        let k = self.segments.partition_point(|s| s.u_hi <= u).min(self.segments.len() - 1);
        self.segments[k].at(u)
    }

    pub fn min(&self) -> f64 {
        self.segments[0].q_lo
    }

    pub fn max(&self) -> f64 {
        self.segments[self.segments.len() - 1].q_hi
    }

    /// Walks the common refinement of both breakpoint sets, calling `f` with
    /// `(u_lo, u_hi, a_lo, a_hi, b_lo, b_hi)` on every piece where both
    /// functions are linear.
    fn merged<F: FnMut(f64, f64, f64, f64, f64, f64)>(&self, other: &Self, mut f: F) {
        let (a, b) = (&self.segments, &other.segments);
        let (mut i, mut j, mut u) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            let hi = a[i].u_hi.min(b[j].u_hi);
            if hi > u {
                f(u, hi, a[i].at(u), a[i].at(hi), b[j].at(u), b[j].at(hi));
                u = hi;
            }
            if a[i].u_hi <= hi {
                i += 1;
            }
            if b[j].u_hi <= hi {
                j += 1;
            }
        }
    }

    /// ∫₀¹ (Q_a − Q_b)² du, exact for the piecewise-linear representation.
    pub fn w2_squared(&self, other: &Self) -> f64 {
        let mut acc = NeumaierSum::new();
        self.merged(other, |lo, hi, a0, a1, b0, b1| {
            let (d0, d1) = (a0 - b0, a1 - b1);
            acc.add((hi - lo) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0);
        });
        acc.value().max(0.0)
    }

    /// Displacement interpolation Q_s = (1 − s) Q_a + s Q_b.
    pub fn interpolate(&self, other: &Self, s: f64) -> Self {
        let mut segments = Vec::with_capacity(self.segments.len() + other.segments.len());
        self.merged(other, |lo, hi, a0, a1, b0, b1| {
            segments.push(Segment {
                u_lo: lo,
                u_hi: hi,
                q_lo: (1.0 - s) * a0 + s * b0,
                q_hi: (1.0 - s) * a1 + s * b1,
            });
        });
        Self { segments }
    }

    /// F(x) = P(X ≤ x) for the piecewise-linear quantile.
    pub fn cdf(&self, x: f64) -> f64 {
        // First segment whose upper value reaches x.
        let k = self.segments.partition_point(|s| s.q_hi < x);
        if k == self.segments.len() {
            return 1.0;
        }
        let s = &self.segments[k];
        if x < s.q_lo {
            return s.u_lo;
        }
        if s.q_hi > s.q_lo {
            s.u_lo + (s.u_hi - s.u_lo) * ((x - s.q_lo) / (s.q_hi - s.q_lo))
        } else {
            // Atom at x: include all of it, and any further atoms at x.
            let end = self.segments[k..].partition_point(|t| t.q_lo <= x);
            self.segments[k + end - 1].u_hi
        }
    }

    /// Cell averages of the density on `axis`; mass outside the axis is an error.
    pub fn to_grid(&self, axis: Axis) -> Result<GridDensity> {
        axis.validate()?;
        let tol = 1e-12 * (axis.hi - axis.lo);
        if self.min() < axis.lo - tol || self.max() > axis.hi + tol {
            return Err(Error::invalid("interpolated density leaves the target axis"));
        }
        let w = axis.width();
        let mut prev = 0.0;
        let mut values = Vec::with_capacity(axis.cells);
        for i in 0..axis.cells {
            let f = if i + 1 == axis.cells { 1.0 } else { self.cdf(axis.edge(i + 1)) };
            values.push(((f - prev) / w).max(0.0));
            prev = f;
        }
        GridDensity::new(vec![axis], values)
    }
}

/// W₂ for one-dimensional grids or particle sets by quantile integration.
pub fn w2_1d(q0: &DensityState, q1: &DensityState) -> Result<f64> {
    if q0.dim() != 1 || q1.dim() != 1 {
        return Err(Error::invalid(format!(
            "quantile W2 needs one-dimensional inputs, got {} and {}",
            q0.dim(),
            q1.dim()
        )));
    }
    let a = QuantileFunction::from_state(q0)?;
    let b = QuantileFunction::from_state(q1)?;
    Ok(a.w2_squared(&b).sqrt())
}

/// `n` equal-mass atoms of a univariate Gaussian, each at the conditional
/// mean of its quantile bin (so the atoms keep the exact mean).
pub fn gaussian_quantile_atoms(g: &GaussianDensity, n: usize) -> Result<ParticleEnsemble> {
    check_dim(1, g.dim())?;
    if n < 2 {
        return Err(Error::invalid("need at least two quantile atoms"));
    }
    let (mu, sigma) = (g.mean()[0], g.covariance()[(0, 0)].sqrt());
    let std = Normal::standard();
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let edge_pdf: Vec<f64> = (0..=n)
        .map(|i| if i == 0 || i == n { 0.0 } else { pdf(std.inverse_cdf(i as f64 / n as f64)) })
        .collect();
    let atoms = (0..n)
        .map(|i| mu + sigma * n as f64 * (edge_pdf[i] - edge_pdf[i + 1]))
        .collect();
    ParticleEnsemble::uniform(atoms, 1)
}
