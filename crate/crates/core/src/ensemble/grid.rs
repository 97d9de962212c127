use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::gaussian::GaussianDensity;
use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::numeric::{compensated_sum, NeumaierSum};

/// Absolute floor applied to cell values before any logarithm.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Log arguments are clamped to this fraction of the largest cell value.
pub const LOG_CLAMP_RELATIVE: f64 = 1e-12;
/// Grids are limited to one or two dimensions.
pub const MAX_GRID_DIM: usize = 2;
/// Largest probability mass a Gaussian rasterisation may drop at the edges.
pub const MAX_CLIPPED_MASS: f64 = 1e-6;

/// One axis of a uniform grid: `cells` equal cells covering `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        let a = Self { lo, hi, cells };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(Error::invalid(format!("axis bounds [{}, {}] are not an interval", self.lo, self.hi)));
        }
        if self.cells < 2 {
            return Err(Error::invalid("axis needs at least two cells"));
        }
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    #[inline]
    pub fn edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.width()
    }
}

/// Piecewise-constant density on a uniform grid, stored row-major (last axis
/// fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_GRID_DIM {
            return Err(Error::unsupported(format!(
                "grids support 1..={MAX_GRID_DIM} dimensions, got {}",
                axes.len()
            )));
        }
        for a in &axes {
            a.validate()?;
        }
        let n: usize = axes.iter().map(|a| a.cells).product();
        check_dim(n, values.len())?;
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("grid values must be finite and nonnegative, found {v}")));
        }
        Ok(Self { axes, values })
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(axes: Vec<Axis>, mut f: F) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.cells).product();
        let d = axes.len();
        let mut x = vec![0.0; d];
        let mut values = Vec::with_capacity(n);
        for idx in 0..n {
            fill_center(&axes, idx, &mut x);
            values.push(f(&x));
        }
        Self::new(axes, values)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::width).product()
    }

    /// Writes the centre of flat cell `idx` into `out`.
    pub fn center(&self, idx: usize, out: &mut [f64]) {
        fill_center(&self.axes, idx, out);
    }

    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.axes == other.axes
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) * self.cell_volume()
    }

    pub fn normalize(&self) -> Result<GridDensity> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Degenerate("grid carries no probability mass".into()));
        }
        let values = self.values.iter().map(|v| v / mass).collect();
        Ok(GridDensity { axes: self.axes.clone(), values })
    }

    /// Midpoint quadrature of −q log q with the floor policy of this module.
    pub fn entropy(&self) -> f64 {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        let clamp = (max * LOG_CLAMP_RELATIVE).max(DENSITY_FLOOR);
        let mut acc = NeumaierSum::new();
        for &q in &self.values {
            let q = q.max(DENSITY_FLOOR);
            acc.add(-q * q.max(clamp).ln());
        }
        acc.value() * self.cell_volume()
    }

    /// Midpoint quadrature of q Φ.
    pub fn expectation(&self, p: &Potential) -> Result<f64> {
        check_dim(p.dim(), self.dim())?;
        let mut x = vec![0.0; self.dim()];
        let mut acc = NeumaierSum::new();
        for (idx, &q) in self.values.iter().enumerate() {
            if q > 0.0 {
                self.center(idx, &mut x);
                acc.add(q * p.value_unchecked(&x));
            }
        }
        Ok(acc.value() * self.cell_volume())
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; d];
        let mut acc = vec![NeumaierSum::new(); d];
        for (idx, &q) in self.values.iter().enumerate() {
            self.center(idx, &mut x);
            for a in 0..d {
                acc[a].add(q * x[a]);
            }
        }
        let vol = self.cell_volume();
        acc.iter().map(|s| s.value() * vol).collect()
    }

    /// Covariance of the cell-centre distribution (row-major d×d).
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let m = self.mean();
        let mut x = vec![0.0; d];
        let mut acc = vec![NeumaierSum::new(); d * d];
        for (idx, &q) in self.values.iter().enumerate() {
            self.center(idx, &mut x);
            for a in 0..d {
                for b in 0..d {
                    acc[a * d + b].add(q * (x[a] - m[a]) * (x[b] - m[b]));
                }
            }
        }
        let vol = self.cell_volume();
        acc.iter().map(|s| s.value() * vol).collect()
    }

    /// Translates the grid (domain and density) by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<GridDensity> {
        check_dim(self.dim(), shift.len())?;
        let axes = self
            .axes
            .iter()
            .zip(shift)
            .map(|(a, s)| Axis { lo: a.lo + s, hi: a.hi + s, cells: a.cells })
            .collect();
        Ok(GridDensity { axes, values: self.values.clone() })
    }
}

fn fill_center(axes: &[Axis], idx: usize, out: &mut [f64]) {
    let mut rem = idx;
    for a in (0..axes.len()).rev() {
        let n = axes[a].cells;
        out[a] = axes[a].center(rem % n);
        rem /= n;
    }
}

/// Rasterises `g` at cell centres and normalises.
///
/// Fails with [`Error::Truncation`] when more than 1e-6 of the mass lies
/// outside the domain and with [`Error::Resolution`] when a cell is wider than
/// half a marginal standard deviation.
pub fn grid_from_gaussian(g: &GaussianDensity, axes: &[Axis]) -> Result<GridDensity> {
    check_dim(g.dim(), axes.len())?;
    let std = g.marginal_std();
    let mut inside = 1.0;
    for ((a, s), m) in axes.iter().zip(&std).zip(g.mean().iter()) {
        a.validate()?;
        let tail_lo = 0.5 * erfc((m - a.lo) / (s * std::f64::consts::SQRT_2));
        let tail_hi = 0.5 * erfc((a.hi - m) / (s * std::f64::consts::SQRT_2));
        inside *= 1.0 - tail_lo - tail_hi;
    }
    let clipped_mass = 1.0 - inside;
    if clipped_mass > MAX_CLIPPED_MASS {
        return Err(Error::Truncation { clipped_mass });
    }
    for (a, s) in axes.iter().zip(&std) {
        if a.width() > 0.5 * s {
            return Err(Error::Resolution(format!(
                "cell width {:.3e} exceeds half the standard deviation {:.3e}",
                a.width(),
                s
            )));
        }
    }
    GridDensity::from_fn(axes.to_vec(), |x| g.pdf(x))?.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    const H_STD: f64 = 1.418_938_533_204_672_7;

    fn axis(lo: f64, hi: f64, n: usize) -> Axis {
        Axis::new(lo, hi, n).unwrap()
    }

    #[test]
    fn normalize_uniform_grid() {
        let g = GridDensity::new(vec![axis(0.0, 1.0, 10)], vec![2.0; 10]).unwrap();
        let n = g.normalize().unwrap();
        assert!(n.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn normalize_is_idempotent() {
        let g = GridDensity::from_fn(vec![axis(-1.0, 2.0, 37)], |x| 1.0 + x[0] * x[0]).unwrap();
        let once = g.normalize().unwrap();
        let twice = once.normalize().unwrap();
        assert!((once.mass() - 1.0).abs() < 1e-12);
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn normalize_spike() {
        let mut v = vec![0.0; 16];
        v[5] = 3.0;
        let g = GridDensity::new(vec![axis(0.0, 2.0, 16)], v).unwrap().normalize().unwrap();
        assert!((g.values()[5] - 1.0 / g.cell_volume()).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_zero_mass() {
        let g = GridDensity::new(vec![axis(0.0, 1.0, 4)], vec![0.0; 4]).unwrap();
        assert!(matches!(g.normalize(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rejects_negative_or_three_dimensional_grids() {
        assert!(GridDensity::new(vec![axis(0.0, 1.0, 2)], vec![1.0, -1.0]).is_err());
        let a = axis(0.0, 1.0, 2);
        assert!(matches!(GridDensity::new(vec![a, a, a], vec![1.0; 8]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gaussian_grid_entropy_matches_closed_form() {
        let g = GaussianDensity::univariate(0.0, 1.0).unwrap();
        let grid = grid_from_gaussian(&g, &[axis(-8.0, 8.0, 2048)]).unwrap();
        assert!((grid.entropy() - H_STD).abs() < 1e-4);
        let grid = grid_from_gaussian(&g, &[axis(-8.0, 8.0, 4096)]).unwrap();
        assert!((grid.entropy() - H_STD).abs() < 1e-4);
    }

    #[test]
    fn gaussian_grid_guards() {
        let g = GaussianDensity::univariate(0.0, 1.0).unwrap();
        assert!(matches!(grid_from_gaussian(&g, &[axis(-1.0, 1.0, 256)]), Err(Error::Truncation { .. })));
        let narrow = GaussianDensity::univariate(0.0, 1e-2).unwrap();
        assert!(matches!(grid_from_gaussian(&narrow, &[axis(-8.0, 8.0, 128)]), Err(Error::Resolution(_))));
    }

    #[test]
    fn two_dimensional_moments() {
        let g = GaussianDensity::from_slices(&[0.5, -0.3], &[1.0, 0.4, 0.4, 0.5]).unwrap();
        let axes = vec![axis(-7.0, 7.0, 280), axis(-6.0, 6.0, 240)];
        let grid = grid_from_gaussian(&g, &axes).unwrap();
        let m = grid.mean();
        let c = grid.covariance();
        assert!((m[0] - 0.5).abs() < 1e-6 && (m[1] + 0.3).abs() < 1e-6);
        // Midpoint sampling adds width^2/12 to each marginal variance.
        assert!((c[0] - 1.0).abs() < 2e-3 && (c[1] - 0.4).abs() < 1e-3 && (c[3] - 0.5).abs() < 2e-3);
        assert!((grid.entropy() - g.entropy()).abs() < 1e-3);
    }

    #[test]
    fn entropy_is_translation_invariant() {
        let g = GaussianDensity::univariate(0.3, 0.7).unwrap();
        let grid = grid_from_gaussian(&g, &[axis(-6.0, 6.0, 1024)]).unwrap();
        let shifted = grid.translated(&[4.25]).unwrap();
        assert!((grid.entropy() - shifted.entropy()).abs() < 1e-14);
        assert!((shifted.mean()[0] - grid.mean()[0] - 4.25).abs() < 1e-12);
    }
}
