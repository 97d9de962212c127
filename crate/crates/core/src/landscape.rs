//! Objective potentials with analytic gradients.
//!
//! Three confining families are available:
//!
//! * `Quadratic`: `k/2 |x|^2`
//! * `DoubleWell`: `sum_i (x_i^2 - a)^2 / 4`, separable, with `2^d` minima
//! * `GaussianMixtureWell`: `kappa/2 |x|^2 - sum_j w_j exp(-|x - c_j|^2 / (2 rho_j^2))`

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub w: f64,
    pub c: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    Quadratic { k: f64 },
    DoubleWell { a: f64 },
    GaussianMixtureWell { kappa: f64, bumps: Vec<Bump> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    #[serde(flatten)]
    kind: PotentialKind,
    dim: usize,
    #[serde(default = "unit_scale", skip_serializing_if = "is_unit")]
    scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

fn is_unit(v: &f64) -> bool {
    *v == 1.0
}

impl Potential {
    pub fn new(kind: PotentialKind, dim: usize) -> Result<Self> {
        let p = Self { kind, dim, scale: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn quadratic(k: f64, dim: usize) -> Result<Self> {
        Self::new(PotentialKind::Quadratic { k }, dim)
    }

    pub fn double_well(a: f64, dim: usize) -> Result<Self> {
        Self::new(PotentialKind::DoubleWell { a }, dim)
    }

    pub fn gaussian_mixture_well(kappa: f64, bumps: Vec<Bump>, dim: usize) -> Result<Self> {
        Self::new(PotentialKind::GaussianMixtureWell { kappa, bumps }, dim)
    }

    /// Checks parameter ranges; deserialized potentials should be validated
    /// before use.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("potential dimension must be positive"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid("potential scale must be finite and > 0"));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match &self.kind {
            PotentialKind::Quadratic { k } => positive("k", *k),
            PotentialKind::DoubleWell { a } => positive("a", *a),
            PotentialKind::GaussianMixtureWell { kappa, bumps } => {
                positive("kappa", *kappa)?;
                for b in bumps {
                    positive("bump w", b.w)?;
                    positive("bump rho", b.rho)?;
                    check_dim(self.dim, b.c.len())?;
                    if b.c.iter().any(|c| !c.is_finite()) {
                        return Err(Error::invalid("bump centre must be finite"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Effective stiffness when the potential is quadratic.
    pub fn stiffness(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::Quadratic { k } => Some(k * self.scale),
            _ => None,
        }
    }

    /// Overall multiplier applied to Φ (1 unless the potential was rescaled).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The same landscape multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Potential> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::invalid("scale factor must be > 0"));
        }
        let mut p = self.clone();
        p.scale *= factor;
        Ok(p)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.value_unchecked(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    /// Φ(x) without the dimension check; `x.len()` must equal `dim`.
    #[inline]
    pub fn value_unchecked(&self, x: &[f64]) -> f64 {
        self.scale * self.base_value(x)
    }

    #[inline]
    fn base_value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Quadratic { k } => 0.5 * k * norm_sq(x),
            PotentialKind::DoubleWell { a } => x.iter().map(|xi| 0.25 * (xi * xi - a).powi(2)).sum(),
            PotentialKind::GaussianMixtureWell { kappa, bumps } => {
                let mut v = 0.5 * kappa * norm_sq(x);
                for b in bumps {
                    v -= b.w * (-dist_sq(x, &b.c) / (2.0 * b.rho * b.rho)).exp();
                }
                v
            }
        }
    }

    /// ∇Φ(x) written into `out`; both slices must have length `dim`.
    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            PotentialKind::Quadratic { k } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = k * xi;
                }
            }
            PotentialKind::DoubleWell { a } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi * (xi * xi - a);
                }
            }
            PotentialKind::GaussianMixtureWell { kappa, bumps } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = kappa * xi;
                }
                for b in bumps {
                    let r2 = b.rho * b.rho;
                    let e = b.w * (-dist_sq(x, &b.c) / (2.0 * r2)).exp() / r2;
                    for ((o, xi), ci) in out.iter_mut().zip(x).zip(&b.c) {
                        *o += e * (xi - ci);
                    }
                }
            }
        }
        if self.scale != 1.0 {
            for o in out.iter_mut() {
                *o *= self.scale;
            }
        }
    }

    /// A value no greater than inf Φ.
    pub fn lower_bound(&self) -> f64 {
        match &self.kind {
            PotentialKind::Quadratic { .. } | PotentialKind::DoubleWell { .. } => 0.0,
            PotentialKind::GaussianMixtureWell { bumps, .. } => -self.scale * bumps.iter().map(|b| b.w).sum::<f64>(),
        }
    }
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences of `value`, measured as `|g - g_fd| / (1 + |g|)`.
pub fn gradient_check(p: &Potential, probes: &[Vec<f64>], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be > 0"));
    }
    let mut worst: f64 = 0.0;
    let mut x = vec![0.0; p.dim()];
    for probe in probes {
        let g = p.gradient(probe)?;
        let mut diff_sq = 0.0;
        for i in 0..p.dim() {
            x.copy_from_slice(probe);
            x[i] = probe[i] + h;
            let up = p.value_unchecked(&x);
            x[i] = probe[i] - h;
            let down = p.value_unchecked(&x);
            let fd = (up - down) / (2.0 * h);
            diff_sq += (g[i] - fd).powi(2);
        }
        worst = worst.max(diff_sq.sqrt() / (1.0 + norm_sq(&g).sqrt()));
    }
    Ok(worst)
}

#[inline]
fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[inline]
fn dist_sq(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn probes(dim: usize, n: usize, spread: f64) -> Vec<Vec<f64>> {
        let rng = CounterRng::new(99);
        (0..n as u64)
            .map(|i| {
                let mut z = vec![0.0; dim];
                rng.fill_normals(i, 0, &mut z);
                z.iter().map(|v| spread * v).collect()
            })
            .collect()
    }

    fn mixture(dim: usize) -> Potential {
        let bumps = vec![
            Bump { w: 1.5, c: vec![1.0; dim], rho: 0.6 },
            Bump { w: 0.8, c: vec![-1.2; dim], rho: 0.9 },
        ];
        Potential::gaussian_mixture_well(0.5, bumps, dim).unwrap()
    }

    #[test]
    fn quadratic_values() {
        let p = Potential::quadratic(1.0, 1).unwrap();
        assert_eq!(p.value(&[0.0]).unwrap(), 0.0);
        assert_eq!(p.value(&[2.0]).unwrap(), 2.0);
        assert_eq!(p.gradient(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn double_well_values() {
        let p = Potential::double_well(1.0, 1).unwrap();
        assert_eq!(p.value(&[1.0]).unwrap(), 0.0);
        assert_eq!(p.gradient(&[0.0]).unwrap(), vec![0.0]);
        // Oracle: central difference of the value at h = 1e-5.
        let h = 1e-5;
        let fd = (p.value(&[2.0 + h]).unwrap() - p.value(&[2.0 - h]).unwrap()) / (2.0 * h);
        let g = p.gradient(&[2.0]).unwrap()[0];
        // ∇[(θ² − 1)²/4] = θ(θ² − 1) = 6 at θ = 2.
        assert!((g - 6.0).abs() < 1e-12);
        assert!((g - fd).abs() < 1e-8);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = Potential::quadratic(1.0, 2).unwrap();
        assert_eq!(p.value(&[1.0]), Err(Error::Dimension { expected: 2, got: 1 }));
        assert!(p.gradient(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(Potential::quadratic(0.0, 1).is_err());
        assert!(Potential::double_well(-1.0, 1).is_err());
        assert!(Potential::gaussian_mixture_well(1.0, vec![Bump { w: 1.0, c: vec![0.0], rho: 0.0 }], 1).is_err());
        assert!(Potential::gaussian_mixture_well(1.0, vec![Bump { w: 1.0, c: vec![0.0, 1.0], rho: 1.0 }], 1).is_err());
        assert!(Potential::quadratic(1.0, 0).is_err());
    }

    #[test]
    fn gradient_checks_pass_for_all_families() {
        for dim in 1..=3 {
            let quad = Potential::quadratic(1.7, dim).unwrap();
            let dw = Potential::double_well(1.0, dim).unwrap();
            let gm = mixture(dim);
            let pts = probes(dim, 100, 1.5);
            assert!(gradient_check(&quad, &pts, 1e-4).unwrap() <= 1e-6);
            assert!(gradient_check(&dw, &pts, 1e-4).unwrap() <= 1e-5);
            assert!(gradient_check(&gm, &pts, 1e-4).unwrap() <= 1e-5);
        }
        assert!(gradient_check(&mixture(1), &[], 0.0).is_err());
    }

    #[test]
    fn lower_bound_is_below_grid_minimum() {
        for p in [Potential::quadratic(2.0, 2).unwrap(), Potential::double_well(1.0, 2).unwrap(), mixture(2)] {
            let mut min = f64::INFINITY;
            for i in 0..=200 {
                for j in 0..=200 {
                    let x = [-4.0 + 0.04 * i as f64, -4.0 + 0.04 * j as f64];
                    min = min.min(p.value(&x).unwrap());
                }
            }
            assert!(p.lower_bound() <= min);
        }
    }

    #[test]
    fn potentials_are_confining() {
        for p in [Potential::double_well(1.0, 2).unwrap(), mixture(2)] {
            assert!(p.value(&[30.0, -30.0]).unwrap() > p.value(&[3.0, -3.0]).unwrap());
            assert!(p.value(&[1e3, 0.0]).unwrap() > 1e5);
        }
    }

    #[test]
    fn config_schema_round_trips() {
        let p = mixture(1);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"kind\":\"gaussian-mixture-well\""));
        let back: Potential = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let q: Potential = serde_json::from_str(r#"{"kind":"quadratic","k":2.0,"dim":1}"#).unwrap();
        assert_eq!(q.stiffness(), Some(2.0));
        assert_eq!(q.scaled(0.5).unwrap().stiffness(), Some(1.0));
    }

    #[test]
    fn scaling_multiplies_value_and_gradient() {
        let p = Potential::double_well(1.0, 2).unwrap();
        let q = p.scaled(0.25).unwrap();
        let x = [1.7, -0.3];
        assert!((q.value(&x).unwrap() - 0.25 * p.value(&x).unwrap()).abs() < 1e-15);
        let (gp, gq) = (p.gradient(&x).unwrap(), q.gradient(&x).unwrap());
        assert!((gq[0] - 0.25 * gp[0]).abs() < 1e-15);
        assert!(gradient_check(&q, &[x.to_vec()], 1e-4).unwrap() < 1e-6);
    }
}
