use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;
use crate::numeric::{gauss_hermite_normal, NeumaierSum};

const SYMMETRY_TOL: f64 = 1e-12;

/// Multivariate normal N(mean, covariance) with SPD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

/// Plain-data form of a Gaussian used in config and density files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("Gaussian dimension must be positive"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Dimension { expected: d, got: cov.nrows() });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("Gaussian parameters must be finite"));
        }
        for i in 0..d {
            for j in 0..i {
                let scale = cov[(i, i)].abs().max(cov[(j, j)].abs()).max(1.0);
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        let chol = Cholesky::<f64, Dyn>::new(cov.clone())
            .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
        let l = chol.l();
        if l.diagonal().iter().any(|v| *v <= 0.0) {
            return Err(Error::invalid("covariance is not positive definite"));
        }
        Ok(Self { mean, cov, chol: l })
    }

    pub fn from_slices(mean: &[f64], cov_row_major: &[f64]) -> Result<Self> {
        let d = mean.len();
        if cov_row_major.len() != d * d {
            return Err(Error::Dimension { expected: d * d, got: cov_row_major.len() });
        }
        Self::new(DVector::from_column_slice(mean), DMatrix::from_row_slice(d, d, cov_row_major))
    }

    /// One-dimensional N(mu, sigma^2).
    pub fn univariate(mu: f64, sigma: f64) -> Result<Self> {
        Self::from_slices(&[mu], &[sigma * sigma])
    }

    /// Isotropic N(mean, variance * I).
    pub fn isotropic(mean: &[f64], variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(DVector::from_column_slice(mean), DMatrix::identity(d, d) * variance)
    }

    pub fn from_spec(spec: &GaussianSpec) -> Result<Self> {
        let d = spec.mean.len();
        if spec.covariance.len() != d || spec.covariance.iter().any(|r| r.len() != d) {
            return Err(Error::invalid(format!("covariance must be {d}x{d}")));
        }
        let flat: Vec<f64> = spec.covariance.iter().flatten().copied().collect();
        Self::from_slices(&spec.mean, &flat)
    }

    pub fn to_spec(&self) -> GaussianSpec {
        let d = self.dim();
        GaussianSpec {
            mean: self.mean.iter().copied().collect(),
            covariance: (0..d).map(|i| (0..d).map(|j| self.cov[(i, j)]).collect()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det_cov(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Differential entropy ½ log((2πe)^d det Σ).
    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        0.5 * (d * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + self.log_det_cov())
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let diff = DVector::from_iterator(d, x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        -0.5 * (z.norm_squared() + d as f64 * (2.0 * std::f64::consts::PI).ln() + self.log_det_cov())
    }

    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        check_dim(self.dim(), shift.len())?;
        let mean = &self.mean + DVector::from_column_slice(shift);
        Ok(Self { mean, cov: self.cov.clone(), chol: self.chol.clone() })
    }

    /// E_q[Φ]. Closed form for quadratics, tensor Gauss-Hermite otherwise (d ≤ 3).
    pub fn expectation(&self, p: &Potential) -> Result<f64> {
        check_dim(p.dim(), self.dim())?;
        if let Some(k) = p.stiffness() {
            return Ok(0.5 * k * (self.mean.norm_squared() + self.cov.trace()));
        }
        let d = self.dim();
        let order = match d {
            1 => 64,
            2 => 32,
            3 => 16,
            _ => return Err(Error::unsupported("Gauss-Hermite expectation beyond three dimensions")),
        };
        let (nodes, weights) = gauss_hermite_normal(order);
        let mut idx = vec![0usize; d];
        let mut z = DVector::zeros(d);
        let mut acc = NeumaierSum::new();
        loop {
            let mut w = 1.0;
            for (a, &i) in idx.iter().enumerate() {
                z[a] = nodes[i];
                w *= weights[i];
            }
            let x = &self.mean + &self.chol * &z;
            acc.add(w * p.value_unchecked(x.as_slice()));
            let mut a = 0;
            loop {
                idx[a] += 1;
                if idx[a] < order {
                    break;
                }
                idx[a] = 0;
                a += 1;
                if a == d {
                    return Ok(acc.value());
                }
            }
        }
    }

    /// Standard deviation of each coordinate.
    pub fn marginal_std(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.cov[(i, i)].sqrt()).collect()
    }
}

/// Symmetric square root via eigendecomposition, eigenvalues floored at 1e-14.
pub fn spd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(1e-14).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::Bump;

    const H_STD: f64 = 1.418_938_533_204_672_7;

    #[test]
    fn univariate_entropy_matches_closed_form() {
        let g = GaussianDensity::univariate(0.0, 1.0).unwrap();
        assert!((g.entropy() - H_STD).abs() < 1e-12);
        let g2 = GaussianDensity::univariate(0.0, 2.0).unwrap();
        assert!((g2.entropy() - (H_STD + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_covariances() {
        assert!(GaussianDensity::from_slices(&[0.0, 0.0], &[1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(GaussianDensity::from_slices(&[0.0, 0.0], &[1.0, 0.1, 0.2, 1.0]).is_err());
        assert!(GaussianDensity::from_slices(&[0.0], &[0.0]).is_err());
        assert!(GaussianDensity::from_slices(&[0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn quadratic_expectation_closed_form() {
        let p = Potential::quadratic(1.0, 1).unwrap();
        let e = |mu| GaussianDensity::univariate(mu, 1.0).unwrap().expectation(&p).unwrap();
        assert!((e(0.0) - 0.5).abs() < 1e-15);
        assert!((e(2.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn hermite_expectation_matches_double_well_moments() {
        // E[(X^2 - a)^2]/4 with X ~ N(m, s^2): E X^4 - 2a E X^2 + a^2.
        let (m, s, a) = (0.7_f64, 0.4_f64, 1.0);
        let ex2 = m * m + s * s;
        let ex4 = m.powi(4) + 6.0 * m * m * s * s + 3.0 * s.powi(4);
        let exact = 0.25 * (ex4 - 2.0 * a * ex2 + a * a);
        let g = GaussianDensity::univariate(m, s).unwrap();
        let p = Potential::double_well(a, 1).unwrap();
        assert!((g.expectation(&p).unwrap() - exact).abs() < 1e-13);
    }

    #[test]
    fn hermite_expectation_for_mixture_well_in_2d() {
        // Closed form: E exp(-|x-c|^2/(2r^2)) for x ~ N(m, s^2 I) in 2D is
        // (r^2/(r^2+s^2)) exp(-|m-c|^2 / (2(r^2+s^2))).
        let (s, r, w) = (0.5_f64, 0.8_f64, 1.3);
        let c = vec![0.4, -0.2];
        let m = [0.1, 0.3];
        let p = Potential::gaussian_mixture_well(2.0, vec![Bump { w, c: c.clone(), rho: r }], 2).unwrap();
        let g = GaussianDensity::isotropic(&m, s * s).unwrap();
        let d2 = (m[0] - c[0]).powi(2) + (m[1] - c[1]).powi(2);
        let bump = w * (r * r / (r * r + s * s)) * (-d2 / (2.0 * (r * r + s * s))).exp();
        let envelope = 0.5 * 2.0 * (m[0] * m[0] + m[1] * m[1] + 2.0 * s * s);
        assert!((g.expectation(&p).unwrap() - (envelope - bump)).abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let r = spd_sqrt(&m);
        assert!((&r * &r - &m).norm() < 1e-13);
    }

    #[test]
    fn log_pdf_normalizes() {
        let g = GaussianDensity::univariate(1.0, 0.5).unwrap();
        let h = 1e-3;
        let mass: f64 = (0..8000).map(|i| g.pdf(&[-3.0 + (i as f64 + 0.5) * h]) * h).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
}
