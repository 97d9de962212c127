use nalgebra::{DMatrix, SymmetricEigen};

use crate::ensemble::{spd_sqrt, GaussianDensity};
use crate::error::{check_dim, Result};

/// Closed-form W₂ between Gaussians (Bures-Wasserstein).
pub fn w2_gaussian(g0: &GaussianDensity, g1: &GaussianDensity) -> Result<f64> {
    Ok(w2_squared_gaussian(g0, g1)?.sqrt())
}

/// ‖μ₀ − μ₁‖² + tr(Σ₀ + Σ₁ − 2 (Σ₁^{1/2} Σ₀ Σ₁^{1/2})^{1/2}).
pub fn w2_squared_gaussian(g0: &GaussianDensity, g1: &GaussianDensity) -> Result<f64> {
    check_dim(g0.dim(), g1.dim())?;
    let dm = (g0.mean() - g1.mean()).norm_squared();
    if g0.dim() == 1 {
        let ds = g0.covariance()[(0, 0)].sqrt() - g1.covariance()[(0, 0)].sqrt();
        return Ok(dm + ds * ds);
    }
    let r1 = spd_sqrt(g1.covariance());
    let cross = spd_sqrt(&(&r1 * g0.covariance() * &r1));
    let bures = g0.covariance().trace() + g1.covariance().trace() - 2.0 * cross.trace();
    Ok(dm + bures.max(0.0))
}

/// Symmetric matrix A of the optimal map x ↦ μ₁ + A (x − μ₀):
/// A = Σ₀^{-1/2} (Σ₀^{1/2} Σ₁ Σ₀^{1/2})^{1/2} Σ₀^{-1/2}.
pub fn bures_map(g0: &GaussianDensity, g1: &GaussianDensity) -> Result<DMatrix<f64>> {
    check_dim(g0.dim(), g1.dim())?;
    let r0 = spd_sqrt(g0.covariance());
    let eig = SymmetricEigen::new(r0.clone());
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v.max(1e-14));
    let r0_inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    let mid = spd_sqrt(&(&r0 * g1.covariance() * &r0));
    let a = &r0_inv * mid * &r0_inv;
    Ok((&a + a.transpose()) * 0.5)
}
