use nalgebra::{DMatrix, DVector};

use crate::ensemble::{GaussianDensity, GridDensity, LOG_CLAMP_RELATIVE};
use crate::error::{check_dim, Error, Result};
use crate::landscape::Potential;

/// Probability-flow velocity v = −∇(Φ + T log q).
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityField {
    /// Cell-centred samples on the grid of a density, row-major `cells × dim`.
    Grid {
        axes: Vec<crate::ensemble::Axis>,
        dim: usize,
        values: Vec<f64>,
    },
    /// Affine field v(x) = A x + b, exact for Gaussian states under quadratic
    /// potentials.
    Affine { matrix: DMatrix<f64>, offset: DVector<f64> },
}

impl VelocityField {
    /// Velocity at flat cell `idx` (grid fields only).
    pub fn at_cell(&self, idx: usize) -> Option<&[f64]> {
        match self {
            VelocityField::Grid { dim, values, .. } => Some(&values[idx * dim..(idx + 1) * dim]),
            VelocityField::Affine { .. } => None,
        }
    }

    /// Largest Euclidean norm over the grid.
    pub fn max_norm(&self) -> Option<f64> {
        match self {
            VelocityField::Grid { dim, values, .. } => Some(
                values
                    .chunks(*dim)
                    .map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt())
                    .fold(0.0, f64::max),
            ),
            VelocityField::Affine { .. } => None,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            VelocityField::Affine { matrix, offset } => {
                let v = matrix * DVector::from_column_slice(x) + offset;
                Some(v.iter().copied().collect())
            }
            VelocityField::Grid { .. } => None,
        }
    }

    /// Closed-form field of N(m, V) under Φ = k|x|²/2:
    /// v(x) = (T V⁻¹ − k I) x − T V⁻¹ m.
    pub fn gaussian_ou(g: &GaussianDensity, k: f64, temperature: f64) -> Result<Self> {
        let d = g.dim();
        let inv = g
            .covariance()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("covariance is not positive definite"))?
            .inverse();
        let matrix = &inv * temperature - DMatrix::identity(d, d) * k;
        let offset = -(&inv * g.mean()) * temperature;
        Ok(VelocityField::Affine { matrix, offset })
    }

    /// ∫ q |v|² for a Gaussian q and affine v: |A m + b|² + tr(A Σ Aᵀ).
    pub fn gaussian_action_rate(&self, g: &GaussianDensity) -> Result<f64> {
        match self {
            VelocityField::Affine { matrix, offset } => {
                check_dim(g.dim(), offset.len())?;
                let drift = matrix * g.mean() + offset;
                Ok(drift.norm_squared() + (matrix * g.covariance() * matrix.transpose()).trace())
            }
            VelocityField::Grid { .. } => Err(Error::unsupported("grid velocity with a Gaussian density")),
        }
    }
}

/// Grid velocity field. ∇Φ is analytic at cell centres; ∇ log q uses central
/// differences in the interior and second-order one-sided differences at the
/// boundary or next to cells below the log clamp (1e-12 of the maximum).
/// Cells below the clamp carry no velocity.
pub fn velocity_field(q: &GridDensity, p: &Potential, temperature: f64) -> Result<VelocityField> {
    check_dim(p.dim(), q.dim())?;
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be >= 0, got {temperature}")));
    }
    let d = q.dim();
    let axes = q.axes().to_vec();
    let values = q.values();
    let n = values.len();
    let max = values.iter().copied().fold(0.0, f64::max);
    let clamp = max * LOG_CLAMP_RELATIVE;
    let log_q: Vec<f64> = values.iter().map(|v| v.max(clamp).max(f64::MIN_POSITIVE).ln()).collect();
    let mut strides = vec![1; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * axes[a + 1].cells;
    }
    let mut out = vec![0.0; n * d];
    let mut x = vec![0.0; d];
    let mut grad = vec![0.0; d];
    for idx in 0..n {
        if values[idx] < clamp || values[idx] <= 0.0 {
            continue;
        }
        q.center(idx, &mut x);
        p.gradient_into(&x, &mut grad);
        for a in 0..d {
            let v = if temperature > 0.0 {
                let (stride, cells, h) = (strides[a], axes[a].cells, axes[a].width());
                let i = (idx / stride) % cells;
                let live = |j: usize| values[j] >= clamp && values[j] > 0.0;
                let left = i > 0 && live(idx - stride);
                let right = i + 1 < cells && live(idx + stride);
                let left2 = left && i > 1 && live(idx - 2 * stride);
                let right2 = right && i + 2 < cells && live(idx + 2 * stride);
                let dlog = match (left, right) {
                    (true, true) => (log_q[idx + stride] - log_q[idx - stride]) / (2.0 * h),
                    (false, true) if right2 => {
                        (-3.0 * log_q[idx] + 4.0 * log_q[idx + stride] - log_q[idx + 2 * stride]) / (2.0 * h)
                    }
                    (true, false) if left2 => {
                        (3.0 * log_q[idx] - 4.0 * log_q[idx - stride] + log_q[idx - 2 * stride]) / (2.0 * h)
                    }
                    (false, true) => (log_q[idx + stride] - log_q[idx]) / h,
                    (true, false) => (log_q[idx] - log_q[idx - stride]) / h,
                    (false, false) => 0.0,
                };
                -grad[a] - temperature * dlog
            } else {
                -grad[a]
            };
            out[idx * d + a] = v;
        }
    }
    Ok(VelocityField::Grid { axes, dim: d, values: out })
}
