//! Elliptical confidence sets `{w : n (w − c)ᵀ Σ̂⁻¹ (w − c) <= χ²_{m,α}}`.

use crate::covariance::CovarianceEstimate;
use crate::error::{contract, Error, Result};
use crate::numerics::{chi2_quantile, spd_inv_sqrt, sym_eig, Matrix};

/// Relative slack on the boundary test, so points constructed on the boundary count as inside.
const BOUNDARY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ConfidenceEllipsoid {
    pub center: Vec<f64>,
    pub sigma_hat: Matrix,
    pub n: usize,
    pub alpha: f64,
    pub chi2: f64,
    inv_sqrt: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub length: f64,
    pub direction: Vec<f64>,
}

impl ConfidenceEllipsoid {
    pub fn new(center: Vec<f64>, sigma_hat: Matrix, n: usize, alpha: f64) -> Result<Self> {
        let m = center.len();
        if m == 0 || sigma_hat.nrows() != m || sigma_hat.ncols() != m {
            return Err(contract("center and covariance dimensions differ"));
        }
        if n == 0 {
            return Err(contract("sample size must be >= 1"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(contract(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(contract("center has non-finite entries"));
        }
        let inv_sqrt = spd_inv_sqrt(sigma_hat.as_ref())?;
        Ok(Self { chi2: chi2_quantile(m, alpha), center, sigma_hat, n, alpha, inv_sqrt })
    }

    pub fn m(&self) -> usize {
        self.center.len()
    }

    /// `χ²_{m,α} / n`
    pub fn radius_sq(&self) -> f64 {
        self.chi2 / self.n as f64
    }

    /// `‖Σ̂^{-1/2}(w − center)‖²`
    pub fn statistic(&self, w: &[f64]) -> Result<f64> {
        let m = self.m();
        if w.len() != m {
            return Err(contract("point has wrong dimension"));
        }
        let diff: Vec<f64> = w.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        Ok((0..m)
            .map(|i| {
                let v: f64 = (0..m).map(|j| self.inv_sqrt[(i, j)] * diff[j]).sum();
                v * v
            })
            .sum())
    }

    pub fn contains(&self, w: &[f64]) -> Result<bool> {
        let r = self.radius_sq();
        Ok(self.statistic(w)? <= r * (1.0 + BOUNDARY_RTOL))
    }

    /// Lengths `sqrt(χ² γⱼ / n)` along the eigenvectors of `Σ̂`, longest first.
    pub fn principal_axes(&self) -> Result<Vec<Axis>> {
        let eig = sym_eig(self.sigma_hat.as_ref())?;
        let m = self.m();
        Ok((0..m)
            .map(|j| Axis {
                length: (self.chi2 * eig.eigenvalues[j].max(0.0) / self.n as f64).sqrt(),
                direction: (0..m).map(|i| eig.eigenvectors[(i, j)]).collect(),
            })
            .collect())
    }

    /// `center ∓ sqrt(χ²_{1,α} Σ̂ / n)` for `m = 1`.
    pub fn interval(&self) -> Result<(f64, f64)> {
        if self.m() != 1 {
            return Err(contract(format!("interval needs m = 1, ellipsoid has m = {}", self.m())));
        }
        let half = (self.chi2 * self.sigma_hat[(0, 0)] / self.n as f64).sqrt();
        Ok((self.center[0] - half, self.center[0] + half))
    }
}

/// Confidence set around `center` with covariance from the plug-in estimator.
pub fn build_ellipsoid(center: Vec<f64>, cov: &CovarianceEstimate, n: usize, alpha: f64) -> Result<ConfidenceEllipsoid> {
    if cov.n != n {
        return Err(contract(format!("covariance was estimated from n = {}, not {n}", cov.n)));
    }
    ConfidenceEllipsoid::new(center, cov.sigma_hat.clone(), n, alpha)
}

/// Whether an error is the degenerate-covariance case (used by callers that flag instead of fail).
pub fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::DegenerateCovariance { .. })
}
