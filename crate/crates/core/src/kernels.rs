//! Kernel functions on ℝᵈ, Gram-matrix assembly, and the gradient of a kernel
//! section in its second argument.

use crate::error::{contract, Result};
use crate::numerics::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `exp(-γ ‖x - x'‖²)`
    GaussianRbf { gamma: f64 },
    /// `(scale · ⟨x, x'⟩ + offset)^degree`
    Polynomial { degree: u32, offset: f64, scale: f64 },
    /// `⟨x, x'⟩`
    Linear,
    /// `exp(γ ⟨x, x'⟩)`
    Exponential { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub input_dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(contract("kernel input dimension must be >= 1"));
        }
        match family {
            KernelFamily::GaussianRbf { gamma } | KernelFamily::Exponential { gamma } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(contract(format!("kernel gamma must be > 0, got {gamma}")));
                }
            }
            KernelFamily::Polynomial { degree, offset, scale } => {
                if degree == 0 || !(offset >= 0.0) || !(scale > 0.0) {
                    return Err(contract(
                        "polynomial kernel needs degree >= 1, offset >= 0, scale > 0",
                    ));
                }
            }
            KernelFamily::Linear => {}
        }
        Ok(Self { family, input_dim })
    }

    pub fn rbf(gamma: f64, input_dim: usize) -> Result<Self> {
        Self::new(KernelFamily::GaussianRbf { gamma }, input_dim)
    }

    pub fn linear(input_dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Linear, input_dim)
    }

    pub fn is_rbf(&self) -> bool {
        matches!(self.family, KernelFamily::GaussianRbf { .. })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(contract(format!(
                "point has dimension {}, kernel expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// `k(x, x2)` with dimension checks.
    pub fn k_eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.check(x2)?;
        Ok(self.eval(x, x2))
    }

    /// Unchecked evaluation for hot loops; dimensions are only debug-asserted.
    #[inline]
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), x2.len());
        match self.family {
            KernelFamily::GaussianRbf { gamma } => {
                let d2: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelFamily::Polynomial { degree, offset, scale } => {
                (scale * dot(x, x2) + offset).powi(degree as i32)
            }
            KernelFamily::Linear => dot(x, x2),
            KernelFamily::Exponential { gamma } => (gamma * dot(x, x2)).exp(),
        }
    }

    /// Gradient of `t ↦ k(x, t)` at `t = x0`.
    pub fn k_grad2(&self, x: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        self.check(x0)?;
        let mut out = vec![0.0; self.input_dim];
        self.grad2_into(x, x0, 1.0, &mut out);
        Ok(out)
    }

    /// Accumulates `weight · ∇ₜ k(x, t)|ₜ₌ₓ₀` into `out`.
    pub(crate) fn grad2_into(&self, x: &[f64], x0: &[f64], weight: f64, out: &mut [f64]) {
        match self.family {
            KernelFamily::GaussianRbf { gamma } => {
                let k = self.eval(x, x0);
                let c = weight * 2.0 * gamma * k;
                for ((o, a), b) in out.iter_mut().zip(x).zip(x0) {
                    *o += c * (a - b);
                }
            }
            KernelFamily::Polynomial { degree, offset, scale } => {
                let base = scale * dot(x, x0) + offset;
                let c = weight * degree as f64 * base.powi(degree as i32 - 1) * scale;
                for (o, a) in out.iter_mut().zip(x) {
                    *o += c * a;
                }
            }
            KernelFamily::Linear => {
                for (o, a) in out.iter_mut().zip(x) {
                    *o += weight * a;
                }
            }
            KernelFamily::Exponential { gamma } => {
                let c = weight * gamma * (gamma * dot(x, x0)).exp();
                for (o, a) in out.iter_mut().zip(x) {
                    *o += c * a;
                }
            }
        }
    }

    /// Gram matrix of `points` (flat, `input_dim` coordinates per point).
    pub fn gram(&self, points: &[f64]) -> Result<Matrix> {
        let n = self.count(points)?;
        let d = self.input_dim;
        let mut g = Matrix::zeros(n, n);
        for j in 0..n {
            let xj = &points[j * d..(j + 1) * d];
            for i in 0..=j {
                let v = self.eval(&points[i * d..(i + 1) * d], xj);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// Cross-kernel matrix `K[i, j] = k(a_i, b_j)`.
    pub fn cross(&self, a: &[f64], b: &[f64]) -> Result<Matrix> {
        let (na, nb) = (self.count(a)?, self.count(b)?);
        let d = self.input_dim;
        Ok(Matrix::from_fn(na, nb, |i, j| {
            self.eval(&a[i * d..(i + 1) * d], &b[j * d..(j + 1) * d])
        }))
    }

    fn count(&self, points: &[f64]) -> Result<usize> {
        if points.len() % self.input_dim != 0 {
            return Err(contract(format!(
                "flat point buffer of length {} is not a multiple of dimension {}",
                points.len(),
                self.input_dim
            )));
        }
        Ok(points.len() / self.input_dim)
    }
}
