//! Plug-in covariance of `√n (ψ(f_D,λ) − ψ(f_P,λ₀))`.
//!
//! The inverse of `K f = 2λ f + (1/n) Σᵢ L''ᵢ f(xᵢ) Φ(xᵢ)` applied to `Φ(x)` is
//! `Φ(x)/(2λ) + Σᵢ αᵢ(x) Φ(xᵢ)` with `α(x) = -(2nλ)⁻¹ (BA)⁻ B v(x)`, where
//! `vᵢ = L''ᵢ k(xᵢ, x)`. One (pseudo)inverse of `BA` serves every point.

use std::collections::HashMap;

use faer::linalg::solvers::{PartialPivLu, Solve};

use crate::data::Dataset;
use crate::error::{contract, Result};
use crate::functionals::Functional;
use crate::kernels::KernelSpec;
use crate::numerics::{pinv, pivoted_cholesky, symmetrize, Matrix};
use crate::solver::FittedModel;

/// `Φ(xᵢ) = Σⱼ βⱼᵢ Φ(x_{iⱼ})` over a maximal linearly independent subset.
#[derive(Debug, Clone)]
pub struct BasisDecomposition {
    pub basis_indices: Vec<usize>,
    /// `r × n`
    pub b: Matrix,
    /// `b` is the identity (no ties, full rank).
    pub identity: bool,
}

impl BasisDecomposition {
    pub fn rank(&self) -> usize {
        self.basis_indices.len()
    }
}

pub const DEFAULT_BASIS_RTOL: f64 = 1e-10;

fn coordinate_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same covariate
    x.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

/// Basis indices and coefficients for the sample's feature vectors.
///
/// For the Gaussian RBF kernel distinct points have linearly independent
/// features, so only exact ties need handling. Other kernels go through pivoted
/// Cholesky of the Gram matrix with threshold `rtol · max k(xᵢ, xᵢ)`.
pub fn basis_decomposition(data: &Dataset, kernel: &KernelSpec, rtol: Option<f64>) -> Result<BasisDecomposition> {
    let n = data.n();
    if kernel.is_rbf() {
        let mut first: HashMap<Vec<u64>, usize> = HashMap::with_capacity(n);
        let mut basis_indices = Vec::new();
        let mut owner = Vec::with_capacity(n);
        for i in 0..n {
            let j = *first.entry(coordinate_key(data.x(i))).or_insert_with(|| {
                basis_indices.push(i);
                basis_indices.len() - 1
            });
            owner.push(j);
        }
        let r = basis_indices.len();
        let mut b = Matrix::zeros(r, n);
        for (i, &j) in owner.iter().enumerate() {
            b[(j, i)] = 1.0;
        }
        return Ok(BasisDecomposition { basis_indices, b, identity: r == n });
    }
    let g = kernel.gram(data.xs())?;
    basis_from_gram(&g, rtol)
}

/// Pivoted-Cholesky basis of an explicit Gram matrix.
pub fn basis_from_gram(g: &Matrix, rtol: Option<f64>) -> Result<BasisDecomposition> {
    let n = g.nrows();
    let max_diag = (0..n).map(|i| g[(i, i)]).fold(0.0, f64::max);
    let pc = pivoted_cholesky(g.as_ref(), rtol.unwrap_or(DEFAULT_BASIS_RTOL) * max_diag)?;
    let r = pc.rank;
    let lp = pc.pivot_block();
    // βᵢ = L_P⁻ᵀ F[i, :]ᵀ, since G[P, i] = L_P F[i, :]ᵀ and G[P, P] = L_P L_Pᵀ
    let mut b = Matrix::zeros(r, n);
    for i in 0..n {
        for j in (0..r).rev() {
            let mut v = pc.factor[(i, j)];
            for k in j + 1..r {
                v -= lp[(k, j)] * b[(k, i)];
            }
            b[(j, i)] = v / lp[(j, j)];
        }
    }
    for (j, &p) in pc.pivots.iter().enumerate() {
        for k in 0..r {
            b[(k, p)] = if k == j { 1.0 } else { 0.0 };
        }
    }
    let identity = r == n && pc.pivots.iter().enumerate().all(|(j, &p)| j == p);
    Ok(BasisDecomposition { basis_indices: pc.pivots, b, identity })
}

/// `A = 2λ I + (1/n) W G` with `W = diag(L''(yᵢ, f(xᵢ)))`.
pub fn build_a(data: &Dataset, model: &FittedModel) -> Result<Matrix> {
    check_fitted_on(data, model)?;
    let w = curvatures(data, model);
    Ok(assemble_a(&w, model.gram(), model.lambda()))
}

fn assemble_a(w: &[f64], g: &Matrix, lambda: f64) -> Matrix {
    let n = w.len();
    let nf = n as f64;
    Matrix::from_fn(n, n, |i, j| w[i] * g[(i, j)] / nf + if i == j { 2.0 * lambda } else { 0.0 })
}

fn curvatures(data: &Dataset, model: &FittedModel) -> Vec<f64> {
    let loss = model.loss();
    model.fitted_values().iter().zip(data.ys()).map(|(&t, &y)| loss.d2(y, t)).collect()
}

fn check_fitted_on(data: &Dataset, model: &FittedModel) -> Result<()> {
    if model.support_len() != data.n() || model.support() != data.xs() {
        return Err(contract("model must be fitted on the given data (support differs from the covariates)"));
    }
    Ok(())
}

enum Inverse {
    /// `BA` square: LU of `BA`.
    Square(PartialPivLu<f64>),
    /// `(BA)⁻ B`, `n × n`.
    Pinv(Matrix),
}

/// Everything that does not depend on the functional or the evaluation point.
pub struct CovarianceEngine<'a> {
    data: &'a Dataset,
    model: &'a FittedModel,
    basis: BasisDecomposition,
    weights: Vec<f64>,
    fitted: Vec<f64>,
    inverse: Inverse,
}

/// `Σ̂ = (1/n) Σᵢ g̃ᵢ g̃ᵢᵀ` with the centered g-values retained.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub sigma_hat: Matrix,
    pub n: usize,
    pub lambda: f64,
    /// `n × m`, uncentered.
    pub g_values: Matrix,
}

impl<'a> CovarianceEngine<'a> {
    pub fn new(data: &'a Dataset, model: &'a FittedModel, basis: BasisDecomposition) -> Result<Self> {
        check_fitted_on(data, model)?;
        let n = data.n();
        if basis.b.ncols() != n {
            return Err(contract("basis decomposition was built for a different sample size"));
        }
        let fitted = model.fitted_values();
        let loss = model.loss();
        let weights: Vec<f64> = fitted.iter().zip(data.ys()).map(|(&t, &y)| loss.d2(y, t)).collect();
        let a = assemble_a(&weights, model.gram(), model.lambda());
        let inverse = if basis.identity {
            Inverse::Square(a.partial_piv_lu())
        } else {
            let ba = &basis.b * &a;
            if basis.rank() == n {
                // B is a permutation here
                Inverse::Square(ba.partial_piv_lu())
            } else {
                Inverse::Pinv(pinv(ba.as_ref(), None)? * &basis.b)
            }
        };
        Ok(Self { data, model, basis, weights, fitted, inverse })
    }

    /// Builds the basis with its default tolerance first.
    pub fn for_model(data: &'a Dataset, model: &'a FittedModel) -> Result<Self> {
        let basis = basis_decomposition(data, model.kernel(), None)?;
        Self::new(data, model, basis)
    }

    pub fn basis(&self) -> &BasisDecomposition {
        &self.basis
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.weights
    }

    fn scale(&self) -> f64 {
        -1.0 / (2.0 * self.data.n() as f64 * self.model.lambda())
    }

    /// `(BA)⁻ B M` for an `n × k` right-hand side.
    fn apply(&self, rhs: Matrix) -> Matrix {
        match &self.inverse {
            Inverse::Square(lu) => {
                if self.basis.identity {
                    lu.solve(rhs)
                } else {
                    lu.solve(&self.basis.b * &rhs)
                }
            }
            Inverse::Pinv(p) => p * &rhs,
        }
    }

    /// `M (BA)⁻ B` for a `k × n` left factor.
    fn left_apply(&self, lhs: Matrix) -> Matrix {
        match &self.inverse {
            Inverse::Square(lu) => {
                let x = lu.rsolve(lhs);
                if self.basis.identity {
                    x
                } else {
                    x * &self.basis.b
                }
            }
            Inverse::Pinv(p) => lhs * p,
        }
    }

    /// `α(x)`, so that `K⁻¹Φ(x) = Φ(x)/(2λ) + Σᵢ αᵢ(x) Φ(xᵢ)`.
    pub fn alpha(&self, x: &[f64]) -> Result<Vec<f64>> {
        let k = self.model.kernel();
        if x.len() != k.input_dim {
            return Err(contract("evaluation point has wrong dimension"));
        }
        let n = self.data.n();
        let v = Matrix::from_fn(n, 1, |i, _| self.weights[i] * k.eval(self.data.x(i), x));
        let s = self.scale();
        let out = self.apply(v);
        Ok((0..n).map(|i| s * out[(i, 0)]).collect())
    }

    /// `g(x, y) = -L'(y, f(x)) [ψ'(x)/(2λ) + Σᵢ αᵢ(x) ψ'(xᵢ)]`.
    pub fn g_value(&self, fun: &Functional, x: &[f64], y: f64) -> Result<Vec<f64>> {
        self.model.loss().check_label(y)?;
        let der = fun.derivative(self.model)?;
        let psi = der.matrix(self.data.xs());
        let alpha = self.alpha(x)?;
        let mut px = vec![0.0; fun.m()];
        der.eval_into(x, &mut px);
        let lambda = self.model.lambda();
        let d1 = self.model.loss().d1(y, self.model.eval(x));
        Ok((0..fun.m())
            .map(|j| {
                let s: f64 = (0..self.data.n()).map(|i| alpha[i] * psi[(j, i)]).sum();
                -d1 * (px[j] / (2.0 * lambda) + s)
            })
            .collect())
    }

    /// g-values at every sample point, `n × m`.
    pub fn g_matrix(&self, fun: &Functional) -> Result<Matrix> {
        if fun.dim() != self.data.dim() {
            return Err(contract("functional dimension does not match data"));
        }
        let n = self.data.n();
        let m = fun.m();
        let der = fun.derivative(self.model)?;
        let psi = der.matrix(self.data.xs());
        // Σᵢ αᵢ(x_l) ψ'(xᵢ) for all l at once: s · Ψ (BA)⁻ B W G
        let left = self.left_apply(psi.clone());
        let wg = Matrix::from_fn(n, n, |i, l| self.weights[i] * self.model.gram()[(i, l)]);
        let corr = left * wg;
        let s = self.scale();
        let lambda = self.model.lambda();
        let loss = self.model.loss();
        let ys = self.data.ys();
        Ok(Matrix::from_fn(n, m, |l, j| {
            let d1 = loss.d1(ys[l], self.fitted[l]);
            -d1 * (psi[(j, l)] / (2.0 * lambda) + s * corr[(j, l)])
        }))
    }

    pub fn sigma_hat(&self, fun: &Functional) -> Result<CovarianceEstimate> {
        let g = self.g_matrix(fun)?;
        Ok(CovarianceEstimate {
            sigma_hat: centered_second_moment(&g),
            n: self.data.n(),
            lambda: self.model.lambda(),
            g_values: g,
        })
    }
}

/// `(1/n) Σᵢ (gᵢ − ḡ)(gᵢ − ḡ)ᵀ` over the rows of `g`.
pub fn centered_second_moment(g: &Matrix) -> Matrix {
    let (n, m) = (g.nrows(), g.ncols());
    let mean: Vec<f64> = (0..m).map(|j| (0..n).map(|i| g[(i, j)]).sum::<f64>() / n as f64).collect();
    let mut s = Matrix::from_fn(m, m, |a, b| {
        (0..n).map(|i| (g[(i, a)] - mean[a]) * (g[(i, b)] - mean[b])).sum::<f64>() / n as f64
    });
    symmetrize(&mut s);
    s
}

pub fn alpha_coefficients(
    data: &Dataset,
    model: &FittedModel,
    basis: &BasisDecomposition,
    x: &[f64],
) -> Result<Vec<f64>> {
    CovarianceEngine::new(data, model, basis.clone())?.alpha(x)
}

pub fn g_value(
    data: &Dataset,
    model: &FittedModel,
    basis: &BasisDecomposition,
    fun: &Functional,
    x: &[f64],
    y: f64,
) -> Result<Vec<f64>> {
    CovarianceEngine::new(data, model, basis.clone())?.g_value(fun, x, y)
}

pub fn sigma_hat(
    data: &Dataset,
    model: &FittedModel,
    basis: &BasisDecomposition,
    fun: &Functional,
) -> Result<CovarianceEstimate> {
    CovarianceEngine::new(data, model, basis.clone())?.sigma_hat(fun)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::losses::LossSpec;
    use crate::solver::fit;

    fn ds(xs: Vec<f64>, ys: Vec<f64>) -> Dataset {
        Dataset::new(xs, 1, ys, Task::Regression).unwrap()
    }

    #[test]
    fn rbf_distinct_points_give_identity_basis() {
        let d = ds(vec![0.0, 0.1, 2.0], vec![0.0; 3]);
        let b = basis_decomposition(&d, &KernelSpec::rbf(0.5, 1).unwrap(), None).unwrap();
        assert!(b.identity);
        assert_eq!(b.basis_indices, vec![0, 1, 2]);
    }

    #[test]
    fn rbf_tie_maps_to_first_occurrence() {
        let d = ds(vec![0.0, 1.0, 0.0, -0.0], vec![0.0; 4]);
        let b = basis_decomposition(&d, &KernelSpec::rbf(0.5, 1).unwrap(), None).unwrap();
        assert_eq!(b.basis_indices, vec![0, 1]);
        assert_eq!((b.b[(0, 2)], b.b[(1, 2)]), (1.0, 0.0));
        assert_eq!((b.b[(0, 3)], b.b[(1, 3)]), (1.0, 0.0));
    }

    #[test]
    fn linear_kernel_basis_is_one_dimensional() {
        let d = ds(vec![1.0, 2.0, 3.0], vec![0.0; 3]);
        let b = basis_decomposition(&d, &KernelSpec::linear(1).unwrap(), None).unwrap();
        assert_eq!(b.basis_indices, vec![2]);
        for i in 0..3 {
            assert!((b.b[(0, i)] - d.x(i)[0] / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn a_matrix_for_least_squares() {
        let d = ds(vec![0.0, 1.0], vec![1.0, -1.0]);
        let k = KernelSpec::rbf(0.5, 1).unwrap();
        let m = fit(&d, &k, &LossSpec::LsRegression, 0.1).unwrap();
        let a = build_a(&d, &m).unwrap();
        let g = k.gram(d.xs()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = 0.2 * (i == j) as u8 as f64 + g[(i, j)];
                assert!((a[(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_point_alpha_and_zero_covariance() {
        let d = ds(vec![0.5], vec![2.0]);
        let k = KernelSpec::rbf(0.5, 1).unwrap();
        let lambda = 0.3;
        let m = fit(&d, &k, &LossSpec::LsRegression, lambda).unwrap();
        let eng = CovarianceEngine::for_model(&d, &m).unwrap();
        let x = [1.5];
        let k1x = k.eval(&[0.5], &x);
        let want = -(1.0 / (2.0 * lambda)) * 2.0 * k1x / (2.0 * lambda + 2.0);
        assert!((eng.alpha(&x).unwrap()[0] - want).abs() < 1e-14);
        let fun = Functional::pointwise(vec![1.0], 1).unwrap();
        let est = eng.sigma_hat(&fun).unwrap();
        assert_eq!(est.sigma_hat[(0, 0)], 0.0);
    }

    #[test]
    fn g_vanishes_where_residual_is_zero() {
        let d = ds(vec![0.0, 1.0, 2.0], vec![0.3, -0.2, 0.9]);
        let k = KernelSpec::rbf(0.5, 1).unwrap();
        let m = fit(&d, &k, &LossSpec::LsRegression, 0.05).unwrap();
        let eng = CovarianceEngine::for_model(&d, &m).unwrap();
        let fun = Functional::pointwise(vec![0.5, 1.5], 1).unwrap();
        let x = [0.7];
        let g = eng.g_value(&fun, &x, m.evaluate(&x).unwrap()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn g_matrix_agrees_with_pointwise_g() {
        let d = ds(vec![0.0, 1.0, 2.0, 1.0], vec![0.3, -0.2, 0.9, 0.4]);
        let k = KernelSpec::rbf(0.5, 1).unwrap();
        let m = fit(&d, &k, &LossSpec::logistic_regression(0.5).unwrap(), 0.05).unwrap();
        let eng = CovarianceEngine::for_model(&d, &m).unwrap();
        let fun = Functional::pointwise(vec![0.5, 1.5], 1).unwrap();
        let gm = eng.g_matrix(&fun).unwrap();
        for i in 0..4 {
            let g = eng.g_value(&fun, d.x(i), d.y(i)).unwrap();
            for j in 0..2 {
                assert!((gm[(i, j)] - g[j]).abs() < 1e-12, "{} vs {}", gm[(i, j)], g[j]);
            }
        }
    }
}
