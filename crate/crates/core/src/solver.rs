//! Empirical minimizer of the regularized risk
//! `J(a) = (1/n) Σ L(yᵢ, (Ga)ᵢ) + λ aᵀGa` over representer coefficients.
//!
//! The Newton step solves `A Δ = -r` with `A = 2λI + (1/n) W G`, `W = diag(L'')`
//! and `r = (1/n) L' + 2λa`. Since the Hessian of `J` is `G A`, this is a Newton
//! direction even when `G` is singular, and its fixed point `r = 0` gives the
//! canonical coefficients `a = -L'/(2nλ)`. The system is symmetrized through
//! `(2nλ I + S G S) z = -n S G r` with `S = W^{1/2}`.

use faer::Side;

use crate::data::Dataset;
use crate::error::{contract, Error, Result};
use crate::kernels::KernelSpec;
use crate::losses::LossSpec;
use crate::numerics::{dot, matvec, norm, pivoted_cholesky_lazy, Matrix};

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged when `‖∇J‖ <= grad_rtol · max(1, |J|)`.
    pub grad_rtol: f64,
    /// Converged when an accepted step has norm `<= step_tol · max(1, ‖a‖)`.
    pub step_tol: f64,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 100, grad_rtol: 1e-9, step_tol: 1e-12, armijo: 1e-4, max_halvings: 60 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
    /// Objective after every accepted iterate, starting with the initial point.
    pub trace: Vec<f64>,
}

/// `f = Σᵢ aᵢ k(xᵢ, ·)` together with the setting it was fitted in.
#[derive(Debug, Clone)]
pub struct FittedModel {
    support: Vec<f64>,
    dim: usize,
    coeffs: Vec<f64>,
    lambda: f64,
    kernel: KernelSpec,
    loss: LossSpec,
    gram: Matrix,
    diagnostics: FitDiagnostics,
}

impl FittedModel {
    /// Builds a model from an explicit representer expansion.
    pub fn from_expansion(
        support: Vec<f64>,
        coeffs: Vec<f64>,
        kernel: KernelSpec,
        loss: LossSpec,
        lambda: f64,
    ) -> Result<Self> {
        let dim = kernel.input_dim;
        if support.len() != coeffs.len() * dim || coeffs.is_empty() {
            return Err(contract("support/coefficients size mismatch"));
        }
        let gram = kernel.gram(&support)?;
        let objective = f64::NAN;
        Ok(Self {
            support,
            dim,
            coeffs,
            lambda,
            kernel,
            loss,
            gram,
            diagnostics: FitDiagnostics { iterations: 0, grad_norm: f64::NAN, objective, trace: vec![] },
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn support_point(&self, i: usize) -> &[f64] {
        &self.support[i * self.dim..(i + 1) * self.dim]
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// `f(x) = Σᵢ aᵢ k(xᵢ, x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(contract(format!(
                "evaluation point has dimension {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self.eval(x))
    }

    #[inline]
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a != 0.0 {
                s += a * self.kernel.eval(self.support_point(i), x);
            }
        }
        s
    }

    /// `‖f‖²_H = aᵀGa`.
    pub fn h_norm_sq(&self) -> f64 {
        dot(&self.coeffs, &matvec(self.gram.as_ref(), &self.coeffs)).max(0.0)
    }

    /// Values `f(xᵢ)` at the support points.
    pub fn fitted_values(&self) -> Vec<f64> {
        matvec(self.gram.as_ref(), &self.coeffs)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(contract(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(())
}

fn check_labels(data: &Dataset, loss: &LossSpec, kernel: &KernelSpec) -> Result<()> {
    if data.dim() != kernel.input_dim {
        return Err(contract(format!(
            "data dimension {} does not match kernel dimension {}",
            data.dim(),
            kernel.input_dim
        )));
    }
    data.ys().iter().try_for_each(|&y| loss.check_label(y))
}

fn empirical_objective(loss: &LossSpec, ys: &[f64], f: &[f64], penalty: f64, lambda: f64) -> f64 {
    let n = ys.len() as f64;
    let risk: f64 = ys.iter().zip(f).map(|(&y, &t)| loss.value(y, t)).sum::<f64>() / n;
    risk + lambda * penalty
}

/// Regularized empirical risk at coefficients `coeffs`.
pub fn objective(
    data: &Dataset,
    kernel: &KernelSpec,
    loss: &LossSpec,
    lambda: f64,
    coeffs: &[f64],
) -> Result<f64> {
    check_lambda(lambda)?;
    check_labels(data, loss, kernel)?;
    if coeffs.len() != data.n() {
        return Err(contract("coefficient vector length differs from n"));
    }
    let g = kernel.gram(data.xs())?;
    let f = matvec(g.as_ref(), coeffs);
    Ok(empirical_objective(loss, data.ys(), &f, dot(coeffs, &f), lambda))
}

pub fn fit(data: &Dataset, kernel: &KernelSpec, loss: &LossSpec, lambda: f64) -> Result<FittedModel> {
    let gram = kernel.gram(data.xs())?;
    fit_with_gram(data, kernel, loss, lambda, gram, &FitOptions::default(), None)
}

/// Fits with a precomputed Gram matrix and an optional starting point.
pub fn fit_with_gram(
    data: &Dataset,
    kernel: &KernelSpec,
    loss: &LossSpec,
    lambda: f64,
    gram: Matrix,
    opts: &FitOptions,
    init: Option<&[f64]>,
) -> Result<FittedModel> {
    check_lambda(lambda)?;
    check_labels(data, loss, kernel)?;
    let n = data.n();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(contract("Gram matrix size differs from n"));
    }
    let ys = data.ys();
    let nf = n as f64;
    let two_n_lambda = 2.0 * nf * lambda;

    let mut a = match init {
        Some(a0) if a0.len() == n => a0.to_vec(),
        Some(_) => return Err(contract("initial coefficients have wrong length")),
        None => vec![0.0; n],
    };
    let mut f = matvec(gram.as_ref(), &a);
    let mut obj = empirical_objective(loss, ys, &f, dot(&a, &f), lambda);
    let mut trace = vec![obj];
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    let mut m = Matrix::zeros(n, n);
    while iterations < opts.max_iter {
        let r: Vec<f64> =
            (0..n).map(|i| loss.d1(ys[i], f[i]) / nf + 2.0 * lambda * a[i]).collect();
        let grad = matvec(gram.as_ref(), &r);
        grad_norm = norm(&grad);
        if grad_norm <= opts.grad_rtol * obj.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;

        let s: Vec<f64> = (0..n).map(|i| loss.d2(ys[i], f[i]).max(0.0).sqrt()).collect();
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] = s[i] * gram[(i, j)] * s[j];
            }
            m[(j, j)] += two_n_lambda;
        }
        let rhs = Matrix::from_fn(n, 1, |i, _| -nf * s[i] * grad[i]);
        let z = {
            use faer::linalg::solvers::Solve;
            let llt = m.llt(Side::Lower).map_err(|e| Error::Numeric {
                routine: "newton system cholesky",
                detail: format!("{e:?} (n = {n}, lambda = {lambda})"),
            })?;
            llt.solve(rhs)
        };
        let delta: Vec<f64> = (0..n).map(|i| (-nf * r[i] - s[i] * z[(i, 0)]) / two_n_lambda).collect();

        let slope = dot(&grad, &delta);
        let g_delta = matvec(gram.as_ref(), &delta);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let a_try: Vec<f64> = a.iter().zip(&delta).map(|(x, d)| x + t * d).collect();
            let f_try: Vec<f64> = f.iter().zip(&g_delta).map(|(x, d)| x + t * d).collect();
            let obj_try = empirical_objective(loss, ys, &f_try, dot(&a_try, &f_try), lambda);
            if obj_try <= obj + opts.armijo * t * slope.min(0.0) {
                accepted = Some((a_try, obj_try));
                break;
            }
            t *= 0.5;
        }
        let Some((a_new, _)) = accepted else {
            // no decrease representable in floating point: stationary to working precision
            if grad_norm <= opts.grad_rtol.sqrt() * obj.abs().max(1.0) {
                converged = true;
                break;
            }
            return Err(Error::SolverFailure { iterations, grad_norm, objective: obj });
        };
        let step = t * norm(&delta);
        a = a_new;
        f = matvec(gram.as_ref(), &a);
        obj = empirical_objective(loss, ys, &f, dot(&a, &f), lambda);
        trace.push(obj);
        if step <= opts.step_tol * norm(&a).max(1.0) {
            converged = true;
            let r: Vec<f64> =
                (0..n).map(|i| loss.d1(ys[i], f[i]) / nf + 2.0 * lambda * a[i]).collect();
            grad_norm = norm(&matvec(gram.as_ref(), &r));
            break;
        }
    }
    if !converged {
        return Err(Error::SolverFailure { iterations, grad_norm, objective: obj });
    }
    Ok(FittedModel {
        support: data.xs().to_vec(),
        dim: data.dim(),
        coeffs: a,
        lambda,
        kernel: *kernel,
        loss: *loss,
        gram,
        diagnostics: FitDiagnostics { iterations, grad_norm, objective: obj, trace },
    })
}

/// Options for [`fit_low_rank`].
#[derive(Debug, Clone)]
pub struct LowRankOptions {
    /// Pivoting stops when every residual diagonal is below `rank_rtol · max k(xᵢ, xᵢ)`.
    pub rank_rtol: f64,
    pub max_rank: usize,
    /// The basis is pivoted out of the first `basis_sample` points.
    pub basis_sample: usize,
    /// Feature rows are kept in memory when they fit in this many bytes and
    /// recomputed chunk by chunk otherwise.
    pub cache_bytes: usize,
    pub chunk: usize,
    pub newton: FitOptions,
}

impl Default for LowRankOptions {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-13,
            max_rank: 400,
            basis_sample: 20_000,
            cache_bytes: 1 << 30,
            chunk: 4096,
            newton: FitOptions::default(),
        }
    }
}

/// Feature rows `F = K(X, P) L_P⁻ᵀ`, stored transposed (`r × n`) or produced on demand.
struct Features<'a> {
    data: &'a Dataset,
    kernel: &'a KernelSpec,
    pivots: Vec<f64>,
    lower: Matrix,
    chunk: usize,
    cache: Option<Matrix>,
}

impl Features<'_> {
    fn rank(&self) -> usize {
        self.lower.nrows()
    }

    fn block(&self, start: usize, end: usize) -> Matrix {
        let r = self.rank();
        let d = self.data.dim();
        let mut kt = Matrix::from_fn(r, end - start, |j, i| {
            self.kernel.eval(&self.pivots[j * d..(j + 1) * d], self.data.x(start + i))
        });
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            self.lower.as_ref(),
            kt.as_mut(),
            faer::Par::Seq,
        );
        kt
    }

    /// Calls `visit(start, Fᵀ[:, start..end])` over consecutive chunks.
    fn for_each(&self, mut visit: impl FnMut(usize, faer::MatRef<'_, f64>)) {
        let n = self.data.n();
        if let Some(all) = &self.cache {
            visit(0, all.as_ref());
            return;
        }
        let mut start = 0;
        while start < n {
            let end = (start + self.chunk).min(n);
            let b = self.block(start, end);
            visit(start, b.as_ref());
            start = end;
        }
    }

    /// `F w`
    fn values(&self, w: &[f64]) -> Vec<f64> {
        let n = self.data.n();
        if let Some(all) = &self.cache {
            return (0..n).map(|i| (0..all.nrows()).map(|j| all[(j, i)] * w[j]).sum()).collect();
        }
        // F w = K(X, P) L⁻ᵀ w, which needs no triangular solve per point
        let b = back_substitute(&self.lower, w);
        let d = self.data.dim();
        (0..n)
            .map(|i| {
                let x = self.data.x(i);
                b.iter().enumerate().map(|(j, bj)| bj * self.kernel.eval(&self.pivots[j * d..(j + 1) * d], x)).sum()
            })
            .collect()
    }
}

/// `L⁻ᵀ w` for lower-triangular `L`.
fn back_substitute(lower: &Matrix, w: &[f64]) -> Vec<f64> {
    let r = w.len();
    let mut b = w.to_vec();
    for i in (0..r).rev() {
        let mut v = b[i];
        for k in i + 1..r {
            v -= lower[(k, i)] * b[k];
        }
        b[i] = v / lower[(i, i)];
    }
    b
}

/// Size of the pivoted basis [`fit_low_rank`] would use on `data`.
pub fn low_rank_basis_size(data: &Dataset, kernel: &KernelSpec, opts: &LowRankOptions) -> Result<usize> {
    let m0 = data.n().min(opts.basis_sample.max(1));
    let diag: Vec<f64> = (0..m0).map(|i| kernel.eval(data.x(i), data.x(i))).collect();
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    let pc = pivoted_cholesky_lazy(
        m0,
        diag,
        |p| {
            let xp = data.x(p);
            (0..m0).map(|i| kernel.eval(data.x(i), xp)).collect()
        },
        opts.rank_rtol * max_diag,
        opts.max_rank,
    )?;
    Ok(pc.rank)
}

/// Minimizer of the regularized empirical risk restricted to the span of a
/// pivoted-Cholesky basis `{k(·, x_p)}`.
///
/// With `G[P, P] = L Lᵀ`, `f = Σ_p b_p k(·, x_p)` and `w = Lᵀ b`, the feature
/// rows `F = K(X, P) L⁻ᵀ` give `f(xᵢ) = (F w)ᵢ` and `‖f‖²_H = ‖w‖²`, so Newton
/// runs on an `r × r` system and memory stays `O(n + r²)` beyond the optional cache.
pub fn fit_low_rank(
    data: &Dataset,
    kernel: &KernelSpec,
    loss: &LossSpec,
    lambda: f64,
    opts: &LowRankOptions,
) -> Result<FittedModel> {
    check_lambda(lambda)?;
    check_labels(data, loss, kernel)?;
    let n = data.n();
    let d = data.dim();
    let m0 = n.min(opts.basis_sample.max(1));
    let diag: Vec<f64> = (0..m0).map(|i| kernel.eval(data.x(i), data.x(i))).collect();
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    let pc = pivoted_cholesky_lazy(
        m0,
        diag,
        |p| {
            let xp = data.x(p);
            (0..m0).map(|i| kernel.eval(data.x(i), xp)).collect()
        },
        opts.rank_rtol * max_diag,
        opts.max_rank,
    )?;
    let r = pc.rank;
    let mut pivots = Vec::with_capacity(r * d);
    for &p in &pc.pivots {
        pivots.extend_from_slice(data.x(p));
    }
    let mut feats = Features { data, kernel, pivots, lower: pc.pivot_block(), chunk: opts.chunk.max(1), cache: None };
    if n.saturating_mul(r).saturating_mul(8) <= opts.cache_bytes {
        feats.cache = Some(feats.block(0, n));
    }

    let ys = data.ys();
    let nf = n as f64;
    let fo = &opts.newton;
    let objective_w = |f: &[f64], w: &[f64]| empirical_objective(loss, ys, f, dot(w, w), lambda);

    let mut w = vec![0.0; r];
    let mut f = vec![0.0; n];
    let mut obj = objective_w(&f, &w);
    let mut trace = vec![obj];
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < fo.max_iter {
        let mut grad: Vec<f64> = w.iter().map(|v| 2.0 * lambda * v).collect();
        let mut h = Matrix::zeros(r, r);
        feats.for_each(|start, ft| {
            let c = ft.ncols();
            let d2: Vec<f64> = (start..start + c).map(|k| loss.d2(ys[k], f[k]) / nf).collect();
            let weighted = Matrix::from_fn(r, c, |j, i| ft[(j, i)] * d2[i]);
            faer::linalg::matmul::matmul(
                h.as_mut(),
                faer::Accum::Add,
                weighted.as_ref(),
                ft.transpose(),
                1.0,
                faer::Par::Seq,
            );
            for i in 0..c {
                let k = start + i;
                let l1 = loss.d1(ys[k], f[k]) / nf;
                for (j, g) in grad.iter_mut().enumerate() {
                    *g += ft[(j, i)] * l1;
                }
            }
        });
        grad_norm = norm(&grad);
        if grad_norm <= fo.grad_rtol * obj.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;
        for j in 0..r {
            h[(j, j)] += 2.0 * lambda;
        }
        let rhs = Matrix::from_fn(r, 1, |i, _| -grad[i]);
        let delta = {
            use faer::linalg::solvers::Solve;
            let llt = h.llt(Side::Lower).map_err(|e| Error::Numeric {
                routine: "low-rank newton cholesky",
                detail: format!("{e:?} (rank = {r})"),
            })?;
            llt.solve(rhs)
        };
        let delta: Vec<f64> = (0..r).map(|i| delta[(i, 0)]).collect();
        let slope = dot(&grad, &delta);
        let f_delta = feats.values(&delta);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=fo.max_halvings {
            let w_try: Vec<f64> = w.iter().zip(&delta).map(|(x, d)| x + t * d).collect();
            let f_try: Vec<f64> = f.iter().zip(&f_delta).map(|(x, d)| x + t * d).collect();
            let obj_try = objective_w(&f_try, &w_try);
            if obj_try <= obj + fo.armijo * t * slope.min(0.0) {
                accepted = Some((w_try, f_try, obj_try));
                break;
            }
            t *= 0.5;
        }
        let Some((w_new, f_new, obj_new)) = accepted else {
            if grad_norm <= fo.grad_rtol.sqrt() * obj.abs().max(1.0) {
                converged = true;
                break;
            }
            return Err(Error::SolverFailure { iterations, grad_norm, objective: obj });
        };
        let step = t * norm(&delta);
        w = w_new;
        f = f_new;
        obj = obj_new;
        trace.push(obj);
        if step <= fo.step_tol * norm(&w).max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SolverFailure { iterations, grad_norm, objective: obj });
    }

    let b = back_substitute(&feats.lower, &w);
    let support = feats.pivots;
    let gram = kernel.gram(&support)?;
    Ok(FittedModel {
        support,
        dim: d,
        coeffs: b,
        lambda,
        kernel: *kernel,
        loss: *loss,
        gram,
        diagnostics: FitDiagnostics { iterations, grad_norm, objective: obj, trace },
    })
}
