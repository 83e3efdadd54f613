//! Functionals `ψ: H → ℝᵐ` of a fitted model and their derivatives `ψ'`, which are
//! exposed only through pointwise evaluation `x ↦ ψ'(x) ∈ ℝᵐ`.

use crate::data::Dataset;
use crate::error::{contract, Error, Result};
use crate::numerics::{numerical_rank, Matrix};
use crate::solver::FittedModel;

/// `h = Σⱼ cⱼ k(·, zⱼ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Representer {
    pub points: Vec<f64>,
    pub coeffs: Vec<f64>,
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(contract("region bounds must be non-empty and of equal dimension"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(contract("region needs lower < upper on every axis"));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| *l <= *v && *v <= *u)
    }

    pub fn interior_contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| *l < *v && *v < *u)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// Tensor midpoint rule: `nodes_per_axis^d` nodes, each with weight `volume / count`.
    pub fn midpoint_grid(&self, nodes_per_axis: usize) -> Result<(Vec<f64>, f64)> {
        let d = self.dim();
        let total = (nodes_per_axis as f64).powi(d as i32);
        if nodes_per_axis == 0 || total > 4e6 {
            return Err(contract(format!(
                "midpoint grid with {nodes_per_axis} nodes per axis in {d} dimensions is not supported"
            )));
        }
        let total = total as usize;
        let mut nodes = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            for a in 0..d {
                let h = (self.upper[a] - self.lower[a]) / nodes_per_axis as f64;
                nodes.push(self.lower[a] + (idx[a] as f64 + 0.5) * h);
            }
            for a in 0..d {
                idx[a] += 1;
                if idx[a] < nodes_per_axis {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok((nodes, self.volume() / total as f64))
    }
}

/// Measure used by the integral functional.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    /// Empirical measure of a covariate sample (flat points), the plug-in for `P_X`.
    Empirical { sample: Vec<f64> },
    /// Lebesgue measure on the region, integrated by the midpoint rule.
    LebesgueGrid { nodes_per_axis: usize },
}

pub const DEFAULT_GRID_NODES: usize = 201;

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalKind {
    /// `(f(x̃₁), …, f(x̃ₘ))`, points stored flat.
    Pointwise { points: Vec<f64> },
    /// `(⟨f, h₁⟩, …, ⟨f, hₘ⟩)`
    InnerProducts { hs: Vec<Representer> },
    /// `∇f(x₀)`
    GradientAt { x0: Vec<f64> },
    /// `∫_B f dμ`
    IntegralOver { region: Region, measure: Measure },
    /// `‖f‖²_H`
    SquaredHNorm,
    /// `∫_B f² dx`
    SquaredL2Norm { region: Region, nodes_per_axis: usize },
}

/// A functional bound to an input dimension, with its quadrature nodes resolved.
#[derive(Debug, Clone)]
pub struct Functional {
    kind: FunctionalKind,
    dim: usize,
    domain: Option<Region>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Functional {
    pub fn new(kind: FunctionalKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(contract("functional dimension must be >= 1"));
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        match &kind {
            FunctionalKind::Pointwise { points } => {
                if points.is_empty() || points.len() % dim != 0 {
                    return Err(contract("pointwise functional needs at least one point of the input dimension"));
                }
            }
            FunctionalKind::InnerProducts { hs } => {
                if hs.is_empty() {
                    return Err(contract("inner-product functional needs at least one h"));
                }
                for h in hs {
                    if h.coeffs.is_empty() || h.points.len() != h.coeffs.len() * dim {
                        return Err(contract("representer points/coefficients size mismatch"));
                    }
                }
            }
            FunctionalKind::GradientAt { x0 } => {
                if x0.len() != dim {
                    return Err(contract("gradient point has wrong dimension"));
                }
            }
            FunctionalKind::IntegralOver { region, measure } => {
                if region.dim() != dim {
                    return Err(contract("integration region has wrong dimension"));
                }
                match measure {
                    Measure::Empirical { sample } => {
                        if sample.is_empty() || sample.len() % dim != 0 {
                            return Err(contract("empirical measure needs a non-empty sample"));
                        }
                        let count = sample.len() / dim;
                        for p in sample.chunks(dim) {
                            if region.contains(p) {
                                nodes.extend_from_slice(p);
                                weights.push(1.0 / count as f64);
                            }
                        }
                    }
                    Measure::LebesgueGrid { nodes_per_axis } => {
                        let (grid, w) = region.midpoint_grid(*nodes_per_axis)?;
                        weights = vec![w; grid.len() / dim];
                        nodes = grid;
                    }
                }
            }
            FunctionalKind::SquaredHNorm => {}
            FunctionalKind::SquaredL2Norm { region, nodes_per_axis } => {
                if region.dim() != dim {
                    return Err(contract("integration region has wrong dimension"));
                }
                let (grid, w) = region.midpoint_grid(*nodes_per_axis)?;
                weights = vec![w; grid.len() / dim];
                nodes = grid;
            }
        }
        Ok(Self { kind, dim, domain: None, nodes, weights })
    }

    pub fn pointwise(points: Vec<f64>, dim: usize) -> Result<Self> {
        Self::new(FunctionalKind::Pointwise { points }, dim)
    }

    pub fn gradient_at(x0: Vec<f64>) -> Result<Self> {
        let d = x0.len();
        Self::new(FunctionalKind::GradientAt { x0 }, d)
    }

    /// Declares the input space `𝒳`; the gradient functional requires `x₀` in its interior.
    /// Without it, the bounding box of the model's support points is used.
    pub fn with_domain(mut self, domain: Region) -> Result<Self> {
        if domain.dim() != self.dim {
            return Err(contract("domain has wrong dimension"));
        }
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Output dimension `m`.
    pub fn m(&self) -> usize {
        match &self.kind {
            FunctionalKind::Pointwise { points } => points.len() / self.dim,
            FunctionalKind::InnerProducts { hs } => hs.len(),
            FunctionalKind::GradientAt { .. } => self.dim,
            _ => 1,
        }
    }

    /// Whether `ψ'` is independent of the model.
    pub fn is_linear(&self) -> bool {
        !matches!(self.kind, FunctionalKind::SquaredHNorm | FunctionalKind::SquaredL2Norm { .. })
    }

    fn check_model(&self, model: &FittedModel) -> Result<()> {
        if model.kernel().input_dim != self.dim {
            return Err(contract(format!(
                "functional dimension {} does not match model dimension {}",
                self.dim,
                model.kernel().input_dim
            )));
        }
        if let FunctionalKind::GradientAt { x0 } = &self.kind {
            let inside = match &self.domain {
                Some(d) => d.interior_contains(x0),
                None => {
                    let d = self.dim;
                    let mut lo = vec![f64::INFINITY; d];
                    let mut hi = vec![f64::NEG_INFINITY; d];
                    for p in model.support().chunks(d) {
                        for a in 0..d {
                            lo[a] = lo[a].min(p[a]);
                            hi[a] = hi[a].max(p[a]);
                        }
                    }
                    x0.iter().zip(&lo).zip(&hi).all(|((v, l), u)| l < v && v < u)
                }
            };
            if !inside {
                return Err(Error::Domain(format!(
                    "gradient point {x0:?} is not in the interior of the input space"
                )));
            }
        }
        Ok(())
    }

    /// `ψ(f)` for the fitted model `f`.
    pub fn psi_value(&self, model: &FittedModel) -> Result<Vec<f64>> {
        self.check_model(model)?;
        let d = self.dim;
        Ok(match &self.kind {
            FunctionalKind::Pointwise { points } => points.chunks(d).map(|p| model.eval(p)).collect(),
            FunctionalKind::InnerProducts { hs } => hs
                .iter()
                .map(|h| h.points.chunks(d).zip(&h.coeffs).map(|(z, c)| c * model.eval(z)).sum())
                .collect(),
            FunctionalKind::GradientAt { x0 } => {
                let mut g = vec![0.0; d];
                let k = model.kernel();
                for (i, &a) in model.coeffs().iter().enumerate() {
                    k.grad2_into(model.support_point(i), x0, a, &mut g);
                }
                g
            }
            FunctionalKind::IntegralOver { .. } => {
                vec![self.nodes.chunks(d).zip(&self.weights).map(|(z, w)| w * model.eval(z)).sum()]
            }
            FunctionalKind::SquaredHNorm => vec![model.h_norm_sq()],
            FunctionalKind::SquaredL2Norm { .. } => vec![self
                .nodes
                .chunks(d)
                .zip(&self.weights)
                .map(|(z, w)| {
                    let v = model.eval(z);
                    w * v * v
                })
                .sum()],
        })
    }

    /// Prepares `ψ'_f` for repeated pointwise evaluation.
    pub fn derivative<'a>(&'a self, model: &'a FittedModel) -> Result<Derivative<'a>> {
        self.check_model(model)?;
        let node_values = match &self.kind {
            FunctionalKind::SquaredL2Norm { .. } => {
                self.nodes.chunks(self.dim).map(|z| model.eval(z)).collect()
            }
            _ => Vec::new(),
        };
        Ok(Derivative { fun: self, model, node_values })
    }

    /// `ψ'_f(x) ∈ ℝᵐ`.
    pub fn psi_prime_eval(&self, model: &FittedModel, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(contract("evaluation point has wrong dimension"));
        }
        let der = self.derivative(model)?;
        let mut out = vec![0.0; self.m()];
        der.eval_into(x, &mut out);
        Ok(out)
    }

    /// The `m × n` matrix with column `i` equal to `ψ'_f(xᵢ)`.
    pub fn psi_matrix(&self, model: &FittedModel, data: &Dataset) -> Result<PsiMatrix> {
        if data.dim() != self.dim {
            return Err(contract("data dimension does not match functional"));
        }
        let der = self.derivative(model)?;
        Ok(PsiMatrix(der.matrix(data.xs())))
    }
}

/// `ψ'_f` ready for evaluation.
pub struct Derivative<'a> {
    fun: &'a Functional,
    model: &'a FittedModel,
    node_values: Vec<f64>,
}

impl Derivative<'_> {
    pub fn m(&self) -> usize {
        self.fun.m()
    }

    /// Writes `ψ'(x)` into `out` (length `m`).
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let fun = self.fun;
        let d = fun.dim;
        let k = self.model.kernel();
        match &fun.kind {
            FunctionalKind::Pointwise { points } => {
                for (o, p) in out.iter_mut().zip(points.chunks(d)) {
                    *o = k.eval(x, p);
                }
            }
            FunctionalKind::InnerProducts { hs } => {
                for (o, h) in out.iter_mut().zip(hs) {
                    *o = h.points.chunks(d).zip(&h.coeffs).map(|(z, c)| c * k.eval(x, z)).sum();
                }
            }
            FunctionalKind::GradientAt { x0 } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                k.grad2_into(x, x0, 1.0, out);
            }
            FunctionalKind::IntegralOver { .. } => {
                out[0] = fun.nodes.chunks(d).zip(&fun.weights).map(|(z, w)| w * k.eval(x, z)).sum();
            }
            FunctionalKind::SquaredHNorm => out[0] = 2.0 * self.model.eval(x),
            FunctionalKind::SquaredL2Norm { .. } => {
                out[0] = fun
                    .nodes
                    .chunks(d)
                    .zip(&fun.weights)
                    .zip(&self.node_values)
                    .map(|((z, w), fz)| 2.0 * w * fz * k.eval(x, z))
                    .sum();
            }
        }
    }

    /// `m × n` matrix of `ψ'` at the flat points.
    pub fn matrix(&self, points: &[f64]) -> Matrix {
        let d = self.fun.dim;
        let n = points.len() / d;
        let m = self.m();
        let mut out = Matrix::zeros(m, n);
        let mut buf = vec![0.0; m];
        for (i, x) in points.chunks(d).enumerate() {
            self.eval_into(x, &mut buf);
            for j in 0..m {
                out[(j, i)] = buf[j];
            }
        }
        out
    }
}

/// `Ψ = (ψ'(x₁), …, ψ'(xₙ)) ∈ ℝ^{m×n}`.
#[derive(Debug, Clone)]
pub struct PsiMatrix(pub Matrix);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankTest {
    pub full_rank: bool,
    pub numerical_rank: usize,
    /// `n < m`: full rank is impossible and the test is uninformative.
    pub underdetermined: bool,
}

/// Numerical rank of `Ψ` (SVD, relative tolerance `rtol`); full rank means rank `m`.
pub fn rank_test(psi: &PsiMatrix, rtol: Option<f64>) -> Result<RankTest> {
    let m = psi.0.nrows();
    let n = psi.0.ncols();
    let numerical_rank = numerical_rank(psi.0.as_ref(), rtol)?;
    Ok(RankTest { full_rank: numerical_rank == m, numerical_rank, underdetermined: n < m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::kernels::KernelSpec;
    use crate::losses::LossSpec;

    fn model(support: Vec<f64>, coeffs: Vec<f64>, kernel: KernelSpec) -> FittedModel {
        FittedModel::from_expansion(support, coeffs, kernel, LossSpec::LsRegression, 0.1).unwrap()
    }

    #[test]
    fn pointwise_on_zero_model() {
        let k = KernelSpec::rbf(0.5, 1).unwrap();
        let f = model(vec![0.0, 1.0], vec![0.0, 0.0], k);
        let psi = Functional::pointwise(vec![0.5, 2.0], 1).unwrap();
        assert_eq!(psi.psi_value(&f).unwrap(), vec![0.0, 0.0]);
        assert_eq!(psi.psi_prime_eval(&f, &[0.5]).unwrap()[0], 1.0);
    }

    #[test]
    fn linear_kernel_gradient_is_weighted_sum() {
        let k = KernelSpec::linear(2).unwrap();
        let f = model(vec![1.0, 2.0, -1.0, 0.5, 3.0, 3.0], vec![0.5, -2.0, 1.0], k);
        let psi = Functional::gradient_at(vec![0.1, 0.2])
            .unwrap()
            .with_domain(Region::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap())
            .unwrap();
        let g = psi.psi_value(&f).unwrap();
        assert!((g[0] - (0.5 + 2.0 + 3.0)).abs() < 1e-14);
        assert!((g[1] - (1.0 - 1.0 + 3.0)).abs() < 1e-14);
    }

    #[test]
    fn gradient_outside_interior_is_rejected() {
        let k = KernelSpec::rbf(0.5, 1).unwrap();
        let f = model(vec![0.0, 1.0], vec![1.0, 1.0], k);
        let psi = Functional::gradient_at(vec![1.0]).unwrap();
        assert!(matches!(psi.psi_value(&f), Err(Error::Domain(_))));
        let psi = Functional::gradient_at(vec![0.5]).unwrap();
        assert!(psi.psi_value(&f).is_ok());
    }

    #[test]
    fn squared_h_norm_value_and_derivative() {
        let k = KernelSpec::rbf(0.5, 1).unwrap();
        let psi = Functional::new(FunctionalKind::SquaredHNorm, 1).unwrap();
        let f = model(vec![0.0], vec![2.0], k);
        assert!((psi.psi_value(&f).unwrap()[0] - 4.0).abs() < 1e-14);
        let zero = model(vec![0.0], vec![0.0], k);
        assert_eq!(psi.psi_prime_eval(&zero, &[0.7]).unwrap(), vec![0.0]);
        let data = Dataset::new(vec![0.0, 1.0, 2.0], 1, vec![0.0; 3], Task::Regression).unwrap();
        let row = psi.psi_matrix(&zero, &data).unwrap();
        assert!((0..3).all(|i| row.0[(0, i)] == 0.0));
    }

    #[test]
    fn rbf_gradient_derivative_vanishes_at_x0() {
        let k = KernelSpec::rbf(0.5, 1).unwrap();
        let f = model(vec![0.0, 5.0], vec![1.0, 1.0], k);
        let psi = Functional::gradient_at(vec![3.0]).unwrap();
        assert_eq!(psi.psi_prime_eval(&f, &[3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn rank_test_cases() {
        let k = KernelSpec::rbf(0.5, 1).unwrap();
        let xs = vec![0.0, 1.0, 2.5, 4.0];
        let data = Dataset::new(xs.clone(), 1, vec![0.0; 4], Task::Regression).unwrap();
        let f = model(xs.clone(), vec![0.0; 4], k);
        let psi = Functional::pointwise(xs, 1).unwrap().psi_matrix(&f, &data).unwrap();
        // pointwise at the sample points reproduces the Gram matrix
        let g = k.gram(data.xs()).unwrap();
        assert!((0..4).all(|i| (0..4).all(|j| psi.0[(i, j)] == g[(i, j)])));
        assert!(rank_test(&psi, None).unwrap().full_rank);

        let dup = Functional::pointwise(vec![1.0, 1.0], 1).unwrap().psi_matrix(&f, &data).unwrap();
        let t = rank_test(&dup, None).unwrap();
        assert!(!t.full_rank && t.numerical_rank == 1);

        let zero = PsiMatrix(Matrix::zeros(1, 4));
        assert!(!rank_test(&zero, None).unwrap().full_rank);
    }

    #[test]
    fn midpoint_grid_integrates_linear_function_exactly() {
        let r = Region::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        let (nodes, w) = r.midpoint_grid(7).unwrap();
        let integral: f64 = nodes.chunks(2).map(|p| w * (3.0 * p[0] + p[1] + 1.0)).sum();
        // ∫∫ (3x + y + 1) = 3·2·2 + 0 + 4
        assert!((integral - 16.0).abs() < 1e-12);
    }
}
