//! Independent reference computations shared by the integration tests and the
//! acceptance harness. Each check returns a short description on success and
//! the first failure otherwise.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rkhs_ci::covariance::CovarianceEngine;
use rkhs_ci::functionals::{Functional, FunctionalKind, Measure, Region, Representer};
use rkhs_ci::numerics::{chi2_quantile, pinv, Matrix};
use rkhs_ci::rng::Stream;
use rkhs_ci::solver::{fit, FittedModel};
use rkhs_ci::{ConfidenceEllipsoid, Dataset, KernelFamily, KernelSpec, LossSpec, Task};

pub type Check = Result<String, String>;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn na_gram(k: &KernelSpec, pts: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(pts.len(), pts.len(), |i, j| k.eval(&pts[i], &pts[j]))
}

pub struct Instance {
    pub data: Dataset,
    pub kernel: KernelSpec,
    pub loss: LossSpec,
    pub lambda: f64,
    pub ties: bool,
}

/// Random small problem: `n <= 25`, RBF or linear kernel, squared or logistic
/// loss, optionally with duplicated covariates.
pub fn random_instance(s: &mut Stream, index: usize) -> Instance {
    let linear = index % 2 == 1;
    let logistic = (index / 2) % 2 == 1;
    let ties = (index / 4) % 2 == 1;
    let n = 3 + s.below(23) as usize;
    let d = if linear { 1 + s.below(3) as usize } else { 1 + s.below(2) as usize };
    let mut xs: Vec<f64> = (0..n * d).map(|_| s.uniform_in(-2.0, 2.0)).collect();
    if ties {
        let copies = 1 + s.below((n / 3).max(1) as u64) as usize;
        for _ in 0..copies {
            let a = s.below(n as u64) as usize;
            let b = s.below(n as u64) as usize;
            for c in 0..d {
                xs[b * d + c] = xs[a * d + c];
            }
        }
    }
    let ys: Vec<f64> = (0..n).map(|_| 2.0 * s.normal()).collect();
    let kernel = if linear {
        KernelSpec::linear(d).unwrap()
    } else {
        KernelSpec::rbf(s.uniform_in(0.3, 2.0), d).unwrap()
    };
    let loss = if logistic { LossSpec::logistic_regression(s.uniform_in(0.3, 2.0)).unwrap() } else { LossSpec::LsRegression };
    let lambda = 10f64.powf(s.uniform_in(-3.0, 0.0));
    Instance { data: Dataset::new(xs, d, ys, Task::Regression).unwrap(), kernel, loss, lambda, ties }
}

/// Solves `K f = Φ(x)` in `span{Φ(x), Φ(x₁), …, Φ(xₙ)}` with `K` applied to
/// coefficient vectors directly, and returns `f` at the probe points.
pub fn dense_inverse_values(model: &FittedModel, data: &Dataset, x: &[f64], probes: &[Vec<f64>]) -> Vec<f64> {
    let n = data.n();
    let k = model.kernel();
    let loss = model.loss();
    let lambda = model.lambda();
    let mut pts = vec![x.to_vec()];
    pts.extend((0..n).map(|i| data.x(i).to_vec()));
    let g = na_gram(k, &pts);
    let w: Vec<f64> = (0..n).map(|i| loss.d2(data.y(i), model.evaluate(data.x(i)).unwrap())).collect();
    // coefficients of K f: 2λ c + (1/n) diag(0, w) G c
    let mut m = DMatrix::<f64>::identity(n + 1, n + 1) * (2.0 * lambda);
    for i in 0..n {
        for j in 0..=n {
            m[(i + 1, j)] += w[i] * g[(i + 1, j)] / n as f64;
        }
    }
    // M is similar to 2λI + D^{1/2} G D^{1/2}, hence invertible; matching
    // coefficients is sufficient for equality as functions
    let mut rhs = DVector::<f64>::zeros(n + 1);
    rhs[0] = 1.0;
    let c = m.lu().solve(&rhs).expect("invertible coefficient system");
    probes.iter().map(|z| pts.iter().zip(c.iter()).map(|(p, ci)| ci * k.eval(p, z)).sum()).collect()
}

/// Fast-path `K⁻¹Φ(x)` against the dense solve on random instances.
pub fn operator_inverse_check(instances: usize, seed: u64, tol: f64) -> Check {
    let mut worst = 0.0f64;
    let mut tied = 0;
    for idx in 0..instances {
        let mut s = Stream::new(seed, idx as u64);
        let inst = random_instance(&mut s, idx);
        tied += inst.ties as usize;
        let model = fit(&inst.data, &inst.kernel, &inst.loss, inst.lambda).map_err(|e| format!("instance {idx}: fit failed: {e}"))?;
        let engine = CovarianceEngine::for_model(&inst.data, &model).map_err(|e| format!("instance {idx}: {e}"))?;
        let d = inst.data.dim();
        let x: Vec<f64> = (0..d).map(|_| s.uniform_in(-2.5, 2.5)).collect();
        let probes: Vec<Vec<f64>> = (0..20).map(|_| (0..d).map(|_| s.uniform_in(-2.5, 2.5)).collect()).collect();
        let alpha = engine.alpha(&x).map_err(|e| e.to_string())?;
        let dense = dense_inverse_values(&model, &inst.data, &x, &probes);
        for (z, want) in probes.iter().zip(&dense) {
            let k = model.kernel();
            let fast = k.eval(&x, z) / (2.0 * inst.lambda)
                + (0..inst.data.n()).map(|i| alpha[i] * k.eval(inst.data.x(i), z)).sum::<f64>();
            let err = (fast - want).abs();
            worst = worst.max(err);
            if !(err <= tol) {
                return Err(format!(
                    "instance {idx} (n = {}, {:?}, {:?}, ties = {}): |fast - dense| = {err:e} at probe {z:?}",
                    inst.data.n(),
                    inst.kernel.family,
                    inst.loss,
                    inst.ties
                ));
            }
        }
    }
    Ok(format!("{instances} instances ({tied} with ties), max abs error {worst:e}"))
}

/// `g(x, y)` for a pointwise functional against `-L'(y, f(x)) · (K⁻¹Φ(x))(x̃)` from the dense solve.
pub fn g_value_check(instances: usize, seed: u64, tol: f64) -> Check {
    let mut worst = 0.0f64;
    for idx in 0..instances {
        let mut s = Stream::new(seed, idx as u64);
        let inst = random_instance(&mut s, idx);
        let model = fit(&inst.data, &inst.kernel, &inst.loss, inst.lambda).map_err(|e| e.to_string())?;
        let engine = CovarianceEngine::for_model(&inst.data, &model).map_err(|e| e.to_string())?;
        let d = inst.data.dim();
        let target: Vec<f64> = (0..d).map(|_| s.uniform_in(-2.0, 2.0)).collect();
        let fun = Functional::pointwise(target.clone(), d).unwrap();
        let x: Vec<f64> = (0..d).map(|_| s.uniform_in(-2.0, 2.0)).collect();
        let y = 2.0 * s.normal();
        let g = engine.g_value(&fun, &x, y).map_err(|e| e.to_string())?;
        let dense = dense_inverse_values(&model, &inst.data, &x, &[target]);
        let want = -inst.loss.d1(y, model.evaluate(&x).unwrap()) * dense[0];
        let err = (g[0] - want).abs();
        worst = worst.max(err);
        if !(err <= tol) {
            return Err(format!("instance {idx}: g = {} vs dense {want} (err {err:e})", g[0]));
        }
    }
    Ok(format!("{instances} instances, max abs error {worst:e}"))
}

/// Least-squares fits against `(G + nλI)⁻¹ y`.
pub fn ridge_check(instances: usize, seed: u64, rtol: f64) -> Check {
    let mut worst = 0.0f64;
    for idx in 0..instances {
        let mut s = Stream::new(seed, idx as u64);
        let n = 2 + s.below(60) as usize;
        let d = 1 + s.below(3) as usize;
        let xs: Vec<f64> = (0..n * d).map(|_| s.uniform_in(-3.0, 3.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| 3.0 * s.normal()).collect();
        let family = match idx % 3 {
            0 => KernelFamily::GaussianRbf { gamma: s.uniform_in(0.1, 3.0) },
            1 => KernelFamily::Linear,
            _ => KernelFamily::Polynomial { degree: 2, offset: 1.0, scale: 0.5 },
        };
        let kernel = KernelSpec::new(family, d).unwrap();
        let lambda = 10f64.powf(s.uniform_in(-4.0, 0.0));
        let data = Dataset::new(xs, d, ys.clone(), Task::Regression).unwrap();
        let model = fit(&data, &kernel, &LossSpec::LsRegression, lambda).map_err(|e| format!("instance {idx}: {e}"))?;
        let pts: Vec<Vec<f64>> = (0..n).map(|i| data.x(i).to_vec()).collect();
        let a = na_gram(&kernel, &pts) + DMatrix::identity(n, n) * (n as f64 * lambda);
        let want = a.lu().solve(&DVector::from_vec(ys)).ok_or("singular ridge system")?;
        let got = DVector::from_column_slice(model.coeffs());
        let rel = (&got - &want).norm() / want.norm();
        worst = worst.max(rel);
        if !(rel <= rtol) {
            return Err(format!("instance {idx} (n = {n}, {family:?}, lambda = {lambda}): relative error {rel:e}"));
        }
    }
    Ok(format!("{instances} instances, max relative error {worst:e}"))
}

fn all_losses() -> Vec<(LossSpec, Vec<f64>)> {
    vec![
        (LossSpec::LsRegression, vec![-2.0, 0.0, 1.5]),
        (LossSpec::logistic_regression(0.5).unwrap(), vec![-2.0, 0.0, 1.5]),
        (LossSpec::logistic_regression(2.0).unwrap(), vec![-2.0, 0.3]),
        (LossSpec::LsClassification, vec![-1.0, 1.0]),
        (LossSpec::LogisticClassification, vec![-1.0, 1.0]),
        (LossSpec::LogisticClassificationShifted, vec![-1.0, 1.0]),
    ]
}

/// Central differences of the loss and of its first derivative.
pub fn loss_derivative_check(tol: f64) -> Check {
    let h = 1e-4;
    let mut count = 0;
    for (loss, labels) in all_losses() {
        for &y in &labels {
            for i in 0..=40 {
                let t = -4.0 + 0.2 * i as f64;
                let d1 = (loss.value(y, t + h) - loss.value(y, t - h)) / (2.0 * h);
                let d2 = (loss.d1(y, t + h) - loss.d1(y, t - h)) / (2.0 * h);
                let e1 = (d1 - loss.dloss(y, t).unwrap()).abs();
                let e2 = (d2 - loss.ddloss(y, t).unwrap()).abs();
                if !(e1 <= tol && e2 <= tol) {
                    return Err(format!("{loss:?} at y = {y}, t = {t}: L' error {e1:e}, L'' error {e2:e}"));
                }
                count += 1;
            }
        }
    }
    Ok(format!("{count} points, all within {tol:e}"))
}

/// `∇ₜ k(x, t)` against central differences, every kernel family.
pub fn kernel_gradient_check(tol: f64) -> Check {
    let h = 1e-5;
    let mut s = Stream::new(11, 0);
    let families = [
        KernelFamily::GaussianRbf { gamma: 0.5 },
        KernelFamily::GaussianRbf { gamma: 2.0 },
        KernelFamily::Polynomial { degree: 3, offset: 1.0, scale: 0.7 },
        KernelFamily::Linear,
        KernelFamily::Exponential { gamma: 0.3 },
    ];
    let mut count = 0;
    for fam in families {
        for d in 1..=3 {
            let k = KernelSpec::new(fam, d).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..d).map(|_| s.uniform_in(-1.5, 1.5)).collect();
                let x0: Vec<f64> = (0..d).map(|_| s.uniform_in(-1.5, 1.5)).collect();
                let g = k.k_grad2(&x, &x0).unwrap();
                for a in 0..d {
                    let mut up = x0.clone();
                    let mut dn = x0.clone();
                    up[a] += h;
                    dn[a] -= h;
                    let fd = (k.eval(&x, &up) - k.eval(&x, &dn)) / (2.0 * h);
                    let err = (fd - g[a]).abs();
                    if !(err <= tol) {
                        return Err(format!("{fam:?}, d = {d}: coordinate {a} error {err:e}"));
                    }
                    count += 1;
                }
            }
        }
    }
    Ok(format!("{count} partial derivatives, all within {tol:e}"))
}

fn union_model(f: &FittedModel, h: &Representer, t: f64) -> FittedModel {
    let mut support = f.support().to_vec();
    support.extend_from_slice(&h.points);
    let mut coeffs = f.coeffs().to_vec();
    coeffs.extend(h.coeffs.iter().map(|c| t * c));
    FittedModel::from_expansion(support, coeffs, *f.kernel(), *f.loss(), f.lambda()).unwrap()
}

/// `ψ'_f(h) = Σⱼ cⱼ ψ'_f(zⱼ)` against `(ψ(f + t h) − ψ(f − t h)) / 2t` for every functional kind.
pub fn functional_derivative_check(tol: f64) -> Check {
    let mut s = Stream::new(12, 0);
    let mut count = 0;
    for d in 1..=2 {
        let kernel = KernelSpec::rbf(0.7, d).unwrap();
        let region = Region::new(vec![-1.0; d], vec![1.0; d]).unwrap();
        let sample: Vec<f64> = (0..30 * d).map(|_| s.uniform_in(-1.5, 1.5)).collect();
        let kinds = vec![
            FunctionalKind::Pointwise { points: (0..3 * d).map(|_| s.uniform_in(-1.0, 1.0)).collect() },
            FunctionalKind::InnerProducts {
                hs: vec![Representer {
                    points: (0..2 * d).map(|_| s.uniform_in(-1.0, 1.0)).collect(),
                    coeffs: vec![0.4, -1.1],
                }],
            },
            FunctionalKind::GradientAt { x0: vec![0.1; d] },
            FunctionalKind::IntegralOver { region: region.clone(), measure: Measure::Empirical { sample } },
            FunctionalKind::IntegralOver { region: region.clone(), measure: Measure::LebesgueGrid { nodes_per_axis: 41 } },
            FunctionalKind::SquaredHNorm,
            FunctionalKind::SquaredL2Norm { region: region.clone(), nodes_per_axis: 41 },
        ];
        for kind in kinds {
            let fun = Functional::new(kind.clone(), d).unwrap().with_domain(Region::new(vec![-2.0; d], vec![2.0; d]).unwrap()).unwrap();
            for _ in 0..5 {
                let support: Vec<f64> = (0..6 * d).map(|_| s.uniform_in(-1.5, 1.5)).collect();
                let coeffs: Vec<f64> = (0..6).map(|_| s.normal()).collect();
                let f = FittedModel::from_expansion(support, coeffs, kernel, LossSpec::LsRegression, 0.1).unwrap();
                let h = Representer {
                    points: (0..3 * d).map(|_| s.uniform_in(-1.5, 1.5)).collect(),
                    coeffs: (0..3).map(|_| s.normal()).collect(),
                };
                let m = fun.m();
                let mut analytic = vec![0.0; m];
                for (z, c) in h.points.chunks(d).zip(&h.coeffs) {
                    let p = fun.psi_prime_eval(&f, z).unwrap();
                    for j in 0..m {
                        analytic[j] += c * p[j];
                    }
                }
                let t = 1e-5;
                let up = fun.psi_value(&union_model(&f, &h, t)).unwrap();
                let dn = fun.psi_value(&union_model(&f, &h, -t)).unwrap();
                for j in 0..m {
                    let fd = (up[j] - dn[j]) / (2.0 * t);
                    let err = (fd - analytic[j]).abs();
                    if !(err <= tol) {
                        return Err(format!("{kind:?} (d = {d}) component {j}: error {err:e}"));
                    }
                }
                count += 1;
            }
        }
    }
    Ok(format!("{count} directional derivatives, all within {tol:e}"))
}

fn random_matrix(s: &mut Stream, rows: usize, cols: usize, rank: usize) -> Matrix {
    let a = Matrix::from_fn(rows, rank, |_, _| s.normal());
    let b = Matrix::from_fn(rank, cols, |_, _| s.normal());
    &a * &b
}

/// The four Penrose conditions on random full-rank and rank-deficient matrices.
pub fn moore_penrose_check(tol: f64) -> Check {
    let mut s = Stream::new(13, 0);
    let mut worst = 0.0f64;
    for trial in 0..60 {
        let rows = 1 + s.below(12) as usize;
        let cols = 1 + s.below(12) as usize;
        let rank = 1 + s.below(rows.min(cols) as u64) as usize;
        let a = to_na(&random_matrix(&mut s, rows, cols, rank));
        let p = to_na(&pinv(rkhs_ci::numerics::Matrix::from_fn(rows, cols, |i, j| a[(i, j)]).as_ref(), None).map_err(|e| e.to_string())?);
        let scale = a.norm().max(1.0) * p.norm().max(1.0);
        let errs = [
            (&a * &p * &a - &a).norm() / a.norm(),
            (&p * &a * &p - &p).norm() / p.norm(),
            ((&a * &p) - (&a * &p).transpose()).norm() / scale,
            ((&p * &a) - (&p * &a).transpose()).norm() / scale,
        ];
        for (axiom, e) in errs.iter().enumerate() {
            worst = worst.max(*e);
            if !(*e <= tol) {
                return Err(format!("trial {trial} ({rows}x{cols}, rank {rank}): axiom {} error {e:e}", axiom + 1));
            }
        }
    }
    Ok(format!("60 matrices, max relative violation {worst:e}"))
}

/// Closed form at two degrees of freedom, table values, and an independent inverse CDF.
pub fn chi2_check() -> Check {
    for &a in &[0.5, 0.2, 0.1, 0.05, 0.01, 0.001] {
        let q = chi2_quantile(2, a);
        let want = -2.0 * f64::ln(a);
        if (q - want).abs() > 1e-10 * want {
            return Err(format!("m = 2, alpha = {a}: {q} vs -2 ln alpha = {want}"));
        }
    }
    for &(m, a, want) in &[(1, 0.05, 3.8415), (4, 0.05, 9.4877)] {
        let q = chi2_quantile(m, a);
        if (q - want).abs() > 1e-3 {
            return Err(format!("chi2 quantile ({m}, {a}) = {q}, table {want}"));
        }
    }
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let mut worst = 0.0f64;
    for m in 1..=30 {
        let dist = ChiSquared::new(m as f64).unwrap();
        for &a in &[0.5, 0.25, 0.1, 0.05, 0.025, 0.01, 0.001] {
            let q = chi2_quantile(m, a);
            let want = dist.inverse_cdf(1.0 - a);
            let rel = (q - want).abs() / want;
            worst = worst.max(rel);
            if rel > 1e-6 {
                return Err(format!("chi2 quantile ({m}, {a}) = {q}, reference {want}"));
            }
        }
    }
    Ok(format!("closed form and table values hold, max relative gap to reference {worst:e}"))
}

fn random_spd(s: &mut Stream, m: usize) -> Matrix {
    let a = Matrix::from_fn(m, m, |_, _| s.normal());
    let mut c = &a * a.transpose();
    for i in 0..m {
        c[(i, i)] += 0.1;
    }
    c
}

/// Boundary, monotonicity in the level, scaling in n, and membership against
/// a Mahalanobis distance computed by a linear solve.
pub fn ellipsoid_check() -> Check {
    let mut s = Stream::new(14, 0);
    for trial in 0..40 {
        let m = 1 + s.below(5) as usize;
        let sigma = random_spd(&mut s, m);
        let center: Vec<f64> = (0..m).map(|_| s.normal()).collect();
        let n = 10 + s.below(1000) as usize;
        let e = ConfidenceEllipsoid::new(center.clone(), sigma.clone(), n, 0.05).map_err(|e| e.to_string())?;
        let r2 = e.radius_sq();
        for ax in e.principal_axes().map_err(|e| e.to_string())? {
            for sign in [1.0, -1.0] {
                let w: Vec<f64> = center.iter().zip(&ax.direction).map(|(c, v)| c + sign * ax.length * v).collect();
                let stat = e.statistic(&w).unwrap();
                if (stat - r2).abs() > 1e-9 * r2 {
                    return Err(format!("trial {trial}: boundary statistic {stat} vs {r2}"));
                }
                if !e.contains(&w).unwrap() {
                    return Err(format!("trial {trial}: boundary point not contained"));
                }
                let out: Vec<f64> = center.iter().zip(&ax.direction).map(|(c, v)| c + sign * 2.0 * ax.length * v).collect();
                if e.contains(&out).unwrap() {
                    return Err(format!("trial {trial}: point at twice the axis length contained"));
                }
                // a smaller set (larger alpha) must lie inside
                let inner = ConfidenceEllipsoid::new(center.clone(), sigma.clone(), n, 0.2).unwrap();
                let ax_in = inner.principal_axes().unwrap();
                for a in &ax_in {
                    let p: Vec<f64> = center.iter().zip(&a.direction).map(|(c, v)| c + sign * a.length * v).collect();
                    if !e.contains(&p).unwrap() {
                        return Err(format!("trial {trial}: level-0.2 boundary outside the level-0.05 set"));
                    }
                }
            }
        }
        let quad = ConfidenceEllipsoid::new(center.clone(), sigma.clone(), 4 * n, 0.05).unwrap();
        for (a, b) in e.principal_axes().unwrap().iter().zip(quad.principal_axes().unwrap()) {
            if (b.length - 0.5 * a.length).abs() > 1e-12 * a.length {
                return Err(format!("trial {trial}: axis {} at 4n vs {} at n", b.length, a.length));
            }
        }
        let sig = to_na(&sigma);
        for _ in 0..20 {
            let w: Vec<f64> = center.iter().map(|c| c + 0.3 * s.normal() / (n as f64).sqrt()).collect();
            let diff = DVector::from_iterator(m, w.iter().zip(&center).map(|(a, b)| a - b));
            let solved = sig.clone().lu().solve(&diff).unwrap();
            let maha = diff.dot(&solved);
            let stat = e.statistic(&w).unwrap();
            if (maha - stat).abs() > 1e-9 * maha.max(r2) {
                return Err(format!("trial {trial}: statistic {stat} vs solve-based {maha}"));
            }
            if (maha <= r2 * (1.0 - 1e-9)) != e.contains(&w).unwrap() && (maha - r2).abs() > 1e-9 * r2 {
                return Err(format!("trial {trial}: membership disagrees with the solve-based test"));
            }
        }
    }
    Ok("40 random ellipsoids: boundary, level monotonicity, scaling and membership hold".into())
}
