use proptest::prelude::*;
use rkhs_ci::covariance::{basis_decomposition, CovarianceEngine};
use rkhs_ci::functionals::{FunctionalKind, Representer};
use rkhs_ci::io::{parse_config, serialize_config, Command};
use rkhs_ci::model_selection::{cv_select, fold_assignment};
use rkhs_ci::{fit, Dataset, FittedModel, Functional, KernelSpec, LossSpec, Task};

fn dataset(xs: &[f64], ys: &[f64]) -> Dataset {
    Dataset::new(xs.to_vec(), 1, ys.to_vec(), Task::Regression).unwrap()
}

fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (4usize..20).prop_flat_map(|n| (prop::collection::vec(-3.0..3.0f64, n), prop::collection::vec(-2.0..2.0f64, n)))
}

fn model(points: Vec<f64>, coeffs: Vec<f64>) -> FittedModel {
    FittedModel::from_expansion(points, coeffs, KernelSpec::rbf(0.5, 1).unwrap(), LossSpec::LsRegression, 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_functionals_are_linear(
        p in prop::collection::vec(-3.0..3.0f64, 5),
        c1 in prop::collection::vec(-2.0..2.0f64, 5),
        c2 in prop::collection::vec(-2.0..2.0f64, 5),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        at in prop::collection::vec(-2.0..2.0f64, 1..4),
    ) {
        let combo: Vec<f64> = c1.iter().zip(&c2).map(|(u, v)| a * u + b * v).collect();
        let kinds = vec![
            FunctionalKind::Pointwise { points: at.clone() },
            FunctionalKind::InnerProducts { hs: vec![Representer { points: at.clone(), coeffs: vec![1.0; at.len()] }] },
            FunctionalKind::GradientAt { x0: vec![at[0]] },
        ];
        for kind in kinds {
            let fun = Functional::new(kind, 1).unwrap().with_domain(rkhs_ci::functionals::Region::new(vec![-4.0], vec![4.0]).unwrap()).unwrap();
            let f = fun.psi_value(&model(p.clone(), c1.clone())).unwrap();
            let g = fun.psi_value(&model(p.clone(), c2.clone())).unwrap();
            let h = fun.psi_value(&model(p.clone(), combo.clone())).unwrap();
            for j in 0..h.len() {
                let want = a * f[j] + b * g[j];
                prop_assert!((h[j] - want).abs() <= 1e-10 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn pointwise_equals_inner_product_with_feature(
        p in prop::collection::vec(-3.0..3.0f64, 6),
        c in prop::collection::vec(-2.0..2.0f64, 6),
        at in prop::collection::vec(-3.0..3.0f64, 1..5),
    ) {
        let f = model(p, c);
        let pw = Functional::pointwise(at.clone(), 1).unwrap().psi_value(&f).unwrap();
        let hs = at.iter().map(|&x| Representer { points: vec![x], coeffs: vec![1.0] }).collect();
        let ip = Functional::new(FunctionalKind::InnerProducts { hs }, 1).unwrap().psi_value(&f).unwrap();
        for (u, v) in pw.iter().zip(&ip) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn sigma_hat_ignores_sample_order((xs, ys) in sample(), seed in any::<u64>()) {
        let n = xs.len();
        let mut order: Vec<usize> = (0..n).collect();
        rkhs_ci::rng::Stream::new(seed, 0).shuffle(&mut order);
        let xs2: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
        let ys2: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
        let kernel = KernelSpec::rbf(0.5, 1).unwrap();
        let loss = LossSpec::logistic_regression(0.5).unwrap();
        let fun = Functional::pointwise(vec![0.0, 1.0], 1).unwrap();
        let mut sig = Vec::new();
        for (x, y) in [(xs, ys), (xs2, ys2)] {
            let d = dataset(&x, &y);
            let m = fit(&d, &kernel, &loss, 0.05).unwrap();
            sig.push(CovarianceEngine::for_model(&d, &m).unwrap().sigma_hat(&fun).unwrap().sigma_hat);
        }
        for i in 0..2 {
            for j in 0..2 {
                let (u, v) = (sig[0][(i, j)], sig[1][(i, j)]);
                prop_assert!((u - v).abs() <= 1e-7 * (1.0 + u.abs()), "{} vs {}", u, v);
            }
        }
    }

    #[test]
    fn folds_partition_the_sample(n in 2usize..300, folds in 2usize..11, seed in any::<u64>()) {
        prop_assume!(folds <= n);
        let parts = fold_assignment(n, folds, seed).unwrap();
        prop_assert_eq!(parts.len(), folds);
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(parts, fold_assignment(n, folds, seed).unwrap());
    }

    #[test]
    fn cross_validation_is_deterministic((xs, ys) in sample(), seed in any::<u64>()) {
        let d = dataset(&xs, &ys);
        let kernel = KernelSpec::rbf(0.5, 1).unwrap();
        let loss = LossSpec::logistic_regression(0.5).unwrap();
        let grid = [1e-3, 1e-2, 1e-1];
        let a = cv_select(&d, &kernel, &loss, &grid, 2, seed).unwrap();
        let b = cv_select(&d, &kernel, &loss, &grid, 2, seed).unwrap();
        prop_assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
        prop_assert_eq!(
            a.cv_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.cv_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn basis_reconstructs_every_feature(
        (mut xs, ys) in sample(),
        dup in prop::collection::vec((0usize..20, 0usize..20), 0..4),
        gamma in 0.05..3.0f64,
        linear in any::<bool>(),
    ) {
        let n = xs.len();
        for (a, b) in dup {
            xs[b % n] = xs[a % n];
        }
        let d = dataset(&xs, &ys);
        let kernel = if linear { KernelSpec::linear(1).unwrap() } else { KernelSpec::rbf(gamma, 1).unwrap() };
        let g = kernel.gram(d.xs()).unwrap();
        let basis = basis_decomposition(&d, &kernel, None).unwrap();
        let scale = (0..n).map(|i| g[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
        for k in 0..n {
            for i in 0..n {
                let rebuilt: f64 = basis.basis_indices.iter().enumerate().map(|(j, &p)| basis.b[(j, i)] * g[(k, p)]).sum();
                prop_assert!((rebuilt - g[(k, i)]).abs() <= 1e-8 * scale, "entry ({}, {})", k, i);
            }
        }
    }

    #[test]
    fn config_round_trip(
        seed in any::<u64>(),
        alpha in 0.001..0.5f64,
        folds in 2usize..10,
        gamma in prop::option::of(0.01..10.0f64),
        sigma in 0.1..3.0f64,
        points in prop::collection::vec(-5.0..5.0f64, 1..6),
        reps in 1usize..1000,
        cmd in prop::sample::select(vec![Command::Fit, Command::Ci, Command::Simulate, Command::Band]),
    ) {
        let g = gamma.map_or_else(|| "median".to_string(), |v| v.to_string());
        let pts: Vec<String> = points.iter().map(|p| p.to_string()).collect();
        let text = format!(
            "[run]\nseed = {seed}\n[kernel]\nfamily = rbf\ngamma = {g}\n[loss]\nkind = logistic_regression\nsigma = {sigma}\n\
             [lambda]\nfolds = {folds}\n[ci]\nalpha = {alpha}\n[functional f]\nkind = pointwise\npoints = {}\n\
             [simulate]\nreplications = {reps}\n",
            pts.join(", ")
        );
        let first = parse_config(&text, "generated", Some(cmd)).unwrap();
        let again = parse_config(&serialize_config(&first), "serialized", None).unwrap();
        prop_assert_eq!(first, again);
    }
}
