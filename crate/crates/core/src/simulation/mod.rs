//! Monte-Carlo coverage studies: repeated sampling, λ selection, fitting,
//! confidence sets, and membership of a large-sample reference target.

mod report;
mod scenario;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use report::{records_csv, sigma_csv, write_band_csv, write_report};
pub use scenario::{f0, gen_bivariate, gen_univariate, Scenario};

use crate::confidence::{is_degenerate, ConfidenceEllipsoid};
use crate::covariance::{centered_second_moment, CovarianceEngine};
use crate::data::Dataset;
use crate::error::{contract, Result};
use crate::functionals::{Functional, FunctionalKind};
use crate::kernels::KernelSpec;
use crate::losses::LossSpec;
use crate::model_selection::{constrain_grid, cv_select_with_gram};
use crate::numerics::Matrix;
use crate::rng::Stream;
use crate::solver::{fit_low_rank, fit_with_gram, low_rank_basis_size, FitOptions, FittedModel, LowRankOptions};

/// λ grid searched by cross-validation in the coverage studies.
pub const STUDY_GRID: [f64; 7] = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 0.01];

/// Stream ids at and above this value are reserved for the reference oracles.
/// Stream index of the first reference sample; the second uses the next one.
pub const ORACLE_STREAM: u64 = 1 << 63;

/// Smallest default reference sample. Two independent fits of this size agree
/// to about 0.005 on the pointwise targets at λ₀ = 1e-5.
pub const DEFAULT_ORACLE_N: usize = 2_000_000;

/// Entries of the reference fit's cached feature matrix (`oracle_n × rank`), 1 GiB of f64.
pub const ORACLE_FEATURE_BUDGET: usize = 1 << 27;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedFunctional {
    pub name: String,
    pub kind: FunctionalKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub replications: usize,
    pub alpha: f64,
    pub lambda0: f64,
    pub grid: Vec<f64>,
    pub folds: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub functionals: Vec<NamedFunctional>,
    pub seed: u64,
    pub workers: usize,
    /// Restrict the grid to `[λ₀, λ₀ + c/√(n ln n)]` when set.
    pub constraint_c: Option<f64>,
    /// Sample size of the reference fit; `None` means `max(100 n, 2_000_000)`.
    pub oracle_n: Option<usize>,
    /// Allowed disagreement between the two independent reference fits.
    pub oracle_margin: f64,
}

fn pointwise(name: &str, points: Vec<f64>) -> NamedFunctional {
    NamedFunctional { name: name.into(), kind: FunctionalKind::Pointwise { points } }
}

impl SimConfig {
    /// Pointwise study in one dimension: `f(3)`, `f` at `{1,2,3,4}` and at `{1, 1.5, …, 4}`.
    pub fn pointwise_study(n: usize) -> Self {
        Self {
            scenario: Scenario::Univariate,
            n,
            replications: 500,
            alpha: 0.05,
            lambda0: 1e-5,
            grid: STUDY_GRID.to_vec(),
            folds: 5,
            gamma: 0.5,
            sigma: 0.5,
            functionals: vec![
                pointwise("pointwise_1", vec![3.0]),
                pointwise("pointwise_4", vec![1.0, 2.0, 3.0, 4.0]),
                pointwise("pointwise_7", (0..7).map(|i| 1.0 + 0.5 * i as f64).collect()),
            ],
            seed: 20_240_501,
            workers: 1,
            constraint_c: None,
            oracle_n: None,
            oracle_margin: 0.01,
        }
    }

    /// Gradient at `x₀ = 3` in the univariate scenario.
    pub fn gradient_study(n: usize) -> Self {
        Self {
            replications: 300,
            functionals: vec![NamedFunctional {
                name: "gradient".into(),
                kind: FunctionalKind::GradientAt { x0: vec![3.0] },
            }],
            ..Self::pointwise_study(n)
        }
    }

    /// Gradient at `x₀ = (3, 0)` in the bivariate scenario with `γ = 1/3`.
    pub fn bivariate_gradient_study(n: usize) -> Self {
        Self {
            scenario: Scenario::Bivariate,
            gamma: 1.0 / 3.0,
            functionals: vec![NamedFunctional {
                name: "gradient".into(),
                kind: FunctionalKind::GradientAt { x0: vec![3.0, 0.0] },
            }],
            ..Self::gradient_study(n)
        }
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::rbf(self.gamma, self.scenario.dim())
    }

    pub fn loss(&self) -> Result<LossSpec> {
        LossSpec::logistic_regression(self.sigma)
    }

    /// Reference sample size: the configured value, or `max(100 n, 2·10⁶)`
    /// capped so that the cached feature rows stay within `ORACLE_FEATURE_BUDGET`.
    pub fn effective_oracle_n(&self) -> Result<usize> {
        if let Some(n) = self.oracle_n {
            return Ok(n);
        }
        let opts = LowRankOptions::default();
        let probe = self.scenario.sample(opts.basis_sample, &mut Stream::new(self.seed, ORACLE_STREAM));
        let rank = low_rank_basis_size(&probe, &self.kernel()?, &opts)?;
        Ok((100 * self.n).max(DEFAULT_ORACLE_N).min(ORACLE_FEATURE_BUDGET / rank.max(1)))
    }

    /// Functionals bound to the scenario's dimension and domain.
    pub fn build_functionals(&self) -> Result<Vec<Functional>> {
        let dim = self.scenario.dim();
        self.functionals
            .iter()
            .map(|f| Functional::new(f.kind.clone(), dim)?.with_domain(self.scenario.domain()))
            .collect()
    }

    /// The λ grid after the optional constraint.
    pub fn effective_grid(&self) -> Result<Vec<f64>> {
        match self.constraint_c {
            Some(c) => constrain_grid(&self.grid, self.lambda0, c, self.n),
            None => crate::model_selection::normalize_grid(&self.grid),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.n < self.folds.max(2) || self.workers == 0 {
            return Err(contract("need replications >= 1, workers >= 1 and n >= folds >= 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(contract("alpha must lie in (0, 1)"));
        }
        if !(self.lambda0 > 0.0) || !(self.oracle_margin >= 0.0) {
            return Err(contract("lambda0 must be > 0 and the oracle margin >= 0"));
        }
        if self.functionals.is_empty() {
            return Err(contract("no functionals configured"));
        }
        self.kernel()?;
        self.loss()?;
        self.effective_grid()?;
        self.build_functionals()?;
        Ok(())
    }
}

/// Fit on an `oracle_n`-point sample at the fixed `λ₀`, as a stand-in for the
/// population minimizer.
pub fn oracle_model(
    scenario: Scenario,
    kernel: &KernelSpec,
    loss: &LossSpec,
    lambda0: f64,
    oracle_n: usize,
    seed: u64,
    stream: u64,
) -> Result<FittedModel> {
    let data = scenario.sample(oracle_n, &mut Stream::new(seed, stream));
    fit_low_rank(&data, kernel, loss, lambda0, &LowRankOptions::default())
}

/// `ψ(f_{P,λ₀})` approximated by the large-sample fit.
pub fn reference_target(
    scenario: Scenario,
    kernel: &KernelSpec,
    loss: &LossSpec,
    lambda0: f64,
    fun: &Functional,
    oracle_n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let model = oracle_model(scenario, kernel, loss, lambda0, oracle_n, seed, ORACLE_STREAM)?;
    fun.psi_value(&model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub covered: bool,
    pub center: Vec<f64>,
    /// Row-major `m × m`.
    pub sigma_hat: Vec<f64>,
    /// Interval length, `m = 1` only.
    pub length: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub index: usize,
    pub lambda: Option<f64>,
    pub outcomes: Vec<RepOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSummary {
    pub name: String,
    pub m: usize,
    pub target: Vec<f64>,
    pub alternate_target: Vec<f64>,
    /// Largest coordinate difference between the two reference fits.
    pub oracle_gap: f64,
    pub oracle_stable: bool,
    pub covered: usize,
    pub failures: usize,
    pub coverage: f64,
    /// `1.96 √(p(1−p)/R)`
    pub margin: f64,
    pub mean_length: Option<f64>,
    pub length_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub config: SimConfig,
    pub oracle_n: usize,
    pub summaries: Vec<FunctionalSummary>,
    pub records: Vec<RepRecord>,
}

impl CoverageReport {
    pub fn summary(&self, name: &str) -> Option<&FunctionalSummary> {
        self.summaries.iter().find(|s| s.name == name)
    }
}

fn failed(m: usize, msg: String) -> RepOutcome {
    RepOutcome { covered: false, center: vec![f64::NAN; m], sigma_hat: vec![], length: None, error: Some(msg) }
}

fn run_replication(
    cfg: &SimConfig,
    index: usize,
    kernel: &KernelSpec,
    loss: &LossSpec,
    grid: &[f64],
    funs: &[Functional],
    targets: &[Vec<f64>],
) -> RepRecord {
    let mut stream = Stream::new(cfg.seed, index as u64);
    let data = cfg.scenario.sample(cfg.n, &mut stream);
    let cv_seed = stream.next_u64();
    let fitted = (|| {
        let gram = kernel.gram(data.xs())?;
        let opts = FitOptions::default();
        let cv = cv_select_with_gram(&data, kernel, loss, grid, cfg.folds, cv_seed, &gram, &opts)?;
        let model = fit_with_gram(&data, kernel, loss, cv.lambda, gram, &opts, None)?;
        Ok::<_, crate::Error>((cv.lambda, model))
    })();
    let (lambda, model) = match fitted {
        Ok(v) => v,
        Err(e) => {
            let outcomes = funs.iter().map(|f| failed(f.m(), e.to_string())).collect();
            return RepRecord { index, lambda: None, outcomes };
        }
    };
    let engine = match CovarianceEngine::for_model(&data, &model) {
        Ok(e) => e,
        Err(e) => {
            let outcomes = funs.iter().map(|f| failed(f.m(), e.to_string())).collect();
            return RepRecord { index, lambda: Some(lambda), outcomes };
        }
    };
    let outcomes = funs
        .iter()
        .zip(targets)
        .map(|(fun, target)| {
            let m = fun.m();
            let center = match fun.psi_value(&model) {
                Ok(c) => c,
                Err(e) => return failed(m, e.to_string()),
            };
            let cov = match engine.sigma_hat(fun) {
                Ok(c) => c,
                Err(e) => return failed(m, e.to_string()),
            };
            let sigma_hat: Vec<f64> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| cov.sigma_hat[(i, j)]).collect();
            match ConfidenceEllipsoid::new(center.clone(), cov.sigma_hat, cfg.n, cfg.alpha) {
                Ok(e) => RepOutcome {
                    covered: e.contains(target).unwrap_or(false),
                    length: e.interval().ok().map(|(lo, hi)| hi - lo),
                    center,
                    sigma_hat,
                    error: None,
                },
                Err(err) => RepOutcome { center, sigma_hat, ..failed(m, err.to_string()) },
            }
        })
        .collect();
    RepRecord { index, lambda: Some(lambda), outcomes }
}

/// Runs the configured study. Replications are independent given the seed, so
/// the report does not depend on the worker count.
pub fn coverage_experiment(cfg: &SimConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let kernel = cfg.kernel()?;
    let loss = cfg.loss()?;
    let grid = cfg.effective_grid()?;
    let funs = cfg.build_functionals()?;
    let oracle_n = cfg.effective_oracle_n()?;

    let first = oracle_model(cfg.scenario, &kernel, &loss, cfg.lambda0, oracle_n, cfg.seed, ORACLE_STREAM)?;
    let second = oracle_model(cfg.scenario, &kernel, &loss, cfg.lambda0, oracle_n, cfg.seed, ORACLE_STREAM + 1)?;
    let targets: Vec<Vec<f64>> = funs.iter().map(|f| f.psi_value(&first)).collect::<Result<_>>()?;
    let alternates: Vec<Vec<f64>> = funs.iter().map(|f| f.psi_value(&second)).collect::<Result<_>>()?;

    let slots: Mutex<Vec<Option<RepRecord>>> = Mutex::new(vec![None; cfg.replications]);
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.min(cfg.replications);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cfg.replications {
                    break;
                }
                let rec = run_replication(cfg, i, &kernel, &loss, &grid, &funs, &targets);
                slots.lock().unwrap()[i] = Some(rec);
            });
        }
    });
    let records: Vec<RepRecord> = slots.into_inner().unwrap().into_iter().map(|r| r.expect("every replication ran")).collect();

    let reps = cfg.replications as f64;
    let summaries = funs
        .iter()
        .enumerate()
        .map(|(j, fun)| {
            let covered = records.iter().filter(|r| r.outcomes[j].covered).count();
            let failures = records.iter().filter(|r| r.outcomes[j].error.is_some()).count();
            let coverage = covered as f64 / reps;
            let lengths: Vec<f64> = records.iter().filter_map(|r| r.outcomes[j].length).collect();
            let (mean_length, length_sd) = if fun.m() == 1 && !lengths.is_empty() {
                let k = lengths.len() as f64;
                let mean = lengths.iter().sum::<f64>() / k;
                let var = if lengths.len() > 1 {
                    lengths.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (k - 1.0)
                } else {
                    0.0
                };
                (Some(mean), Some(var.sqrt()))
            } else {
                (None, None)
            };
            let oracle_gap = targets[j].iter().zip(&alternates[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            FunctionalSummary {
                name: cfg.functionals[j].name.clone(),
                m: fun.m(),
                target: targets[j].clone(),
                alternate_target: alternates[j].clone(),
                oracle_gap,
                oracle_stable: oracle_gap <= cfg.oracle_margin,
                covered,
                failures,
                coverage,
                margin: 1.96 * (coverage * (1.0 - coverage) / reps).sqrt(),
                mean_length,
                length_sd,
            }
        })
        .collect();
    Ok(CoverageReport { config: cfg.clone(), oracle_n, summaries, records })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub x: Vec<f64>,
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
    /// Zero estimated variance; no interval exists at this point.
    pub degenerate: bool,
}

/// Pointwise intervals for `f(x̃)` at each grid point. These are not a
/// simultaneous band.
pub fn band_data(engine: &CovarianceEngine, model: &FittedModel, data: &Dataset, grid: &[f64], alpha: f64) -> Result<Vec<BandRow>> {
    let d = data.dim();
    let fun = Functional::pointwise(grid.to_vec(), d)?;
    let g = engine.g_matrix(&fun)?;
    let n = data.n();
    let m = fun.m();
    let mut rows = Vec::with_capacity(m);
    for (j, x) in grid.chunks(d).enumerate() {
        let col = Matrix::from_fn(n, 1, |i, _| g[(i, j)]);
        let var = centered_second_moment(&col);
        let center = model.eval(x);
        rows.push(match ConfidenceEllipsoid::new(vec![center], var, n, alpha) {
            Ok(e) => {
                let (lo, hi) = e.interval()?;
                BandRow { x: x.to_vec(), center, lo, hi, degenerate: false }
            }
            Err(e) if is_degenerate(&e) => BandRow { x: x.to_vec(), center, lo: f64::NAN, hi: f64::NAN, degenerate: true },
            Err(e) => return Err(e),
        });
    }
    Ok(rows)
}
