//! Executes a [`RunConfig`] and writes its artifacts into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{serialize_config, Command, RunConfig};
use super::csv::load_csv;
use crate::confidence::ConfidenceEllipsoid;
use crate::covariance::CovarianceEngine;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::functionals::rank_test;
use crate::kernels::KernelSpec;
use crate::model_selection::{constrain_grid, cv_select_with_gram, normalize_grid, CvOutcome};
use crate::simulation::{band_data, coverage_experiment, records_csv, sigma_csv, write_band_csv, write_report};
use crate::solver::{fit_with_gram, FitOptions, FittedModel};

/// Human-readable summary plus the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| Error::Io { path: path.clone(), source })?;
        self.files.push(path);
        Ok(())
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

struct Fitted {
    data: Dataset,
    kernel: KernelSpec,
    model: FittedModel,
    cv: Option<CvOutcome>,
}

fn load_and_fit(cfg: &RunConfig) -> Result<Fitted> {
    let path = cfg.data_path.as_ref().ok_or_else(|| Error::Config("no data file given ([data] path or --data)".into()))?;
    let data = load_csv(path, cfg.task)?;
    let kernel = cfg.kernel.resolve(&data)?;
    let gram = kernel.gram(data.xs())?;
    let opts = FitOptions::default();
    let (lambda, cv) = match cfg.lambda {
        Some(l) => (l, None),
        None => {
            let grid = match cfg.constraint_c {
                Some(c) => constrain_grid(&cfg.grid, cfg.lambda0, c, data.n())?,
                None => normalize_grid(&cfg.grid)?,
            };
            let cv = cv_select_with_gram(&data, &kernel, &cfg.loss, &grid, cfg.folds, cfg.seed, &gram, &opts)?;
            (cv.lambda, Some(cv))
        }
    };
    let model = fit_with_gram(&data, &kernel, &cfg.loss, lambda, gram, &opts, None)?;
    Ok(Fitted { data, kernel, model, cv })
}

fn model_summary(f: &Fitted) -> String {
    let m = &f.model;
    let d = m.diagnostics();
    let mut s = String::new();
    let _ = writeln!(s, "n = {}", f.data.n());
    let _ = writeln!(s, "dim = {}", f.data.dim());
    let _ = writeln!(s, "kernel = {:?}", f.kernel.family);
    let _ = writeln!(s, "loss = {:?}", m.loss());
    let _ = writeln!(s, "lambda = {}", m.lambda());
    let _ = writeln!(s, "objective = {}", d.objective);
    let _ = writeln!(s, "iterations = {}", d.iterations);
    let _ = writeln!(s, "grad_norm = {}", d.grad_norm);
    let _ = writeln!(s, "h_norm_sq = {}", m.h_norm_sq());
    s
}

/// Runs the configured command. Every run also writes `effective.conf`, which
/// reproduces it when loaded again.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let mut w = Writer::new(&cfg.out)?;
    w.write("effective.conf", &serialize_config(cfg))?;
    let summary = match cfg.command {
        Command::Fit => {
            let f = load_and_fit(cfg)?;
            let mut coeffs = String::new();
            for i in 1..=f.data.dim() {
                let _ = write!(coeffs, "x{i},");
            }
            coeffs.push_str("coefficient\n");
            for (i, a) in f.model.coeffs().iter().enumerate() {
                let _ = writeln!(coeffs, "{},{a}", list(f.model.support_point(i)).replace(' ', ","));
            }
            w.write("coefficients.csv", &coeffs)?;
            if let Some(cv) = &f.cv {
                let mut s = String::from("lambda,cv_loss\n");
                for (l, v) in cv.grid.iter().zip(&cv.cv_losses) {
                    let _ = writeln!(s, "{l},{v}");
                }
                w.write("cv.csv", &s)?;
            }
            let s = model_summary(&f);
            w.write("model.txt", &s)?;
            s
        }
        Command::Ci => {
            if cfg.functionals.is_empty() {
                return Err(Error::Config("ci needs at least one [functional] section".into()));
            }
            let f = load_and_fit(cfg)?;
            let engine = CovarianceEngine::for_model(&f.data, &f.model)?;
            let mut summary = model_summary(&f);
            for sec in &cfg.functionals {
                let fun = sec.build(&f.data)?;
                let psi = fun.psi_matrix(&f.model, &f.data)?;
                let rank = rank_test(&psi, None)?;
                let center = fun.psi_value(&f.model)?;
                let cov = engine.sigma_hat(&fun)?;
                let mut g = String::new();
                let m = fun.m();
                let _ = writeln!(g, "{}", (1..=m).map(|j| format!("g{j}")).collect::<Vec<_>>().join(","));
                for i in 0..f.data.n() {
                    let row: Vec<String> = (0..m).map(|j| cov.g_values[(i, j)].to_string()).collect();
                    let _ = writeln!(g, "{}", row.join(","));
                }
                w.write(&format!("g_{}.csv", sec.name), &g)?;

                let mut s = String::new();
                let _ = writeln!(s, "[functional {}]", sec.name);
                let _ = writeln!(s, "m = {m}");
                let _ = writeln!(s, "center = {}", list(&center));
                let sigma: Vec<f64> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| cov.sigma_hat[(i, j)]).collect();
                let _ = writeln!(s, "sigma_hat = {}", list(&sigma));
                let _ = writeln!(s, "n = {}", f.data.n());
                let _ = writeln!(s, "alpha = {}", cfg.alpha);
                let _ = writeln!(s, "psi_rank = {} of {}", rank.numerical_rank, m);
                if !rank.full_rank {
                    let _ = writeln!(s, "# warning: functional derivatives are linearly dependent on the sample");
                }
                match ConfidenceEllipsoid::new(center, cov.sigma_hat.clone(), f.data.n(), cfg.alpha) {
                    Ok(e) => {
                        let _ = writeln!(s, "chi2 = {}", e.chi2);
                        for (j, a) in e.principal_axes()?.iter().enumerate() {
                            let _ = writeln!(s, "axis_{} = {} along {}", j + 1, a.length, list(&a.direction));
                        }
                        if let Ok((lo, hi)) = e.interval() {
                            let _ = writeln!(s, "interval [{lo}, {hi}]");
                        }
                    }
                    Err(e) => {
                        let _ = writeln!(s, "# error: {e}");
                    }
                }
                w.write(&format!("ci_{}.txt", sec.name), &s)?;
                summary.push('\n');
                summary.push_str(&s);
            }
            summary
        }
        Command::Band => {
            let grid = cfg.band_grid.as_ref().ok_or_else(|| Error::Config("band needs a [band] points or range".into()))?;
            let f = load_and_fit(cfg)?;
            let engine = CovarianceEngine::for_model(&f.data, &f.model)?;
            let rows = band_data(&engine, &f.model, &f.data, &grid.points(), cfg.alpha)?;
            w.write("band.csv", &write_band_csv(&rows))?;
            let flagged = rows.iter().filter(|r| r.degenerate).count();
            format!("{}band points = {}\ndegenerate = {flagged}\n", model_summary(&f), rows.len())
        }
        Command::Simulate => {
            let sim = cfg.effective_simulation()?;
            let report = coverage_experiment(&sim)?;
            let text = write_report(&report);
            w.write("report.txt", &text)?;
            w.write("records.csv", &records_csv(&report))?;
            w.write("sigma.csv", &sigma_csv(&report))?;
            text
        }
    };
    Ok(RunOutput { summary, files: w.files })
}
