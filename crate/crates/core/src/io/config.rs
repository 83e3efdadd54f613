//! Run configuration in a sectioned `key = value` text format:
//!
//! ```text
//! # comment
//! [kernel]
//! family = rbf
//! gamma = median
//!
//! [functional at_three]
//! kind = pointwise
//! points = 3
//! ```
//!
//! Unknown sections and keys are errors. Numeric lists accept commas,
//! semicolons or whitespace as separators; point lists are flat and are split
//! into points by the data dimension.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::functionals::{Functional, FunctionalKind, Measure, Region, Representer, DEFAULT_GRID_NODES};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::losses::LossSpec;
use crate::simulation::{NamedFunctional, Scenario, SimConfig, STUDY_GRID};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Ci,
    Simulate,
    Band,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Ci => "ci",
            Command::Simulate => "simulate",
            Command::Band => "band",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fit" => Some(Command::Fit),
            "ci" => Some(Command::Ci),
            "simulate" => Some(Command::Simulate),
            "band" => Some(Command::Band),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Fixed(f64),
    /// Inverse median pairwise squared distance of the training covariates.
    Median,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    Rbf { gamma: Gamma },
    Exponential { gamma: f64 },
    Polynomial { degree: u32, offset: f64, scale: f64 },
    Linear,
}

impl KernelChoice {
    pub fn resolve(&self, data: &Dataset) -> Result<KernelSpec> {
        let family = match *self {
            KernelChoice::Rbf { gamma: Gamma::Fixed(gamma) } => KernelFamily::GaussianRbf { gamma },
            KernelChoice::Rbf { gamma: Gamma::Median } => {
                KernelFamily::GaussianRbf { gamma: super::median_heuristic_gamma(data)? }
            }
            KernelChoice::Exponential { gamma } => KernelFamily::Exponential { gamma },
            KernelChoice::Polynomial { degree, offset, scale } => KernelFamily::Polynomial { degree, offset, scale },
            KernelChoice::Linear => KernelFamily::Linear,
        };
        KernelSpec::new(family, data.dim())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureChoice {
    /// Empirical measure of the training covariates.
    Empirical,
    Lebesgue { nodes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalSpec {
    Pointwise { points: Vec<f64> },
    InnerProducts { hs: Vec<(Vec<f64>, Vec<f64>)> },
    Gradient { x0: Vec<f64> },
    Integral { lower: Vec<f64>, upper: Vec<f64>, measure: MeasureChoice },
    SquaredHNorm,
    SquaredL2Norm { lower: Vec<f64>, upper: Vec<f64>, nodes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSection {
    pub name: String,
    pub spec: FunctionalSpec,
    pub domain: Option<(Vec<f64>, Vec<f64>)>,
}

impl FunctionalSection {
    /// Kind with data-dependent parts (the empirical measure) filled in from `covariates`.
    pub fn kind(&self, covariates: Option<&[f64]>) -> Result<FunctionalKind> {
        Ok(match &self.spec {
            FunctionalSpec::Pointwise { points } => FunctionalKind::Pointwise { points: points.clone() },
            FunctionalSpec::InnerProducts { hs } => FunctionalKind::InnerProducts {
                hs: hs.iter().map(|(p, c)| Representer { points: p.clone(), coeffs: c.clone() }).collect(),
            },
            FunctionalSpec::Gradient { x0 } => FunctionalKind::GradientAt { x0: x0.clone() },
            FunctionalSpec::Integral { lower, upper, measure } => FunctionalKind::IntegralOver {
                region: Region::new(lower.clone(), upper.clone())?,
                measure: match measure {
                    MeasureChoice::Empirical => Measure::Empirical {
                        sample: covariates
                            .ok_or_else(|| {
                                Error::Config(format!(
                                    "functional {}: the empirical measure needs a dataset; use measure = lebesgue",
                                    self.name
                                ))
                            })?
                            .to_vec(),
                    },
                    MeasureChoice::Lebesgue { nodes } => Measure::LebesgueGrid { nodes_per_axis: *nodes },
                },
            },
            FunctionalSpec::SquaredHNorm => FunctionalKind::SquaredHNorm,
            FunctionalSpec::SquaredL2Norm { lower, upper, nodes } => FunctionalKind::SquaredL2Norm {
                region: Region::new(lower.clone(), upper.clone())?,
                nodes_per_axis: *nodes,
            },
        })
    }

    pub fn build(&self, data: &Dataset) -> Result<Functional> {
        let f = Functional::new(self.kind(Some(data.xs()))?, data.dim())?;
        match &self.domain {
            Some((lo, hi)) => f.with_domain(Region::new(lo.clone(), hi.clone())?),
            None => Ok(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandGrid {
    Points(Vec<f64>),
    /// `count` equally spaced points from `start` to `stop` inclusive (one-dimensional data).
    Range { start: f64, stop: f64, count: usize },
}

impl BandGrid {
    pub fn points(&self) -> Vec<f64> {
        match *self {
            BandGrid::Points(ref p) => p.clone(),
            BandGrid::Range { start, stop, count } => {
                if count == 1 {
                    return vec![start];
                }
                (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub data_path: Option<PathBuf>,
    pub task: Task,
    pub kernel: KernelChoice,
    pub loss: LossSpec,
    /// Fixed λ; cross-validation over `grid` when absent.
    pub lambda: Option<f64>,
    pub grid: Vec<f64>,
    pub folds: usize,
    pub lambda0: f64,
    pub constraint_c: Option<f64>,
    pub functionals: Vec<FunctionalSection>,
    pub alpha: f64,
    pub band_grid: Option<BandGrid>,
    pub simulation: SimConfig,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            seed: 1,
            workers: 1,
            out: PathBuf::from("out"),
            data_path: None,
            task: Task::Regression,
            kernel: KernelChoice::Rbf { gamma: Gamma::Median },
            loss: LossSpec::logistic_regression(0.5).expect("valid default"),
            lambda: None,
            grid: STUDY_GRID.to_vec(),
            folds: 5,
            lambda0: 1e-5,
            constraint_c: None,
            functionals: Vec::new(),
            alpha: 0.05,
            band_grid: None,
            simulation: SimConfig::pointwise_study(500),
        }
    }

    /// Simulation settings with the run-level seed, workers and any
    /// `[functional]` sections applied.
    pub fn effective_simulation(&self) -> Result<SimConfig> {
        let mut sim = self.simulation.clone();
        sim.seed = self.seed;
        sim.workers = self.workers;
        if !self.functionals.is_empty() {
            sim.functionals = self
                .functionals
                .iter()
                .map(|f| Ok(NamedFunctional { name: f.name.clone(), kind: f.kind(None)? }))
                .collect::<Result<_>>()?;
        }
        Ok(sim)
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    label: Option<String>,
    line: usize,
    entries: Vec<Entry>,
}

fn split_sections(text: &str, origin: &str) -> Result<Vec<Section>> {
    let perr = |line: usize, message: String| Error::Parse { origin: origin.to_string(), line, message };
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        if let Some(inner) = t.strip_prefix('[') {
            let inner = inner.strip_suffix(']').ok_or_else(|| perr(line, format!("unterminated section header {t:?}")))?;
            let mut parts = inner.split_whitespace();
            let name = parts.next().ok_or_else(|| perr(line, "empty section header".into()))?.to_string();
            let label = parts.next().map(str::to_string);
            if parts.next().is_some() {
                return Err(perr(line, format!("section header {t:?} has too many words")));
            }
            sections.push(Section { name, label, line, entries: Vec::new() });
            continue;
        }
        let (k, v) = t.split_once('=').ok_or_else(|| perr(line, format!("expected key = value, found {t:?}")))?;
        let sec = sections.last_mut().ok_or_else(|| perr(line, "key outside of any section".into()))?;
        let key = k.trim().to_string();
        if sec.entries.iter().any(|e| e.key == key) {
            return Err(perr(line, format!("duplicate key {key:?}")));
        }
        sec.entries.push(Entry { key, value: v.trim().to_string(), line });
    }
    Ok(sections)
}

struct Reader<'a> {
    origin: &'a str,
    section: String,
    entries: Vec<Entry>,
}

impl Reader<'_> {
    fn err(&self, line: usize, message: String) -> Error {
        Error::Parse { origin: self.origin.to_string(), line, message: format!("[{}] {message}", self.section) }
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let pos = self.entries.iter().position(|e| e.key == key)?;
        let e = self.entries.remove(pos);
        Some((e.value, e.line))
    }

    fn take_with<T>(&mut self, key: &str, parse: impl FnOnce(&str) -> Option<T>, what: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => parse(&v).map(Some).ok_or_else(|| self.err(line, format!("{key} = {v:?} is not {what}"))),
        }
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take_with(key, |v| v.parse::<f64>().ok().filter(|x| x.is_finite()), "a finite number")
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.take_with(key, |v| v.parse().ok(), "a non-negative integer")
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.take_with(key, |v| v.parse().ok(), "a non-negative integer")
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.take_with(key, parse_list, "a list of finite numbers")
    }

    fn off_or_f64(&mut self, key: &str) -> Result<Option<Option<f64>>> {
        self.take_with(
            key,
            |v| if v == "off" || v == "none" { Some(None) } else { v.parse::<f64>().ok().filter(|x| x.is_finite()).map(Some) },
            "a number or off",
        )
    }

    fn required<T>(&self, v: Option<T>, key: &str, line: usize) -> Result<T> {
        v.ok_or_else(|| self.err(line, format!("missing key {key}")))
    }

    fn finish(self) -> Result<()> {
        if let Some(e) = self.entries.first() {
            return Err(self.err(e.line, format!("unknown key {:?}", e.key)));
        }
        Ok(())
    }
}

fn parse_list(v: &str) -> Option<Vec<f64>> {
    let out: Option<Vec<f64>> = v
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect();
    out.filter(|l| !l.is_empty())
}

fn parse_loss(kind: &str, sigma: Option<f64>) -> Option<LossSpec> {
    Some(match kind {
        "ls_regression" => LossSpec::LsRegression,
        "logistic_regression" => LossSpec::logistic_regression(sigma.unwrap_or(0.5)).ok()?,
        "ls_classification" => LossSpec::LsClassification,
        "logistic_classification" => LossSpec::LogisticClassification,
        "logistic_classification_shifted" => LossSpec::LogisticClassificationShifted,
        _ => return None,
    })
}

fn loss_name(loss: &LossSpec) -> &'static str {
    match loss {
        LossSpec::LsRegression => "ls_regression",
        LossSpec::LogisticRegression { .. } => "logistic_regression",
        LossSpec::LsClassification => "ls_classification",
        LossSpec::LogisticClassification => "logistic_classification",
        LossSpec::LogisticClassificationShifted => "logistic_classification_shifted",
    }
}

/// Parses a configuration. `command` (from the command line) overrides `[run] command`.
pub fn parse_config(text: &str, origin: &str, command: Option<Command>) -> Result<RunConfig> {
    let sections = split_sections(text, origin)?;
    let run_cmd = {
        let mut found = None;
        for s in sections.iter().filter(|s| s.name == "run") {
            if let Some(e) = s.entries.iter().find(|e| e.key == "command") {
                found = Some(Command::parse(&e.value).ok_or_else(|| Error::Parse {
                    origin: origin.into(),
                    line: e.line,
                    message: format!("[run] unknown command {:?}", e.value),
                })?);
            }
        }
        found
    };
    let cmd = command.or(run_cmd).ok_or_else(|| Error::Config("no command given (fit, ci, simulate, band)".into()))?;
    let mut cfg = RunConfig::new(cmd);
    let mut seen: Vec<String> = Vec::new();
    // presets set simulation defaults before any explicit key is applied
    let mut ordered: Vec<Section> = sections;
    ordered.sort_by_key(|s| s.name != "simulate");

    for sec in ordered {
        let tag = match &sec.label {
            Some(l) => format!("{} {l}", sec.name),
            None => sec.name.clone(),
        };
        if seen.contains(&tag) {
            return Err(Error::Parse { origin: origin.into(), line: sec.line, message: format!("duplicate section [{tag}]") });
        }
        seen.push(tag.clone());
        if sec.label.is_some() && sec.name != "functional" {
            return Err(Error::Parse { origin: origin.into(), line: sec.line, message: format!("section [{}] takes no name", sec.name) });
        }
        let line = sec.line;
        let mut r = Reader { origin, section: tag, entries: sec.entries };
        match sec.name.as_str() {
            "run" => {
                r.take("command");
                if let Some(s) = r.u64("seed")? {
                    cfg.seed = s;
                }
                if let Some(w) = r.usize("workers")? {
                    cfg.workers = w;
                }
                if let Some((o, _)) = r.take("out") {
                    cfg.out = PathBuf::from(o);
                }
            }
            "data" => {
                if let Some((p, _)) = r.take("path") {
                    cfg.data_path = Some(PathBuf::from(p));
                }
                if let Some(t) = r.take_with(
                    "task",
                    |v| match v {
                        "regression" => Some(Task::Regression),
                        "classification" => Some(Task::Classification),
                        _ => None,
                    },
                    "regression or classification",
                )? {
                    cfg.task = t;
                }
            }
            "kernel" => {
                let (family, fline) = r.take("family").unwrap_or(("rbf".into(), line));
                cfg.kernel = match family.as_str() {
                    "rbf" => {
                        let gamma = r.take_with(
                            "gamma",
                            |v| if v == "median" { Some(Gamma::Median) } else { v.parse().ok().map(Gamma::Fixed) },
                            "a number or median",
                        )?;
                        KernelChoice::Rbf { gamma: gamma.unwrap_or(Gamma::Median) }
                    }
                    "exponential" => {
                        let g = r.f64("gamma")?;
                        KernelChoice::Exponential { gamma: r.required(g, "gamma", line)? }
                    }
                    "polynomial" => {
                        let degree = r.take_with("degree", |v| v.parse().ok(), "a positive integer")?;
                        KernelChoice::Polynomial {
                            degree: r.required(degree, "degree", line)?,
                            offset: r.f64("offset")?.unwrap_or(1.0),
                            scale: r.f64("scale")?.unwrap_or(1.0),
                        }
                    }
                    "linear" => KernelChoice::Linear,
                    other => return Err(r.err(fline, format!("unknown kernel family {other:?}"))),
                };
            }
            "loss" => {
                let sigma = r.f64("sigma")?;
                let (kind, kline) = r.take("kind").unwrap_or(("logistic_regression".into(), line));
                cfg.loss = parse_loss(&kind, sigma).ok_or_else(|| r.err(kline, format!("unknown loss {kind:?} or invalid sigma")))?;
                if sigma.is_some() && !matches!(cfg.loss, LossSpec::LogisticRegression { .. }) {
                    return Err(r.err(kline, "sigma only applies to logistic_regression".into()));
                }
            }
            "lambda" => {
                if let Some(v) = r.off_or_f64("value")? {
                    cfg.lambda = v;
                }
                if let Some(g) = r.list("grid")? {
                    cfg.grid = g;
                }
                if let Some(f) = r.usize("folds")? {
                    cfg.folds = f;
                }
                if let Some(l) = r.f64("lambda0")? {
                    cfg.lambda0 = l;
                }
                if let Some(c) = r.off_or_f64("constraint_c")? {
                    cfg.constraint_c = c;
                }
            }
            "ci" => {
                if let Some(a) = r.f64("alpha")? {
                    cfg.alpha = a;
                }
            }
            "band" => {
                if let Some(p) = r.list("points")? {
                    cfg.band_grid = Some(BandGrid::Points(p));
                }
                if let Some((v, l)) = r.take("range") {
                    let vals = parse_list(&v).filter(|x| x.len() == 3 && x[2] >= 1.0 && x[2].fract() == 0.0);
                    let Some(vals) = vals else {
                        return Err(r.err(l, format!("range = {v:?} must be start, stop, count")));
                    };
                    if cfg.band_grid.is_some() {
                        return Err(r.err(l, "give either points or range".into()));
                    }
                    cfg.band_grid = Some(BandGrid::Range { start: vals[0], stop: vals[1], count: vals[2] as usize });
                }
                if let Some(a) = r.f64("alpha")? {
                    cfg.alpha = a;
                }
            }
            "functional" => {
                let name = sec.label.clone().unwrap_or_else(|| format!("functional_{}", cfg.functionals.len() + 1));
                cfg.functionals.push(read_functional(&mut r, name, line)?);
            }
            "simulate" => read_simulation(&mut r, &mut cfg.simulation)?,
            other => {
                return Err(Error::Parse { origin: origin.into(), line, message: format!("unknown section [{other}]") });
            }
        }
        r.finish()?;
    }
    // simulation presets carry their own functionals; make them explicit so the
    // effective config lists every functional that will be evaluated
    if cfg.functionals.is_empty() && cfg.command == Command::Simulate {
        cfg.functionals = cfg.simulation.functionals.iter().filter_map(section_from_named).collect();
    }
    if !cfg.functionals.is_empty() {
        if let Ok(sim) = cfg.effective_simulation() {
            cfg.simulation.functionals = sim.functionals;
        }
    }
    Ok(cfg)
}

fn section_from_named(f: &NamedFunctional) -> Option<FunctionalSection> {
    let spec = match &f.kind {
        FunctionalKind::Pointwise { points } => FunctionalSpec::Pointwise { points: points.clone() },
        FunctionalKind::InnerProducts { hs } => FunctionalSpec::InnerProducts {
            hs: hs.iter().map(|h| (h.points.clone(), h.coeffs.clone())).collect(),
        },
        FunctionalKind::GradientAt { x0 } => FunctionalSpec::Gradient { x0: x0.clone() },
        FunctionalKind::IntegralOver { region, measure: Measure::LebesgueGrid { nodes_per_axis } } => {
            FunctionalSpec::Integral {
                lower: region.lower.clone(),
                upper: region.upper.clone(),
                measure: MeasureChoice::Lebesgue { nodes: *nodes_per_axis },
            }
        }
        FunctionalKind::IntegralOver { .. } => return None,
        FunctionalKind::SquaredHNorm => FunctionalSpec::SquaredHNorm,
        FunctionalKind::SquaredL2Norm { region, nodes_per_axis } => FunctionalSpec::SquaredL2Norm {
            lower: region.lower.clone(),
            upper: region.upper.clone(),
            nodes: *nodes_per_axis,
        },
    };
    Some(FunctionalSection { name: f.name.clone(), spec, domain: None })
}

fn read_functional(r: &mut Reader, name: String, line: usize) -> Result<FunctionalSection> {
    let (kind, kline) = r.take("kind").ok_or_else(|| r.err(line, "missing key kind".into()))?;
    let bounds = |r: &mut Reader| -> Result<(Vec<f64>, Vec<f64>)> {
        let lo = r.list("lower")?;
        let hi = r.list("upper")?;
        Ok((r.required(lo, "lower", line)?, r.required(hi, "upper", line)?))
    };
    let spec = match kind.as_str() {
        "pointwise" => {
            let p = r.list("points")?;
            FunctionalSpec::Pointwise { points: r.required(p, "points", line)? }
        }
        "inner_products" => {
            let mut hs = Vec::new();
            for k in 1.. {
                let pts = r.list(&format!("h{k}_points"))?;
                let cs = r.list(&format!("h{k}_coeffs"))?;
                match (pts, cs) {
                    (Some(p), Some(c)) => hs.push((p, c)),
                    (None, None) => break,
                    _ => return Err(r.err(line, format!("h{k}_points and h{k}_coeffs must be given together"))),
                }
            }
            if hs.is_empty() {
                return Err(r.err(line, "inner_products needs h1_points and h1_coeffs".into()));
            }
            FunctionalSpec::InnerProducts { hs }
        }
        "gradient" => {
            let x0 = r.list("x0")?;
            FunctionalSpec::Gradient { x0: r.required(x0, "x0", line)? }
        }
        "integral" => {
            let (lower, upper) = bounds(r)?;
            let m = r.take("measure");
            let nodes = r.usize("nodes")?;
            let measure = match m.as_ref().map(|(v, l)| (v.as_str(), *l)) {
                None | Some(("empirical", _)) => {
                    if nodes.is_some() {
                        return Err(r.err(line, "nodes only applies to measure = lebesgue".into()));
                    }
                    MeasureChoice::Empirical
                }
                Some(("lebesgue", _)) => MeasureChoice::Lebesgue { nodes: nodes.unwrap_or(DEFAULT_GRID_NODES) },
                Some((other, l)) => return Err(r.err(l, format!("unknown measure {other:?}"))),
            };
            FunctionalSpec::Integral { lower, upper, measure }
        }
        "squared_h_norm" => FunctionalSpec::SquaredHNorm,
        "squared_l2_norm" => {
            let (lower, upper) = bounds(r)?;
            FunctionalSpec::SquaredL2Norm { lower, upper, nodes: r.usize("nodes")?.unwrap_or(DEFAULT_GRID_NODES) }
        }
        other => return Err(r.err(kline, format!("unknown functional kind {other:?}"))),
    };
    let dl = r.list("domain_lower")?;
    let du = r.list("domain_upper")?;
    let domain = match (dl, du) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(r.err(line, "domain_lower and domain_upper must be given together".into())),
    };
    Ok(FunctionalSection { name, spec, domain })
}

fn read_simulation(r: &mut Reader, sim: &mut SimConfig) -> Result<()> {
    if let Some((p, l)) = r.take("preset") {
        *sim = match p.as_str() {
            "pointwise" => SimConfig::pointwise_study(sim.n),
            "gradient" => SimConfig::gradient_study(sim.n),
            "bivariate_gradient" => SimConfig::bivariate_gradient_study(sim.n),
            other => return Err(r.err(l, format!("unknown preset {other:?}"))),
        };
    }
    if let Some(s) = r.take_with("scenario", Scenario::parse, "univariate or bivariate")? {
        sim.scenario = s;
    }
    if let Some(v) = r.usize("n")? {
        sim.n = v;
    }
    if let Some(v) = r.usize("replications")? {
        sim.replications = v;
    }
    if let Some(v) = r.f64("alpha")? {
        sim.alpha = v;
    }
    if let Some(v) = r.f64("lambda0")? {
        sim.lambda0 = v;
    }
    if let Some(v) = r.list("grid")? {
        sim.grid = v;
    }
    if let Some(v) = r.usize("folds")? {
        sim.folds = v;
    }
    if let Some(v) = r.f64("gamma")? {
        sim.gamma = v;
    }
    if let Some(v) = r.f64("sigma")? {
        sim.sigma = v;
    }
    if let Some(v) = r.off_or_f64("constraint_c")? {
        sim.constraint_c = v;
    }
    if let Some(v) = r.take_with(
        "oracle_n",
        |v| if v == "auto" { Some(None) } else { v.parse().ok().map(Some) },
        "an integer or auto",
    )? {
        sim.oracle_n = v;
    }
    if let Some(v) = r.f64("oracle_margin")? {
        sim.oracle_margin = v;
    }
    Ok(())
}

pub fn load_config(path: &Path, command: Option<Command>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, &path.display().to_string(), command)
}

/// Applies `section.key=value` overrides by appending them to the source text.
/// Named functional sections are addressed as `functional:NAME.key`.
pub fn apply_overrides(text: &str, overrides: &[String]) -> Result<String> {
    let mut sections = split_sections(text, "<config>")?;
    for o in overrides {
        let (path, value) = o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not section.key=value")))?;
        let (sec, key) = path.trim().split_once('.').ok_or_else(|| Error::Config(format!("override {o:?} is not section.key=value")))?;
        let (name, label) = match sec.split_once(':') {
            Some((n, l)) => (n.to_string(), Some(l.to_string())),
            None => (sec.to_string(), None),
        };
        let idx = match sections.iter().position(|s| s.name == name && s.label == label) {
            Some(i) => i,
            None => {
                sections.push(Section { name, label, line: 0, entries: Vec::new() });
                sections.len() - 1
            }
        };
        let s = &mut sections[idx];
        let key = key.trim().to_string();
        s.entries.retain(|e| e.key != key);
        s.entries.push(Entry { key, value: value.trim().to_string(), line: 0 });
    }
    let mut out = String::new();
    for s in &sections {
        match &s.label {
            Some(l) => {
                let _ = writeln!(out, "[{} {l}]", s.name);
            }
            None => {
                let _ = writeln!(out, "[{}]", s.name);
            }
        }
        for e in &s.entries {
            let _ = writeln!(out, "{} = {}", e.key, e.value);
        }
    }
    Ok(out)
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "off".into(), |x| x.to_string())
}

/// Serializes every setting explicitly, so reloading reproduces the run.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[run]\ncommand = {}\nseed = {}\nworkers = {}\nout = {}", cfg.command.name(), cfg.seed, cfg.workers, cfg.out.display());
    let _ = writeln!(s, "\n[data]");
    if let Some(p) = &cfg.data_path {
        let _ = writeln!(s, "path = {}", p.display());
    }
    let _ = writeln!(s, "task = {}", if cfg.task == Task::Regression { "regression" } else { "classification" });
    let _ = writeln!(s, "\n[kernel]");
    match &cfg.kernel {
        KernelChoice::Rbf { gamma } => {
            let g = match gamma {
                Gamma::Fixed(g) => g.to_string(),
                Gamma::Median => "median".into(),
            };
            let _ = writeln!(s, "family = rbf\ngamma = {g}");
        }
        KernelChoice::Exponential { gamma } => {
            let _ = writeln!(s, "family = exponential\ngamma = {gamma}");
        }
        KernelChoice::Polynomial { degree, offset, scale } => {
            let _ = writeln!(s, "family = polynomial\ndegree = {degree}\noffset = {offset}\nscale = {scale}");
        }
        KernelChoice::Linear => {
            let _ = writeln!(s, "family = linear");
        }
    }
    let _ = writeln!(s, "\n[loss]\nkind = {}", loss_name(&cfg.loss));
    if let LossSpec::LogisticRegression { sigma } = cfg.loss {
        let _ = writeln!(s, "sigma = {sigma}");
    }
    let _ = writeln!(
        s,
        "\n[lambda]\nvalue = {}\ngrid = {}\nfolds = {}\nlambda0 = {}\nconstraint_c = {}",
        opt(cfg.lambda),
        list(&cfg.grid),
        cfg.folds,
        cfg.lambda0,
        opt(cfg.constraint_c)
    );
    let _ = writeln!(s, "\n[ci]\nalpha = {}", cfg.alpha);
    if let Some(b) = &cfg.band_grid {
        let _ = writeln!(s, "\n[band]");
        match b {
            BandGrid::Points(p) => {
                let _ = writeln!(s, "points = {}", list(p));
            }
            BandGrid::Range { start, stop, count } => {
                let _ = writeln!(s, "range = {start}, {stop}, {count}");
            }
        }
    }
    for f in &cfg.functionals {
        let _ = writeln!(s, "\n[functional {}]", f.name);
        match &f.spec {
            FunctionalSpec::Pointwise { points } => {
                let _ = writeln!(s, "kind = pointwise\npoints = {}", list(points));
            }
            FunctionalSpec::InnerProducts { hs } => {
                let _ = writeln!(s, "kind = inner_products");
                for (k, (p, c)) in hs.iter().enumerate() {
                    let _ = writeln!(s, "h{0}_points = {1}\nh{0}_coeffs = {2}", k + 1, list(p), list(c));
                }
            }
            FunctionalSpec::Gradient { x0 } => {
                let _ = writeln!(s, "kind = gradient\nx0 = {}", list(x0));
            }
            FunctionalSpec::Integral { lower, upper, measure } => {
                let _ = writeln!(s, "kind = integral\nlower = {}\nupper = {}", list(lower), list(upper));
                match measure {
                    MeasureChoice::Empirical => {
                        let _ = writeln!(s, "measure = empirical");
                    }
                    MeasureChoice::Lebesgue { nodes } => {
                        let _ = writeln!(s, "measure = lebesgue\nnodes = {nodes}");
                    }
                }
            }
            FunctionalSpec::SquaredHNorm => {
                let _ = writeln!(s, "kind = squared_h_norm");
            }
            FunctionalSpec::SquaredL2Norm { lower, upper, nodes } => {
                let _ = writeln!(s, "kind = squared_l2_norm\nlower = {}\nupper = {}\nnodes = {nodes}", list(lower), list(upper));
            }
        }
        if let Some((lo, hi)) = &f.domain {
            let _ = writeln!(s, "domain_lower = {}\ndomain_upper = {}", list(lo), list(hi));
        }
    }
    let sim = &cfg.simulation;
    let _ = writeln!(
        s,
        "\n[simulate]\nscenario = {}\nn = {}\nreplications = {}\nalpha = {}\nlambda0 = {}\ngrid = {}\nfolds = {}\ngamma = {}\nsigma = {}\nconstraint_c = {}\noracle_n = {}\noracle_margin = {}",
        sim.scenario.name(),
        sim.n,
        sim.replications,
        sim.alpha,
        sim.lambda0,
        list(&sim.grid),
        sim.folds,
        sim.gamma,
        sim.sigma,
        opt(sim.constraint_c),
        sim.oracle_n.map_or_else(|| "auto".into(), |v| v.to_string()),
        sim.oracle_margin
    );
    s
}
