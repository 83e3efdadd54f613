//! Text serialization of coverage reports. Floats use the shortest decimal
//! form that parses back to the same value. Nothing run-dependent (timing,
//! worker count) is written, so equal seeds give byte-identical files.

use std::fmt::Write;

use super::{BandRow, CoverageReport};

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

/// `key = value` summary with one `[functional NAME]` section per functional.
pub fn write_report(report: &CoverageReport) -> String {
    let c = &report.config;
    let mut s = String::new();
    let _ = writeln!(s, "# coverage report");
    let _ = writeln!(s, "scenario = {}", c.scenario.name());
    let _ = writeln!(s, "n = {}", c.n);
    let _ = writeln!(s, "replications = {}", c.replications);
    let _ = writeln!(s, "alpha = {}", c.alpha);
    let _ = writeln!(s, "lambda0 = {}", c.lambda0);
    let _ = writeln!(s, "grid = {}", join(&c.grid));
    let _ = writeln!(s, "folds = {}", c.folds);
    let _ = writeln!(s, "gamma = {}", c.gamma);
    let _ = writeln!(s, "sigma = {}", c.sigma);
    let _ = writeln!(s, "seed = {}", c.seed);
    let _ = writeln!(s, "constraint_c = {}", c.constraint_c.map_or_else(|| "off".to_string(), |x| x.to_string()));
    let _ = writeln!(s, "oracle_n = {}", report.oracle_n);
    let _ = writeln!(s, "oracle_margin = {}", c.oracle_margin);

    let mut lambdas: Vec<f64> = report.records.iter().filter_map(|r| r.lambda).collect();
    lambdas.sort_by(f64::total_cmp);
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for l in lambdas {
        match counts.last_mut() {
            Some((v, k)) if *v == l => *k += 1,
            _ => counts.push((l, 1)),
        }
    }
    let counts: Vec<String> = counts.iter().map(|(l, k)| format!("{l}:{k}")).collect();
    let _ = writeln!(s, "selected_lambda_counts = {}", counts.join(" "));

    for f in &report.summaries {
        let _ = writeln!(s);
        let _ = writeln!(s, "[functional {}]", f.name);
        let _ = writeln!(s, "m = {}", f.m);
        let _ = writeln!(s, "target = {}", join(&f.target));
        let _ = writeln!(s, "alternate_target = {}", join(&f.alternate_target));
        let _ = writeln!(s, "oracle_gap = {}", f.oracle_gap);
        let _ = writeln!(s, "oracle_stable = {}", f.oracle_stable);
        if !f.oracle_stable {
            let _ = writeln!(s, "# warning: reference fits disagree by more than oracle_margin; raise oracle_n");
        }
        let _ = writeln!(s, "covered = {}", f.covered);
        let _ = writeln!(s, "failures = {}", f.failures);
        let _ = writeln!(s, "coverage = {}", f.coverage);
        let _ = writeln!(s, "coverage_margin = {}", f.margin);
        let _ = writeln!(s, "mean_length = {}", opt(f.mean_length));
        let _ = writeln!(s, "length_sd = {}", opt(f.length_sd));
    }
    s
}

/// One row per replication and functional.
pub fn records_csv(report: &CoverageReport) -> String {
    let mut s = String::from("replication,functional,lambda,covered,length,center,error\n");
    for r in &report.records {
        for (o, f) in r.outcomes.iter().zip(&report.summaries) {
            let err = o.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.index,
                f.name,
                opt(r.lambda),
                o.covered,
                opt(o.length),
                join(&o.center),
                err
            );
        }
    }
    s
}

/// Entries of every estimated covariance, for spread plots.
pub fn sigma_csv(report: &CoverageReport) -> String {
    let mut s = String::from("replication,functional,row,col,value\n");
    for r in &report.records {
        for (o, f) in r.outcomes.iter().zip(&report.summaries) {
            if o.sigma_hat.len() != f.m * f.m {
                continue;
            }
            for i in 0..f.m {
                for j in 0..f.m {
                    let _ = writeln!(s, "{},{},{},{},{}", r.index, f.name, i, j, o.sigma_hat[i * f.m + j]);
                }
            }
        }
    }
    s
}

/// `x1..xd,center,lo,hi,degenerate`
pub fn write_band_csv(rows: &[BandRow]) -> String {
    let d = rows.first().map_or(1, |r| r.x.len());
    let mut s = String::new();
    for a in 1..=d {
        let _ = write!(s, "x{a},");
    }
    s.push_str("center,lo,hi,degenerate\n");
    for r in rows {
        for v in &r.x {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{},{},{},{}", r.center, r.lo, r.hi, r.degenerate);
    }
    s
}
