//! Datasets as CSV: a header `x1,…,xd,y` followed by one numeric row per observation.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { origin: path.display().to_string(), line, message: message.into() }
}

/// Parses CSV text; `origin` only labels error messages.
pub fn parse_csv(text: &str, origin: &Path, task: Task) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, header)) = lines.next() else {
        return Err(parse_err(origin, 1, "empty file, expected a header x1,...,xd,y"));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len().saturating_sub(1);
    let expected: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["y".to_string()]).collect();
    if d == 0 || cols != expected {
        return Err(parse_err(
            origin,
            hline + 1,
            format!("malformed header {header:?}, expected {:?}", expected.join(",")),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (idx, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != d + 1 {
            return Err(parse_err(origin, idx + 1, format!("expected {} cells, found {}", d + 1, cells.len())));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(origin, idx + 1, format!("cell {} ({cell:?}) is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(origin, idx + 1, format!("cell {} is not finite", c + 1)));
            }
            if c < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(parse_err(origin, hline + 1, "no data rows"));
    }
    Dataset::new(xs, d, ys, task)
}

pub fn load_csv(path: &Path, task: Task) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_csv(&text, path, task)
}

pub fn format_csv(data: &Dataset) -> String {
    let d = data.dim();
    let mut s = String::new();
    for a in 1..=d {
        let _ = write!(s, "x{a},");
    }
    s.push_str("y\n");
    for i in 0..data.n() {
        for v in data.x(i) {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{}", data.y(i));
    }
    s
}

pub fn save_csv(path: &Path, data: &Dataset) -> Result<()> {
    std::fs::write(path, format_csv(data)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// `1 / median{‖xᵢ − xⱼ‖² : i < j}`, over the first 5000 points for larger samples.
pub fn median_heuristic_gamma(data: &Dataset) -> Result<f64> {
    const MAX_POINTS: usize = 5000;
    let n = data.n().min(MAX_POINTS);
    if n < 2 {
        return Err(Error::Contract("median heuristic needs at least two points".into()));
    }
    let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d2.push(data.x(i).iter().zip(data.x(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        }
    }
    let k = d2.len();
    let mid = k / 2;
    let (_, &mut upper, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if k % 2 == 1 {
        upper
    } else {
        let lower = d2[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median <= 0.0 {
        return Err(Error::Domain("median pairwise squared distance is zero (too many identical points)".into()));
    }
    Ok(1.0 / median)
}
