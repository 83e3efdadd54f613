//! Choice of λ by k-fold cross-validation over a grid.

use crate::data::Dataset;
use crate::error::{contract, Error, Result};
use crate::kernels::KernelSpec;
use crate::losses::LossSpec;
use crate::numerics::Matrix;
use crate::rng::Stream;
use crate::solver::{fit_with_gram, FitOptions};

/// Grid values inside `[λ₀, λ₀ + c/√(n ln n)]`, with `λ₀` always present.
pub fn constrain_grid(grid: &[f64], lambda0: f64, c: f64, n: usize) -> Result<Vec<f64>> {
    if !(lambda0 > 0.0 && lambda0.is_finite()) || !(c >= 0.0 && c.is_finite()) || n < 2 {
        return Err(contract("constrain_grid needs lambda0 > 0, c >= 0 and n >= 2"));
    }
    let nf = n as f64;
    let upper = lambda0 + c / (nf * nf.ln()).sqrt();
    let mut out: Vec<f64> = grid.iter().copied().filter(|&l| l >= lambda0 && l <= upper).collect();
    out.push(lambda0);
    Ok(normalize_grid(&out)?)
}

/// Sorted ascending, exact duplicates removed, every entry positive and finite.
pub fn normalize_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(contract("lambda grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(contract(format!("lambda grid entries must be > 0, got {bad}")));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Held-out index sets: a seeded shuffle of `0..n` cut into `folds` contiguous
/// pieces whose sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(contract(format!("need 2 <= folds <= n, got folds = {folds}, n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    Stream::new(seed, 0).shuffle(&mut perm);
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub lambda: f64,
    /// The normalized grid the losses refer to.
    pub grid: Vec<f64>,
    /// Mean held-out loss, pooled over all points, per grid value.
    pub cv_losses: Vec<f64>,
}

pub fn cv_select(
    data: &Dataset,
    kernel: &KernelSpec,
    loss: &LossSpec,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvOutcome> {
    let gram = kernel.gram(data.xs())?;
    cv_select_with_gram(data, kernel, loss, grid, folds, seed, &gram, &FitOptions::default())
}

/// As [`cv_select`] with the full-sample Gram matrix supplied; fold fits use its
/// sub-blocks. Within a fold the grid is swept upward, warm-starting each fit
/// from the previous λ's coefficients.
#[allow(clippy::too_many_arguments)]
pub fn cv_select_with_gram(
    data: &Dataset,
    kernel: &KernelSpec,
    loss: &LossSpec,
    grid: &[f64],
    folds: usize,
    seed: u64,
    gram: &Matrix,
    opts: &FitOptions,
) -> Result<CvOutcome> {
    let grid = normalize_grid(grid)?;
    let n = data.n();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(contract("Gram matrix size differs from n"));
    }
    if grid.len() == 1 {
        return Ok(CvOutcome { lambda: grid[0], grid, cv_losses: vec![f64::NAN] });
    }
    let parts = fold_assignment(n, folds, seed)?;
    let mut totals = vec![0.0; grid.len()];
    let mut held = vec![false; n];
    for (fi, test) in parts.iter().enumerate() {
        held.iter_mut().for_each(|h| *h = false);
        test.iter().for_each(|&i| held[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
        let train_data = data.subset(&train);
        let g_train = Matrix::from_fn(train.len(), train.len(), |i, j| gram[(train[i], train[j])]);
        let mut warm: Option<Vec<f64>> = None;
        for (gi, &lambda) in grid.iter().enumerate() {
            let fold_err = |e: Error| Error::Fold { fold: fi, lambda, source: Box::new(e) };
            let model = match fit_with_gram(&train_data, kernel, loss, lambda, g_train.clone(), opts, warm.as_deref()) {
                Ok(m) => m,
                Err(_) if warm.is_some() => {
                    fit_with_gram(&train_data, kernel, loss, lambda, g_train.clone(), opts, None).map_err(fold_err)?
                }
                Err(e) => return Err(fold_err(e)),
            };
            let a = model.coeffs();
            for &t in test {
                let f: f64 = train.iter().zip(a).map(|(&j, c)| c * gram[(t, j)]).sum();
                totals[gi] += loss.value(data.y(t), f);
            }
            warm = Some(a.to_vec());
        }
    }
    let cv_losses: Vec<f64> = totals.iter().map(|t| t / n as f64).collect();
    // strict improvement only, so ties stay with the smaller λ
    let mut best = 0;
    for i in 1..grid.len() {
        if cv_losses[i] < cv_losses[best] {
            best = i;
        }
    }
    Ok(CvOutcome { lambda: grid[best], grid, cv_losses })
}
