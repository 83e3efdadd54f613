use faer::MatRef;

use super::decomp::Matrix;
use crate::error::{contract, Result};

/// Rank-revealing Cholesky factorization `G[:, P] = F · F[P, :]ᵀ` with diagonal pivoting.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// Pivot indices in selection order.
    pub pivots: Vec<usize>,
    pub rank: usize,
    /// `n × rank` factor; row `pivots[k]` has zeros after column `k`.
    pub factor: Matrix,
}

impl PivotedCholesky {
    /// The `rank × rank` lower-triangular block `F[pivots, :]`.
    pub fn pivot_block(&self) -> Matrix {
        Matrix::from_fn(self.rank, self.rank, |i, j| self.factor[(self.pivots[i], j)])
    }
}

/// Pivoted Cholesky of a dense symmetric PSD matrix.
///
/// Stops once every remaining Schur-complement diagonal is `<= tol` (absolute).
pub fn pivoted_cholesky(g: MatRef<'_, f64>, tol: f64) -> Result<PivotedCholesky> {
    let n = g.nrows();
    if n == 0 || g.ncols() != n {
        return Err(contract("pivoted_cholesky: matrix must be square and non-empty"));
    }
    let diag: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
    pivoted_cholesky_lazy(n, diag, |p| (0..n).map(|i| g[(i, p)]).collect(), tol, n)
}

/// Pivoted Cholesky driven by a column oracle, so the full matrix never has to exist.
///
/// `column(p)` must return column `p` of the (implicit) `n × n` matrix. Cost is
/// `O(n · rank²)` plus `rank` oracle calls.
pub fn pivoted_cholesky_lazy<F>(
    n: usize,
    mut diag: Vec<f64>,
    mut column: F,
    tol: f64,
    max_rank: usize,
) -> Result<PivotedCholesky>
where
    F: FnMut(usize) -> Vec<f64>,
{
    if diag.len() != n {
        return Err(contract("pivoted_cholesky: diagonal length mismatch"));
    }
    if !(tol >= 0.0) {
        return Err(contract("pivoted_cholesky: tol must be >= 0"));
    }
    if let Some((i, &d)) = diag.iter().enumerate().find(|(_, &d)| d < -tol || !d.is_finite()) {
        return Err(contract(format!(
            "pivoted_cholesky: diagonal entry {i} is {d}, matrix is not PSD"
        )));
    }
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut taken = vec![false; n];
    let max_rank = max_rank.min(n);

    while pivots.len() < max_rank {
        let mut best = None;
        for i in 0..n {
            if !taken[i] && best.map_or(true, |b: usize| diag[i] > diag[b]) {
                best = Some(i);
            }
        }
        let Some(p) = best else { break };
        if diag[p] <= tol {
            break;
        }
        let pivot = diag[p].sqrt();
        let g = column(p);
        let mut col = vec![0.0; n];
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let mut v = g[i];
            for c in &cols {
                v -= c[i] * c[p];
            }
            col[i] = if i == p { pivot } else { v / pivot };
        }
        for i in 0..n {
            if !taken[i] {
                diag[i] -= col[i] * col[i];
            }
        }
        diag[p] = 0.0;
        taken[p] = true;
        pivots.push(p);
        cols.push(col);
    }

    let rank = pivots.len();
    let factor = Matrix::from_fn(n, rank, |i, j| cols[j][i]);
    Ok(PivotedCholesky { pivots, rank, factor })
}
