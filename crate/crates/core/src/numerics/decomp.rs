use faer::{Mat, MatRef, Side};

use crate::error::{contract, Error, Result};

/// Dense row/column matrix used throughout the crate.
pub type Matrix = Mat<f64>;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the unit eigenvector for `eigenvalues[j]`.
    pub eigenvectors: Matrix,
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}

fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s = s.max(m[(i, j)].abs());
        }
    }
    s
}

fn check_finite(m: MatRef<'_, f64>, routine: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(contract(format!("{routine}: empty matrix")));
    }
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(contract(format!("{routine}: non-finite entry at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Relative asymmetry `max |M - Mᵀ| / max(1, max |M|)`.
pub fn asymmetry(m: MatRef<'_, f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / max_abs(m).max(1.0)
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Singular values below `rtol * σ_max` count as zero. `None` selects
/// `ε · max(rows, cols)`.
fn cutoff(rtol: Option<f64>, rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rtol.unwrap_or(f64::EPSILON * rows.max(cols) as f64) * sigma_max
}

/// Moore–Penrose pseudoinverse via a full SVD.
///
/// `rtol` is relative to the largest singular value; `None` uses the standard
/// numerical-rank threshold `ε · max(rows, cols) · σ_max`.
pub fn pinv(m: MatRef<'_, f64>, rtol: Option<f64>) -> Result<Matrix> {
    check_finite(m, "pinv")?;
    if let Some(t) = rtol {
        if !(t >= 0.0) {
            return Err(contract("pinv: rtol must be >= 0"));
        }
    }
    let (rows, cols) = (m.nrows(), m.ncols());
    let svd = m.thin_svd().map_err(|e| Error::Numeric {
        routine: "svd",
        detail: format!("{e:?} on a {rows}x{cols} matrix"),
    })?;
    let s = svd.S().column_vector();
    let u = svd.U();
    let v = svd.V();
    let k = s.nrows();
    let sigma_max = if k > 0 { s[0] } else { 0.0 };
    let tol = cutoff(rtol, rows, cols, sigma_max);

    // V · diag(1/s) · Uᵀ restricted to the retained singular triplets
    let rank = (0..k).take_while(|&i| s[i] > tol && s[i] > 0.0).count();
    let mut scaled_v = Matrix::zeros(cols, rank);
    for j in 0..rank {
        let inv = 1.0 / s[j];
        for i in 0..cols {
            scaled_v[(i, j)] = v[(i, j)] * inv;
        }
    }
    Ok(&scaled_v * u.subcols(0, rank).transpose())
}

/// Numerical rank: number of singular values above `rtol · σ_max`.
pub fn numerical_rank(m: MatRef<'_, f64>, rtol: Option<f64>) -> Result<usize> {
    check_finite(m, "numerical_rank")?;
    let s = m.singular_values().map_err(|e| Error::Numeric {
        routine: "svd",
        detail: format!("{e:?} on a {}x{} matrix", m.nrows(), m.ncols()),
    })?;
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let tol = cutoff(rtol, m.nrows(), m.ncols(), sigma_max);
    Ok(s.iter().filter(|&&x| x > tol && x > 0.0).count())
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eig(m: MatRef<'_, f64>) -> Result<EigenDecomposition> {
    check_finite(m, "sym_eig")?;
    if m.nrows() != m.ncols() {
        return Err(contract(format!(
            "sym_eig: matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = asymmetry(m);
    if asym > 1e-12 {
        return Err(contract(format!("sym_eig: relative asymmetry {asym:e} exceeds 1e-12")));
    }
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numeric {
        routine: "self_adjoint_eigen",
        detail: format!("{e:?} on a {}x{} matrix", m.nrows(), m.ncols()),
    })?;
    let n = m.nrows();
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let eigenvalues = (0..n).rev().map(|i| s[i]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Symmetric inverse square root `R = V Λ^{-1/2} Vᵀ` of an SPD matrix.
///
/// Eigenvalues at or below `max(0, 1e-12 · trace)` are rejected as degenerate.
pub fn spd_inv_sqrt(m: MatRef<'_, f64>) -> Result<Matrix> {
    let eig = sym_eig(m)?;
    let n = m.nrows();
    let trace: f64 = (0..n).map(|i| m[(i, i)]).sum();
    let threshold = (1e-12 * trace).max(0.0);
    let smallest = *eig.eigenvalues.last().expect("non-empty");
    if !(smallest > threshold) {
        return Err(Error::DegenerateCovariance { smallest_eigenvalue: smallest, threshold });
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let f = 1.0 / lam.sqrt();
        for i in 0..n {
            scaled[(i, j)] *= f;
        }
    }
    let mut r = &scaled * v.transpose();
    symmetrize(&mut r);
    Ok(r)
}

/// Solves `M x = b` for SPD `M` by Cholesky.
pub fn spd_solve(m: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Matrix> {
    use faer::linalg::solvers::Solve;
    let llt = m.llt(Side::Lower).map_err(|e| Error::Numeric {
        routine: "cholesky",
        detail: format!("{e:?} on a {}x{} matrix", m.nrows(), m.ncols()),
    })?;
    Ok(llt.solve(b))
}

pub fn mat_from_rows(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn diag(values: &[f64]) -> Matrix {
    let n = values.len();
    Matrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
}
