//! Dense linear algebra and special functions shared by the statistical modules.
//!
//! Factorizations are delegated to `faer`; the chi-squared quantile and the
//! rank-revealing pivoted Cholesky are implemented here.

mod decomp;
mod pivoted;
mod special;

pub use decomp::{
    asymmetry, diag, frobenius, mat_from_rows, numerical_rank, pinv, spd_inv_sqrt, spd_solve,
    sym_eig, symmetrize, EigenDecomposition, Matrix,
};
pub use pivoted::{pivoted_cholesky, pivoted_cholesky_lazy, PivotedCholesky};
pub use special::{chi2_cdf, chi2_quantile, chi2_sf, ln_gamma, regularized_gamma, std_normal_cdf};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `M · v` for a dense matrix and a slice.
pub(crate) fn matvec(m: faer::MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.ncols(), v.len());
    let mut out = vec![0.0; m.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        let col = m.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * vj;
        }
    }
    out
}
