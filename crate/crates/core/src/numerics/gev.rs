use nalgebra::{DMatrix, DVector};

use crate::error::{Result, XmsError};

/// Largest condition number accepted for the constraint matrix.
const MAX_CONDITION: f64 = 1e12;

/// Top eigenpairs of a symmetric-definite pencil.
#[derive(Debug, Clone)]
pub struct GevSolution {
    /// Non-increasing.
    pub values: DVector<f64>,
    /// One column per eigenvalue, normalized to `vᵀ(B + ridge·I)v = 1`.
    pub vectors: DMatrix<f64>,
}

/// Default ridge `1e-4 · trace(B) / size(B)`.
pub fn default_ridge(b: &DMatrix<f64>) -> f64 {
    if b.nrows() == 0 {
        return 0.0;
    }
    1e-4 * b.trace() / b.nrows() as f64
}

/// Solves `A·v = λ·(B + ridge·I)·v` for the `k` largest eigenvalues.
///
/// Reduces to a standard symmetric problem through the Cholesky factor
/// `L·Lᵀ = B + ridge·I`. Eigenvectors follow the column sign convention
/// (largest-magnitude component positive).
pub fn solve_gev(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize, ridge: f64) -> Result<GevSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.shape() != (n, n) {
        return Err(XmsError::DimensionMismatch {
            context: "generalized eigenproblem operands".into(),
            expected: n,
            got: b.nrows(),
        });
    }
    if k > n {
        return Err(XmsError::InvalidArgument(format!(
            "requested {k} eigenpairs of a {n}x{n} problem"
        )));
    }
    if !(ridge >= 0.0) {
        return Err(XmsError::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    let mut bt = super::symmetrize(b);
    for i in 0..n {
        bt[(i, i)] += ridge;
    }
    let chol = bt.clone().cholesky().ok_or_else(|| XmsError::Singular {
        context: "constraint matrix is not positive definite".into(),
    })?;
    let l = chol.l();
    let diag = l.diagonal();
    let (dmin, dmax) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cond = if dmin > 0.0 {
        (dmax / dmin).powi(2)
    } else {
        f64::INFINITY
    };
    if !(cond <= MAX_CONDITION) {
        return Err(XmsError::Singular {
            context: format!("constraint matrix condition estimate {cond:.3e} exceeds 1e12"),
        });
    }

    // C = L⁻¹ A L⁻ᵀ
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| XmsError::Numerical("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| XmsError::Numerical("triangular solve failed".into()))?;
    let (values, y) = super::sym_eigen_desc(&c);

    let y = y.columns(0, k).into_owned();
    let mut vectors = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| XmsError::Numerical("triangular solve failed".into()))?;
    super::fix_column_signs(&mut vectors);
    let values = values.rows(0, k).into_owned();
    if values.iter().any(|v| !v.is_finite()) || vectors.iter().any(|v| !v.is_finite()) {
        return Err(XmsError::Numerical("non-finite generalized eigenpairs".into()));
    }
    Ok(GevSolution { values, vectors })
}
