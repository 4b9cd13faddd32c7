//! Shared numerical kernels used by the subspace fitters.

mod covariance;
mod gev;
mod graph;
mod prox;

pub use covariance::{covariances, scatter, CovarianceSet, ScatterSet};
pub use gev::{default_ridge, solve_gev, GevSolution};
pub use graph::{
    class_graph, knn_graph, laplacian, multimodal_graph, pairwise_sq_distances, Bandwidth, GraphKind, GraphSpec,
};
pub use prox::{l21_norm, l21_reweight, singular_value_shrink};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Flips each column so that its largest-magnitude entry is positive
/// (first such entry on ties).
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// non-increasing (stable on ties) and the column sign convention applied.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(&order);
    fix_column_signs(&mut vectors);
    (values, vectors)
}

/// Principal angles (radians, ascending) between the column spaces of `a`
/// and `b`. Computed from the sines, which stays accurate for tiny angles.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let k = qa.ncols().min(qb.ncols());
    let (small, large) = if qa.ncols() <= qb.ncols() {
        (&qa, &qb)
    } else {
        (&qb, &qa)
    };
    let resid = small - large * (large.transpose() * small);
    let mut sines: Vec<f64> = resid.singular_values().iter().map(|s| s.min(1.0)).collect();
    sines.sort_by(f64::total_cmp);
    sines.truncate(k);
    sines.into_iter().map(f64::asin).collect()
}

/// Orthonormal basis of the column space (rank-revealing via SVD).
pub fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * (a.nrows().max(a.ncols()) as f64);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    u.select_columns(&keep)
}
