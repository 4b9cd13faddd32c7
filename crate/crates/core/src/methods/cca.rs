use nalgebra::DMatrix;

use super::{block_diag, centered, check_dim, max_dim, MethodKind, SubspaceModel};
use crate::dataset_io::PairedMultimodalDataset;
use crate::error::Result;
use crate::numerics::{covariances, default_ridge, solve_gev};

/// Canonical correlation analysis through the symmetric pencil
/// `[[0, Σab], [Σba, 0]] v = ρ [[Σaa, 0], [0, Σbb]] v`.
///
/// The top `d` eigenvalues are the canonical correlations; they are kept in
/// `diagnostics["canonical_correlations"]`. `ridge = None` uses the default
/// rule on the block-diagonal constraint matrix.
pub fn fit_cca(train: &PairedMultimodalDataset, d: usize, ridge: Option<f64>) -> Result<SubspaceModel> {
    let (da, db, n) = (train.xa.dim(), train.xb.dim(), train.len());
    check_dim(
        MethodKind::Cca,
        d,
        max_dim(MethodKind::Cca, da, db, n, train.num_classes),
    )?;
    let (xa, xb, ma, mb) = centered(train);
    let cov = covariances(&xa, &xb)?;

    let mut a = DMatrix::zeros(da + db, da + db);
    a.view_mut((0, da), (da, db)).copy_from(&cov.sab);
    a.view_mut((da, 0), (db, da)).copy_from(&cov.sab.transpose());
    let b = block_diag(&cov.saa, &cov.sbb);
    let ridge = ridge.unwrap_or_else(|| default_ridge(&b));

    let sol = solve_gev(&a, &b, d, ridge)?;
    let wa = sol.vectors.rows(0, da).into_owned();
    let wb = sol.vectors.rows(da, db).into_owned();

    let mut model = SubspaceModel::new(MethodKind::Cca, wa, wb, ma, mb)?;
    model.hyperparams.insert("d".into(), d as f64);
    model.hyperparams.insert("ridge".into(), ridge);
    model
        .diagnostics
        .insert("canonical_correlations".into(), sol.values.iter().copied().collect());
    Ok(model)
}

/// Canonical correlations recorded by [`fit_cca`].
pub fn canonical_correlations(model: &SubspaceModel) -> Option<&[f64]> {
    model.diagnostics.get("canonical_correlations").map(Vec::as_slice)
}
