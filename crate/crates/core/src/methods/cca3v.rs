use nalgebra::{DMatrix, DVector};

use super::{centered, check_dim, max_dim, MethodKind, SubspaceModel};
use crate::dataset_io::PairedMultimodalDataset;
use crate::error::Result;
use crate::numerics::{default_ridge, solve_gev};

/// Centered view matrices used by the three-view fit, label view last when
/// present.
fn views(train: &PairedMultimodalDataset) -> (Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>) {
    let (xa, xb, ma, mb) = centered(train);
    let mut out = vec![xa, xb];
    if train.num_classes >= 2 {
        let y = train.label_matrix().values().transpose();
        let mean = y.column_mean();
        let mut yc = y;
        for mut col in yc.column_iter_mut() {
            col -= &mean;
        }
        // a label view with one populated class carries no information
        if yc.amax() > 0.0 {
            out.push(yc);
        }
    }
    (out, ma, mb)
}

/// Block covariance `C` (all pairs) over the stacked views, scaled by `1/(n-1)`.
fn stacked_covariance(views: &[DMatrix<f64>]) -> (DMatrix<f64>, Vec<usize>) {
    let n = views[0].ncols();
    let scale = 1.0 / (n.max(2) - 1) as f64;
    let offsets: Vec<usize> = views
        .iter()
        .scan(0, |acc, v| {
            let o = *acc;
            *acc += v.nrows();
            Some(o)
        })
        .collect();
    let total: usize = views.iter().map(|v| v.nrows()).sum();
    let mut c = DMatrix::zeros(total, total);
    for (i, vi) in views.iter().enumerate() {
        for (j, vj) in views.iter().enumerate().skip(i) {
            let block = vi * vj.transpose() * scale;
            c.view_mut((offsets[i], offsets[j]), block.shape()).copy_from(&block);
            if i != j {
                c.view_mut((offsets[j], offsets[i]), (vj.nrows(), vi.nrows()))
                    .copy_from(&block.transpose());
            }
        }
    }
    (c, offsets)
}

fn block_diagonal_part(c: &DMatrix<f64>, views: &[DMatrix<f64>], offsets: &[usize]) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(c.nrows(), c.ncols());
    for (v, &o) in views.iter().zip(offsets) {
        let k = v.nrows();
        d.view_mut((o, o), (k, k)).copy_from(&c.view((o, o), (k, k)));
    }
    d
}

/// Ridge-regularized three-view objective
/// `Σ_{u<v} ‖X_uᵀW_u − X_vᵀW_v‖² / (n−1) + (V−1)·ridge·Σ_v ‖W_v‖²`
/// for views `xs` (centered, `d_v × n`) and projections `ws`.
pub fn cca3v_objective(xs: &[DMatrix<f64>], ws: &[DMatrix<f64>], ridge: f64) -> f64 {
    let n = xs[0].ncols();
    let scale = 1.0 / (n.max(2) - 1) as f64;
    let proj: Vec<DMatrix<f64>> = xs.iter().zip(ws).map(|(x, w)| x.transpose() * w).collect();
    let mut total = 0.0;
    for u in 0..proj.len() {
        for v in u + 1..proj.len() {
            total += (&proj[u] - &proj[v]).norm_squared() * scale;
        }
    }
    let v = xs.len() as f64;
    total + (v - 1.0) * ridge * ws.iter().map(|w| w.norm_squared()).sum::<f64>()
}

/// Three-view CCA with the one-hot label matrix as the third view.
///
/// Minimizing the pairwise distance objective under
/// `Σ_v W_vᵀ(Σ_vv + ridge·I)W_v = I` is the top-`d` GEV of the
/// off-diagonal covariance blocks against the ridged block diagonal. The
/// label projection is kept as `diagnostics["wc"]` (column-major) with its
/// row count in `diagnostics["wc_rows"]`. With a single populated class the
/// label view is dropped and the fit coincides with two-view CCA.
pub fn fit_cca3v(train: &PairedMultimodalDataset, d: usize, ridge: Option<f64>) -> Result<SubspaceModel> {
    let (da, db, n, c) = (train.xa.dim(), train.xb.dim(), train.len(), train.num_classes);
    let (vs, ma, mb) = views(train);
    let label_view = vs.len() == 3;
    let bound = if label_view {
        max_dim(MethodKind::Cca3v, da, db, n, c)
    } else {
        max_dim(MethodKind::Cca, da, db, n, c)
    };
    check_dim(MethodKind::Cca3v, d, bound)?;

    let (cov, offsets) = stacked_covariance(&vs);
    let diag = block_diagonal_part(&cov, &vs, &offsets);
    let ridge = ridge.unwrap_or_else(|| default_ridge(&diag));
    let sol = solve_gev(&(&cov - &diag), &diag, d, ridge)?;

    let wa = sol.vectors.rows(0, da).into_owned();
    let wb = sol.vectors.rows(da, db).into_owned();
    let mut model = SubspaceModel::new(MethodKind::Cca3v, wa, wb, ma, mb)?;
    model.hyperparams.insert("d".into(), d as f64);
    model.hyperparams.insert("ridge".into(), ridge);
    model
        .hyperparams
        .insert("label_view".into(), if label_view { 1.0 } else { 0.0 });
    model
        .diagnostics
        .insert("eigenvalues".into(), sol.values.iter().copied().collect());
    if label_view {
        let wc = sol.vectors.rows(da + db, c).into_owned();
        model.diagnostics.insert("wc".into(), wc.iter().copied().collect());
        model.diagnostics.insert("wc_rows".into(), vec![c as f64]);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::FeatureMatrix;
    use crate::methods::{fit_cca, Modality};
    use crate::numerics::principal_angles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn dataset(xa: DMatrix<f64>, xb: DMatrix<f64>, labels: Vec<usize>, c: usize) -> PairedMultimodalDataset {
        PairedMultimodalDataset::new(
            FeatureMatrix::new(xa).unwrap(),
            FeatureMatrix::new(xb).unwrap(),
            labels,
            c,
        )
        .unwrap()
    }

    #[test]
    fn single_class_matches_two_view_cca() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let xa = noise(&mut rng, 4, 50);
        let xb = DMatrix::from_fn(3, 4, |_, _| rng.random::<f64>()) * &xa + noise(&mut rng, 3, 50) * 0.3;
        let ds = dataset(xa, xb, vec![1; 50], 1);
        let m3 = fit_cca3v(&ds, 2, None).unwrap();
        let m2 = fit_cca(&ds, 2, None).unwrap();
        assert!(principal_angles(&m3.wa, &m2.wa).iter().all(|&a| a < 1e-4));
        assert!(principal_angles(&m3.wb, &m2.wb).iter().all(|&a| a < 1e-4));
        assert!(!m3.diagnostics.contains_key("wc"));
    }

    #[test]
    fn label_view_separates_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 60;
        let labels: Vec<usize> = (0..n).map(|i| i % 2 + 1).collect();
        let x =
            DMatrix::from_fn(4, n, |r, i| if r == 0 { labels[i] as f64 * 2.0 } else { 0.0 }) + noise(&mut rng, 4, n);
        let ds = dataset(x.clone(), x, labels.clone(), 2);
        let m = fit_cca3v(&ds, 1, None).unwrap();
        let f = m.project(&ds.xa, Modality::A).unwrap();
        let f = f.values().row(0);

        let mean_of = |cls: usize| {
            let v: Vec<f64> = (0..n).filter(|&i| labels[i] == cls).map(|i| f[i]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (m1, m2) = (mean_of(1), mean_of(2));
        let grand = (m1 + m2) / 2.0;
        let between = (n / 2) as f64 * ((m1 - grand).powi(2) + (m2 - grand).powi(2));
        let within: f64 = (0..n)
            .map(|i| (f[i] - if labels[i] == 1 { m1 } else { m2 }).powi(2))
            .sum();
        assert!(between / within > 1.0, "ratio {}", between / within);
        assert_eq!(m.diagnostics["wc_rows"], vec![2.0]);
        assert_eq!(m.diagnostics["wc"].len(), 2);
    }

    #[test]
    fn beats_random_constraint_feasible_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 45;
        let labels: Vec<usize> = (0..n).map(|i| i % 3 + 1).collect();
        let xa = noise(&mut rng, 4, n) + DMatrix::from_fn(4, n, |r, i| ((r + labels[i]) % 3) as f64);
        let xb = noise(&mut rng, 3, n) + DMatrix::from_fn(3, n, |r, i| ((r * labels[i]) % 2) as f64);
        let ds = dataset(xa, xb, labels, 3);
        let d = 2;
        let m = fit_cca3v(&ds, d, None).unwrap();
        let ridge = m.hyperparams["ridge"];
        let (vs, ..) = views(&ds);
        let wc = DMatrix::from_column_slice(3, d, &m.diagnostics["wc"]);
        let best = cca3v_objective(&vs, &[m.wa.clone(), m.wb.clone(), wc], ridge);

        let (cov, offsets) = stacked_covariance(&vs);
        let dtilde = block_diagonal_part(&cov, &vs, &offsets) + DMatrix::identity(cov.nrows(), cov.nrows()) * ridge;
        let chol = dtilde.clone().cholesky().unwrap();
        for _ in 0..100 {
            // random W with Wᵀ D̃ W = I: W = L⁻ᵀ Q for orthonormal Q
            let q = crate::numerics::orthonormal_basis(&noise(&mut rng, cov.nrows(), d));
            let w = chol.l().transpose().solve_upper_triangular(&q).unwrap();
            let ws: Vec<DMatrix<f64>> = vs
                .iter()
                .zip(&offsets)
                .map(|(v, &o)| w.rows(o, v.nrows()).into_owned())
                .collect();
            assert!(best <= cca3v_objective(&vs, &ws, ridge) + 1e-9);
        }
    }
}
