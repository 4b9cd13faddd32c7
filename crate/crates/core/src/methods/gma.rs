use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{block_diag, centered, check_dim, MethodKind, SubspaceModel};
use crate::dataset_io::PairedMultimodalDataset;
use crate::error::{Result, XmsError};
use crate::numerics::{class_graph, default_ridge, scatter, solve_gev};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GmaVariant {
    Blm,
    Gmlda,
    Gmmfa,
}

impl GmaVariant {
    fn method(self) -> MethodKind {
        match self {
            GmaVariant::Blm => MethodKind::Blm,
            GmaVariant::Gmlda => MethodKind::Gmlda,
            GmaVariant::Gmmfa => MethodKind::Gmmfa,
        }
    }
}

/// Balance weights of the generalized multi-view objective
/// `max waᵀAa·wa + μ·wbᵀAb·wb + β·waᵀXa·Xbᵀwb  s.t.  waᵀBa·wa + α·wbᵀBb·wb = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmaConfig {
    pub mu: f64,
    pub beta: f64,
    pub alpha: f64,
    pub variant: GmaVariant,
    /// Same-class neighbours per sample in the GMMFA intrinsic graph.
    pub mfa_k_intrinsic: usize,
    /// Different-class neighbours per sample in the GMMFA penalty graph.
    pub mfa_k_penalty: usize,
}

impl GmaConfig {
    pub fn new(variant: GmaVariant) -> Self {
        // below 2 an anti-aligned copy of the leading direction can outrank
        // the aligned second direction
        GmaConfig {
            mu: 1.0,
            beta: 2.0,
            alpha: 1.0,
            variant,
            mfa_k_intrinsic: 5,
            mfa_k_penalty: 20,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.alpha > 0.0) || !(self.beta >= 0.0) {
            return Err(XmsError::InvalidArgument(format!(
                "GMA needs mu > 0, alpha > 0, beta >= 0 (got mu={}, alpha={}, beta={})",
                self.mu, self.alpha, self.beta
            )));
        }
        if self.variant == GmaVariant::Gmmfa && (self.mfa_k_intrinsic == 0 || self.mfa_k_penalty == 0) {
            return Err(XmsError::InvalidArgument("GMMFA graph sizes must be >= 1".into()));
        }
        Ok(())
    }
}

struct ViewTerms {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

/// Generalized multi-view analysis: BLM, GMLDA or GMMFA depending on
/// `config.variant`.
///
/// * BLM: `A_i = X_i·X_iᵀ/n`, `B_i = I`, cross term on the raw data.
/// * GMLDA: `A_i = S_B`, `B_i = S_W`, cross term with every sample replaced
///   by its class mean.
/// * GMMFA: `A_i = X_i·L_penalty·X_iᵀ`, `B_i = X_i·L_intrinsic·X_iᵀ`, cross
///   term on the raw data.
///
/// With `beta = 0` the pencil is block diagonal and each view is solved on
/// its own; column `j` of `wa` and `wb` then pairs the `j`-th direction of
/// each view.
pub fn fit_gma(
    train: &PairedMultimodalDataset,
    d: usize,
    config: &GmaConfig,
    ridge: Option<f64>,
) -> Result<SubspaceModel> {
    config.validate()?;
    let method = config.variant.method();
    let (da, db, n) = (train.xa.dim(), train.xb.dim(), train.len());
    let max = if config.beta == 0.0 { da.min(db) } else { da + db };
    check_dim(method, d, max)?;
    let (xa, xb, ma, mb) = centered(train);
    let labels = &train.labels;
    let c = train.num_classes;

    let (va, vb, cross) = match config.variant {
        GmaVariant::Blm => {
            let inv_n = 1.0 / n as f64;
            (
                ViewTerms {
                    a: &xa * xa.transpose() * inv_n,
                    b: DMatrix::identity(da, da),
                },
                ViewTerms {
                    a: &xb * xb.transpose() * inv_n,
                    b: DMatrix::identity(db, db),
                },
                &xa * xb.transpose(),
            )
        }
        GmaVariant::Gmlda => {
            let sa = scatter(&xa, labels, c)?;
            let sb = scatter(&xb, labels, c)?;
            // each sample replaced by its class mean: Σ_k n_k·m_ak·m_bkᵀ
            let counts = train.class_counts();
            let mut weighted = sb.class_means.clone();
            for (k, mut col) in weighted.column_iter_mut().enumerate() {
                col *= counts[k] as f64;
            }
            let cross = &sa.class_means * weighted.transpose();
            (
                ViewTerms {
                    a: sa.between,
                    b: sa.within,
                },
                ViewTerms {
                    a: sb.between,
                    b: sb.within,
                },
                cross,
            )
        }
        GmaVariant::Gmmfa => {
            let view = |x: &DMatrix<f64>| -> Result<ViewTerms> {
                let intrinsic = class_graph(x, labels, config.mfa_k_intrinsic, true)?;
                let penalty = class_graph(x, labels, config.mfa_k_penalty, false)?;
                Ok(ViewTerms {
                    a: x * &penalty.laplacian * x.transpose(),
                    b: x * &intrinsic.laplacian * x.transpose(),
                })
            };
            (view(&xa)?, view(&xb)?, &xa * xb.transpose())
        }
    };

    let b_big = block_diag(&va.b, &(&vb.b * config.alpha));
    let ridge = ridge.unwrap_or_else(|| default_ridge(&b_big));

    let (wa, wb, values) = if config.beta == 0.0 {
        let sa = solve_gev(&va.a, &va.b, d, ridge)?;
        let sb = solve_gev(&(&vb.a * config.mu), &(&vb.b * config.alpha), d, ridge)?;
        let vals = sa.values.iter().chain(sb.values.iter()).copied().collect();
        (sa.vectors, sb.vectors, vals)
    } else {
        let mut a_big = block_diag(&va.a, &(&vb.a * config.mu));
        let half = &cross * (0.5 * config.beta);
        a_big.view_mut((0, da), (da, db)).copy_from(&half);
        a_big.view_mut((da, 0), (db, da)).copy_from(&half.transpose());
        let sol = solve_gev(&a_big, &b_big, d, ridge)?;
        (
            sol.vectors.rows(0, da).into_owned(),
            sol.vectors.rows(da, db).into_owned(),
            sol.values.iter().copied().collect(),
        )
    };

    let mut model = SubspaceModel::new(method, wa, wb, ma, mb)?;
    let hp = &mut model.hyperparams;
    hp.insert("d".into(), d as f64);
    hp.insert("mu".into(), config.mu);
    hp.insert("alpha".into(), config.alpha);
    hp.insert("beta".into(), config.beta);
    hp.insert("ridge".into(), ridge);
    if config.variant == GmaVariant::Gmmfa {
        hp.insert("mfa_k_intrinsic".into(), config.mfa_k_intrinsic as f64);
        hp.insert("mfa_k_penalty".into(), config.mfa_k_penalty as f64);
    }
    model.diagnostics.insert("eigenvalues".into(), values);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::FeatureMatrix;
    use crate::methods::Modality;
    use crate::numerics::{principal_angles, sym_eigen_desc};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn classed(rng: &mut ChaCha8Rng, n: usize, c: usize, da: usize, db: usize) -> PairedMultimodalDataset {
        spread_classes(rng, n, c, da, db, 3.0)
    }

    fn spread_classes(
        rng: &mut ChaCha8Rng,
        n: usize,
        c: usize,
        da: usize,
        db: usize,
        spread: f64,
    ) -> PairedMultimodalDataset {
        let labels: Vec<usize> = (0..n).map(|i| i % c + 1).collect();
        let centers_a = noise(rng, da, c) * spread;
        let centers_b = noise(rng, db, c) * spread;
        let xa = DMatrix::from_fn(da, n, |r, i| centers_a[(r, labels[i] - 1)]) + noise(rng, da, n);
        let xb = DMatrix::from_fn(db, n, |r, i| centers_b[(r, labels[i] - 1)]) + noise(rng, db, n);
        PairedMultimodalDataset::new(
            FeatureMatrix::new(xa).unwrap(),
            FeatureMatrix::new(xb).unwrap(),
            labels,
            c,
        )
        .unwrap()
    }

    /// LDA through whitening of the within-class scatter (independent of the
    /// Cholesky-based GEV route).
    fn lda_oracle(x: &DMatrix<f64>, labels: &[usize], c: usize, d: usize, ridge: f64) -> DMatrix<f64> {
        let mean = x.column_mean();
        let mut xc = x.clone();
        for mut col in xc.column_iter_mut() {
            col -= &mean;
        }
        let s = scatter(&xc, labels, c).unwrap();
        let dim = x.nrows();
        let (wv, wu) = sym_eigen_desc(&(s.within + DMatrix::identity(dim, dim) * ridge));
        let inv_sqrt = &wu * DMatrix::from_diagonal(&wv.map(|v| 1.0 / v.sqrt())) * wu.transpose();
        let (_, bu) = sym_eigen_desc(&(&inv_sqrt * s.between * &inv_sqrt));
        &inv_sqrt * bu.columns(0, d)
    }

    #[test]
    fn gmlda_without_coupling_matches_single_view_lda() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ds = classed(&mut rng, 90, 3, 5, 4);
        let cfg = GmaConfig {
            beta: 0.0,
            ..GmaConfig::new(GmaVariant::Gmlda)
        };
        let ridge = 1e-3;
        let m = fit_gma(&ds, 2, &cfg, Some(ridge)).unwrap();
        let oa = lda_oracle(ds.xa.values(), &ds.labels, 3, 2, ridge);
        let ob = lda_oracle(ds.xb.values(), &ds.labels, 3, 2, ridge);
        assert!(principal_angles(&m.wa, &oa).iter().all(|&a| a < 1e-6));
        assert!(principal_angles(&m.wb, &ob).iter().all(|&a| a < 1e-6));
    }

    #[test]
    fn blm_on_identical_modalities_gives_shared_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = noise(&mut rng, 4, 40);
        let ds = PairedMultimodalDataset::new(
            FeatureMatrix::new(x.clone()).unwrap(),
            FeatureMatrix::new(x).unwrap(),
            vec![1; 40],
            1,
        )
        .unwrap();
        let m = fit_gma(&ds, 2, &GmaConfig::new(GmaVariant::Blm), None).unwrap();
        assert!(principal_angles(&m.wa, &m.wb).iter().all(|&a| a < 1e-6));
    }

    #[test]
    fn gmmfa_separates_two_clear_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let ds = spread_classes(&mut rng, 40, 2, 3, 3, 8.0);
        let cfg = GmaConfig {
            mfa_k_intrinsic: 2,
            mfa_k_penalty: 5,
            ..GmaConfig::new(GmaVariant::Gmmfa)
        };
        let m = fit_gma(&ds, 1, &cfg, None).unwrap();
        for (x, modality) in [(&ds.xa, Modality::A), (&ds.xb, Modality::B)] {
            let f = m.project(x, modality).unwrap();
            let f = f.values().row(0);
            let mut min_inter = f64::INFINITY;
            let mut max_intra = 0.0f64;
            for i in 0..ds.len() {
                for j in (i + 1)..ds.len() {
                    let dist = (f[i] - f[j]).abs();
                    if ds.labels[i] == ds.labels[j] {
                        max_intra = max_intra.max(dist);
                    } else {
                        min_inter = min_inter.min(dist);
                    }
                }
            }
            assert!(min_inter > max_intra, "{modality:?}: {min_inter} <= {max_intra}");
        }
    }

    #[test]
    fn invalid_weights_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let ds = classed(&mut rng, 20, 2, 3, 3);
        let cfg = GmaConfig {
            mu: 0.0,
            ..GmaConfig::new(GmaVariant::Blm)
        };
        assert!(fit_gma(&ds, 1, &cfg, None).is_err());
    }
}
