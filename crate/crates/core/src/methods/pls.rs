use nalgebra::{DMatrix, DVector};

use super::{centered, check_dim, MethodKind, SubspaceModel};
use crate::dataset_io::PairedMultimodalDataset;
use crate::error::{Result, XmsError};

/// Scores, loadings and inner-relation coefficients of a PLS fit.
///
/// `X_aᵀ ≈ T·Pᵀ`, `X_bᵀ ≈ U·Qᵀ`, `U ≈ T·D`. Residual matrices are not kept.
#[derive(Debug, Clone)]
pub struct PlsDecomposition {
    /// `n × d`.
    pub scores_t: DMatrix<f64>,
    /// `n × d`.
    pub scores_u: DMatrix<f64>,
    /// `d_a × d`.
    pub loadings_p: DMatrix<f64>,
    /// `d_b × d`.
    pub loadings_q: DMatrix<f64>,
    /// Diagonal of `D`.
    pub inner_d: DVector<f64>,
}

/// Partial least squares in canonical (symmetric deflation) mode.
///
/// Component `j` takes the leading singular pair of the deflated
/// cross-product `X_a·X_bᵀ`, which maximizes the squared covariance of the
/// scores under unit-norm weights; each block is then deflated by its own
/// score. The unit weight vectors form the columns of `wa`, `wb`.
pub fn fit_pls(train: &PairedMultimodalDataset, d: usize) -> Result<(SubspaceModel, PlsDecomposition)> {
    let (da, db, n) = (train.xa.dim(), train.xb.dim(), train.len());
    check_dim(MethodKind::Pls, d, da.min(db))?;
    if n < 2 {
        return Err(XmsError::InvalidArgument("PLS needs at least 2 samples".into()));
    }
    let (mut xa, mut xb, ma, mb) = centered(train);
    let scale = (xa.norm() * xb.norm()).max(f64::MIN_POSITIVE);

    let mut wa = DMatrix::zeros(da, d);
    let mut wb = DMatrix::zeros(db, d);
    let mut t_scores = DMatrix::zeros(n, d);
    let mut u_scores = DMatrix::zeros(n, d);
    let mut p_load = DMatrix::zeros(da, d);
    let mut q_load = DMatrix::zeros(db, d);
    let mut inner = DVector::zeros(d);
    let mut kept = 0;

    for j in 0..d {
        let cross = &xa * xb.transpose();
        let svd = cross.svd(true, true);
        let (imax, smax) = svd.singular_values.argmax();
        if smax < 1e-12 * scale {
            if j == 0 {
                return Err(XmsError::NoCovarianceStructure);
            }
            break;
        }
        let mut u: DVector<f64> = svd.u.as_ref().expect("U").column(imax).into_owned();
        let mut v: DVector<f64> = svd.v_t.as_ref().expect("Vᵀ").row(imax).transpose();
        let flip = u
            .iter()
            .fold(
                (0.0f64, 1.0),
                |(m, s), &x| if x.abs() > m { (x.abs(), x.signum()) } else { (m, s) },
            )
            .1;
        if flip < 0.0 {
            u.neg_mut();
            v.neg_mut();
        }
        let t = xa.transpose() * &u;
        let s = xb.transpose() * &v;
        let tt = t.norm_squared();
        let ss = s.norm_squared();
        if tt <= 0.0 || ss <= 0.0 {
            break;
        }
        let p = &xa * &t / tt;
        let q = &xb * &s / ss;
        xa -= &p * t.transpose();
        xb -= &q * s.transpose();

        wa.set_column(j, &u);
        wb.set_column(j, &v);
        t_scores.set_column(j, &t);
        u_scores.set_column(j, &s);
        p_load.set_column(j, &p);
        q_load.set_column(j, &q);
        inner[j] = s.dot(&t) / tt;
        kept = j + 1;
    }

    let decomposition = PlsDecomposition {
        scores_t: t_scores.columns(0, kept).into_owned(),
        scores_u: u_scores.columns(0, kept).into_owned(),
        loadings_p: p_load.columns(0, kept).into_owned(),
        loadings_q: q_load.columns(0, kept).into_owned(),
        inner_d: inner.rows(0, kept).into_owned(),
    };
    let mut model = SubspaceModel::new(
        MethodKind::Pls,
        wa.columns(0, kept).into_owned(),
        wb.columns(0, kept).into_owned(),
        ma,
        mb,
    )?;
    model.hyperparams.insert("d".into(), kept as f64);
    model
        .diagnostics
        .insert("inner_d".into(), decomposition.inner_d.iter().copied().collect());
    Ok((model, decomposition))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::FeatureMatrix;
    use crate::numerics::sym_eigen_desc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(xa: DMatrix<f64>, xb: DMatrix<f64>) -> PairedMultimodalDataset {
        let n = xa.ncols();
        PairedMultimodalDataset::new(
            FeatureMatrix::new(xa).unwrap(),
            FeatureMatrix::new(xb).unwrap(),
            vec![1; n],
            1,
        )
        .unwrap()
    }

    fn noise(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn abs_cos(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a.dot(b) / (a.norm() * b.norm())).abs()
    }

    #[test]
    fn rank_one_cross_covariance_recovers_its_singular_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 200;
        let z = DMatrix::from_fn(1, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let ua = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let vb = DVector::from_vec(vec![0.0, 1.0]);
        // modalities share only the z-direction; the other directions are
        // independent per modality and uncorrelated with z by construction
        let xa = &ua * &z;
        let xb = &vb * &z * 2.0;
        let (m, _) = fit_pls(&dataset(xa, xb), 1).unwrap();
        assert!(abs_cos(&m.wa.column(0).into_owned(), &ua) >= 0.999);
        assert!(abs_cos(&m.wb.column(0).into_owned(), &vb) >= 0.999);
    }

    #[test]
    fn identical_modalities_give_first_principal_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.5, 0.3]) * noise(&mut rng, 3, 50);
        let (m, _) = fit_pls(&dataset(x.clone(), x.clone()), 1).unwrap();
        let xc = {
            let mean = x.column_mean();
            let mut c = x.clone();
            for mut col in c.column_iter_mut() {
                col -= &mean;
            }
            c
        };
        let (_, vecs) = sym_eigen_desc(&(&xc * xc.transpose()));
        let pc1 = vecs.column(0).into_owned();
        assert!(abs_cos(&m.wa.column(0).into_owned(), &pc1) > 0.999999);
        assert!(abs_cos(&m.wb.column(0).into_owned(), &pc1) > 0.999999);
    }

    #[test]
    fn unit_norm_and_orthogonal_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z = noise(&mut rng, 4, 60);
        let xa = DMatrix::from_fn(6, 4, |_, _| rng.random::<f64>()) * &z + noise(&mut rng, 6, 60) * 0.2;
        let xb = DMatrix::from_fn(5, 4, |_, _| rng.random::<f64>()) * &z + noise(&mut rng, 5, 60) * 0.2;
        let (m, dec) = fit_pls(&dataset(xa, xb), 4).unwrap();
        for j in 0..4 {
            assert!((m.wa.column(j).norm() - 1.0).abs() < 1e-10);
            assert!((m.wb.column(j).norm() - 1.0).abs() < 1e-10);
        }
        let ga = m.wa.transpose() * &m.wa;
        let gb = m.wb.transpose() * &m.wb;
        assert!((ga - DMatrix::identity(4, 4)).amax() < 1e-8);
        assert!((gb - DMatrix::identity(4, 4)).amax() < 1e-8);
        assert_eq!(dec.scores_t.shape(), (60, 4));
        assert!(dec.inner_d.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn zero_cross_covariance_errors() {
        // a varies only on samples where b is at its mean and vice versa
        let xa = DMatrix::from_row_slice(1, 4, &[1.0, -1.0, 0.0, 0.0]);
        let xb = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, -1.0]);
        assert!(matches!(
            fit_pls(&dataset(xa, xb), 1),
            Err(XmsError::NoCovarianceStructure)
        ));
    }
}
