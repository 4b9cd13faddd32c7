use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{centered, check_dim, MethodKind, SubspaceModel};
use crate::dataset_io::PairedMultimodalDataset;
use crate::error::{Result, XmsError};
use crate::numerics::{knn_graph, orthonormal_basis, sym_eigen_desc, symmetrize, Bandwidth};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfeConfig {
    /// Weight of the inter-class dispersion term.
    pub alpha: f64,
    /// Weight of the local-consistency term.
    pub beta: f64,
    /// Neighbours per sample in the local-consistency graphs.
    pub knn_k: usize,
    pub max_iters: usize,
    /// Stop once the block residual falls below `tol · ‖Q‖`.
    pub tol: f64,
    /// Seed of the random start block.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    0x00CD_FE00
}

impl Default for CdfeConfig {
    fn default() -> Self {
        CdfeConfig {
            alpha: 0.5,
            beta: 0.1,
            knn_k: 5,
            max_iters: 2000,
            tol: 1e-9,
            seed: default_seed(),
        }
    }
}

/// Quadratic form `Q` with `J_CDFE(W) = tr(Wᵀ Q W)` for the stacked
/// `W = [Wa; Wb]`.
///
/// * `J_intra = (1/N1) Σ_i Σ_{j: c_j = c_i} ‖Waᵀxa_i − Wbᵀxb_j‖²`
/// * `J_inter = (1/N2) Σ_i Σ_{j: c_j ≠ c_i} ‖Waᵀxa_i − Wbᵀxb_j‖²`
/// * `J_l = Σ_p (Σ_ij w^p_ij ‖f^p_i − f^p_j‖²) / Σ_ij w^p_ij` over the
///   heat-kernel kNN graph of each modality.
fn cdfe_form(xa: &DMatrix<f64>, xb: &DMatrix<f64>, labels: &[usize], config: &CdfeConfig) -> Result<DMatrix<f64>> {
    let n = xa.ncols();
    let (da, db) = (xa.nrows(), xb.nrows());
    let n1: usize = labels.iter().map(|&l| labels.iter().filter(|&&m| m == l).count()).sum();
    let n2 = n * n - n1;
    let w_same = 1.0 / n1 as f64;
    let w_diff = if n2 > 0 { -config.alpha / n2 as f64 } else { 0.0 };
    let s = DMatrix::from_fn(n, n, |i, j| if labels[i] == labels[j] { w_same } else { w_diff });
    let row = DVector::from_iterator(n, (0..n).map(|i| s.row(i).sum()));
    let col = DVector::from_iterator(n, (0..n).map(|j| s.column(j).sum()));

    let scaled_gram = |x: &DMatrix<f64>, w: &DVector<f64>| {
        let mut xw = x.clone();
        for (j, mut c) in xw.column_iter_mut().enumerate() {
            c *= w[j];
        }
        &xw * x.transpose()
    };
    let mut qaa = scaled_gram(xa, &row);
    let mut qbb = scaled_gram(xb, &col);
    let qab = -(xa * &s * xb.transpose());

    if config.beta > 0.0 && n > 1 {
        let k = config.knn_k.min(n - 1);
        for (x, q) in [(xa, &mut qaa), (xb, &mut qbb)] {
            let g = knn_graph(x, k, Bandwidth::Median)?;
            let total = g.affinity.sum();
            if total > 0.0 {
                *q += x * &g.laplacian * x.transpose() * (2.0 * config.beta / total);
            }
        }
    }

    let mut q = DMatrix::zeros(da + db, da + db);
    q.view_mut((0, 0), (da, da)).copy_from(&qaa);
    q.view_mut((da, da), (db, db)).copy_from(&qbb);
    q.view_mut((0, da), (da, db)).copy_from(&qab);
    q.view_mut((da, 0), (db, da)).copy_from(&qab.transpose());
    let asym = (&q - q.transpose()).amax();
    if asym > 1e-9 * q.amax().max(1.0) {
        return Err(XmsError::Numerical(format!(
            "CDFE quadratic form is not symmetric ({asym:.3e})"
        )));
    }
    Ok(symmetrize(&q))
}

/// `J_CDFE` evaluated directly from the pair sums for projections `wa`, `wb`
/// on centered data.
pub fn cdfe_objective(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    labels: &[usize],
    wa: &DMatrix<f64>,
    wb: &DMatrix<f64>,
    config: &CdfeConfig,
) -> Result<f64> {
    let q = cdfe_form(xa, xb, labels, config)?;
    let mut w = DMatrix::zeros(wa.nrows() + wb.nrows(), wa.ncols());
    w.view_mut((0, 0), wa.shape()).copy_from(wa);
    w.view_mut((wa.nrows(), 0), wb.shape()).copy_from(wb);
    Ok((w.transpose() * q * w).trace())
}

/// Common discriminant feature extraction.
///
/// Minimizes `J_intra − α·J_inter + β·J_l` subject to stacked
/// orthonormality `[Wa; Wb]ᵀ[Wa; Wb] = I`. The minimizer spans the `d`
/// smallest eigenvectors of the quadratic form; it is reached by block
/// Rayleigh–Ritz iterations whose search space always contains the current
/// iterate, so the recorded objective never increases.
pub fn fit_cdfe(train: &PairedMultimodalDataset, d: usize, config: &CdfeConfig) -> Result<SubspaceModel> {
    if config.alpha < 0.0 || config.beta < 0.0 {
        return Err(XmsError::InvalidArgument("CDFE weights must be >= 0".into()));
    }
    if config.alpha > 0.0 && train.num_classes < 2 {
        return Err(XmsError::InvalidArgument(
            "CDFE with alpha > 0 needs at least 2 classes".into(),
        ));
    }
    if config.max_iters == 0 || !(config.tol > 0.0) {
        return Err(XmsError::InvalidArgument(
            "CDFE needs max_iters >= 1 and tol > 0".into(),
        ));
    }
    let (da, db) = (train.xa.dim(), train.xb.dim());
    check_dim(MethodKind::Cdfe, d, da + db)?;
    let (xa, xb, ma, mb) = centered(train);
    let q = cdfe_form(&xa, &xb, &train.labels, config)?;

    let (w, trace, converged) = smallest_eigenspace(&q, d, config)?;

    let mut wa = w.rows(0, da).into_owned();
    let mut wb = w.rows(da, db).into_owned();
    // orientation of each stacked column is arbitrary; fix it jointly
    for j in 0..d {
        let col = w.column(j);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            wa.column_mut(j).neg_mut();
            wb.column_mut(j).neg_mut();
        }
    }
    let mut model = SubspaceModel::new(MethodKind::Cdfe, wa, wb, ma, mb)?;
    let hp = &mut model.hyperparams;
    hp.insert("d".into(), d as f64);
    hp.insert("alpha".into(), config.alpha);
    hp.insert("beta".into(), config.beta);
    hp.insert("knn_k".into(), config.knn_k as f64);
    hp.insert("iterations".into(), (trace.len() - 1) as f64);
    hp.insert("converged".into(), if converged { 1.0 } else { 0.0 });
    model.diagnostics.insert("objective_trace".into(), trace);
    Ok(model)
}

/// Block Rayleigh–Ritz (LOBPCG-style, unpreconditioned) minimization of
/// `tr(WᵀQW)` over orthonormal `W` with `d` columns.
fn smallest_eigenspace(q: &DMatrix<f64>, d: usize, config: &CdfeConfig) -> Result<(DMatrix<f64>, Vec<f64>, bool)> {
    let (max_iters, tol) = (config.max_iters, config.tol);
    let m = q.nrows();
    let qnorm = q.norm().max(f64::MIN_POSITIVE);

    // fixed-seed start keeps the fit deterministic
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = DMatrix::from_fn(m, d, |_, _| rng.random::<f64>() - 0.5);
    let mut w = rayleigh_ritz(q, &orthonormal_basis(&start), d);
    let mut prev: Option<DMatrix<f64>> = None;
    let mut trace = vec![(w.transpose() * q * &w).trace()];
    let mut converged = false;

    for iter in 0..max_iters {
        let qw = q * &w;
        let theta = w.transpose() * &qw;
        let resid = &qw - &w * &theta;
        if resid.norm() <= tol * qnorm {
            converged = true;
            break;
        }
        let mut extra = resid;
        if let Some(p) = &prev {
            extra = concat_columns(&extra, p);
        }
        // orthogonalize the new directions against W (twice for stability)
        for _ in 0..2 {
            extra -= &w * (w.transpose() * &extra);
        }
        let extra = orthonormal_basis(&extra);
        let search = if extra.ncols() > 0 {
            concat_columns(&w, &extra)
        } else {
            w.clone()
        };
        let next = rayleigh_ritz(q, &search, d);
        let obj = (next.transpose() * q * &next).trace();
        if !obj.is_finite() {
            return Err(XmsError::Diverged { iteration: iter + 1 });
        }
        // stay put if rounding would report an increase
        if obj > *trace.last().expect("non-empty") {
            converged = true;
            break;
        }
        // previous-direction block: the part of the step outside span(W)
        let mut step = &next - &w * (w.transpose() * &next);
        if step.norm() > 0.0 {
            step = orthonormal_basis(&step);
        }
        prev = if step.ncols() > 0 { Some(step) } else { None };
        w = next;
        trace.push(obj);
    }
    Ok((w, trace, converged))
}

fn rayleigh_ritz(q: &DMatrix<f64>, basis: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let small = basis.transpose() * q * basis;
    let (vals, vecs) = sym_eigen_desc(&small);
    let k = vals.len();
    let idx: Vec<usize> = (0..d).map(|j| k - 1 - j).collect();
    basis * vecs.select_columns(&idx)
}

fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}
