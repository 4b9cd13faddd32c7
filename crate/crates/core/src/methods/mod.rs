//! Cross-modal subspace fitters.
//!
//! Every fitter learns a pair of projections `(Wa, Wb)` so that
//! `Waᵀ·xa` and `Wbᵀ·xb` live in one `d`-dimensional space. Fitters center
//! their training data and record the means in the model; [`fit_method`]
//! additionally applies optional PCA reduction first and folds it into the
//! stored preprocessing so that [`SubspaceModel::project`] always accepts raw
//! features.

mod cca;
mod cca3v;
mod cdfe;
mod gma;
mod pls;
mod serialize;
mod sparse;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use cca::{canonical_correlations, fit_cca};
pub use cca3v::{cca3v_objective, fit_cca3v};
pub use cdfe::{cdfe_objective, fit_cdfe, CdfeConfig};
pub use gma::{fit_gma, GmaConfig, GmaVariant};
pub use pls::{fit_pls, PlsDecomposition};
pub use serialize::{load_model, read_model, save_model, write_model};
pub use sparse::{fit_jfssl, fit_lcfs, jfssl_objective, lcfs_objective, least_squares, SparseCoupledConfig};

use crate::dataset_io::{FeatureMatrix, PairedMultimodalDataset};
use crate::error::{Result, XmsError};
use crate::preprocess::{l2_normalize_columns, ModalityPreprocess, PcaSetting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Cca,
    Pls,
    Blm,
    Gmlda,
    Gmmfa,
    Cdfe,
    Cca3v,
    Lcfs,
    Jfssl,
}

impl MethodKind {
    pub const ALL: [MethodKind; 9] = [
        MethodKind::Cca,
        MethodKind::Pls,
        MethodKind::Blm,
        MethodKind::Gmlda,
        MethodKind::Gmmfa,
        MethodKind::Cdfe,
        MethodKind::Cca3v,
        MethodKind::Lcfs,
        MethodKind::Jfssl,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            MethodKind::Cca => "CCA",
            MethodKind::Pls => "PLS",
            MethodKind::Blm => "BLM",
            MethodKind::Gmlda => "GMLDA",
            MethodKind::Gmmfa => "GMMFA",
            MethodKind::Cdfe => "CDFE",
            MethodKind::Cca3v => "CCA-3V",
            MethodKind::Lcfs => "LCFS",
            MethodKind::Jfssl => "JFSSL",
        }
    }

    pub fn is_supervised(self) -> bool {
        !matches!(self, MethodKind::Cca | MethodKind::Pls | MethodKind::Blm)
    }

    /// LCFS and JFSSL regress onto the label matrix, so their dimension is `c`.
    pub fn has_label_dimension(self) -> bool {
        matches!(self, MethodKind::Lcfs | MethodKind::Jfssl)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for MethodKind {
    type Err = XmsError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        MethodKind::ALL
            .into_iter()
            .find(|m| {
                let name: String = m.display_name().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
                name.to_ascii_lowercase() == key
            })
            .ok_or_else(|| XmsError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    A,
    B,
}

/// Fitted preprocessing for both modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessing {
    /// Scale raw samples to unit norm before `a` / `b`.
    pub l2_normalize: bool,
    pub a: ModalityPreprocess,
    pub b: ModalityPreprocess,
}

/// Learned projections plus everything needed to apply them to raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    /// `d_a × d`.
    pub wa: DMatrix<f64>,
    /// `d_b × d`.
    pub wb: DMatrix<f64>,
    pub method: MethodKind,
    pub preprocessing: Option<Preprocessing>,
    /// Effective scalar hyperparameters, including defaults that were filled in.
    pub hyperparams: BTreeMap<String, f64>,
    /// Vector-valued fit by-products (eigenvalues, objective traces, ...).
    pub diagnostics: BTreeMap<String, Vec<f64>>,
    pub fit_seconds: f64,
}

impl SubspaceModel {
    pub(crate) fn new(
        method: MethodKind,
        wa: DMatrix<f64>,
        wb: DMatrix<f64>,
        mean_a: DVector<f64>,
        mean_b: DVector<f64>,
    ) -> Result<Self> {
        debug_assert_eq!(wa.ncols(), wb.ncols());
        if wa.iter().chain(wb.iter()).any(|v| !v.is_finite()) {
            return Err(XmsError::Numerical(format!("{method} produced non-finite projections")));
        }
        Ok(SubspaceModel {
            wa,
            wb,
            method,
            preprocessing: Some(Preprocessing {
                l2_normalize: false,
                a: ModalityPreprocess::Center { mean: mean_a },
                b: ModalityPreprocess::Center { mean: mean_b },
            }),
            hyperparams: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            fit_seconds: 0.0,
        })
    }

    /// Subspace dimension.
    pub fn dim(&self) -> usize {
        self.wa.ncols()
    }

    pub fn input_dim(&self, modality: Modality) -> usize {
        match (&self.preprocessing, modality) {
            (Some(p), Modality::A) => p.a.input_dim(),
            (Some(p), Modality::B) => p.b.input_dim(),
            (None, Modality::A) => self.wa.nrows(),
            (None, Modality::B) => self.wb.nrows(),
        }
    }

    pub fn objective_trace(&self) -> Option<&[f64]> {
        self.diagnostics.get("objective_trace").map(Vec::as_slice)
    }

    /// `Wᵀ · preprocess(X)`, shape `d × n`.
    pub fn project(&self, x: &FeatureMatrix, modality: Modality) -> Result<FeatureMatrix> {
        let expected = self.input_dim(modality);
        if x.dim() != expected {
            return Err(XmsError::DimensionMismatch {
                context: format!("projection input for modality {modality:?}"),
                expected,
                got: x.dim(),
            });
        }
        let (w, pre) = match modality {
            Modality::A => (&self.wa, self.preprocessing.as_ref().map(|p| &p.a)),
            Modality::B => (&self.wb, self.preprocessing.as_ref().map(|p| &p.b)),
        };
        let normalized;
        let x = if self.preprocessing.as_ref().is_some_and(|p| p.l2_normalize) {
            normalized = l2_normalize_columns(x);
            &normalized
        } else {
            x
        };
        let input = match pre {
            Some(p) => p.apply(x)?,
            None => x.clone(),
        };
        FeatureMatrix::new(w.transpose() * input.values())
    }
}

/// Free-function form of [`SubspaceModel::project`].
pub fn project(model: &SubspaceModel, x: &FeatureMatrix, modality: Modality) -> Result<FeatureMatrix> {
    model.project(x, modality)
}

/// Optional hyperparameters for any fitter. Unset fields take the defaults
/// documented on each fitter's config type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mfa_k_intrinsic: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mfa_k_penalty: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_k: Option<usize>,
    /// Random start of the CDFE solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MethodParams {
    /// Fields set in `other` override those in `self`.
    pub fn merged(&self, other: &MethodParams) -> MethodParams {
        macro_rules! pick {
            ($($f:ident),*) => { MethodParams { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            dim,
            ridge,
            mu,
            alpha,
            beta,
            mfa_k_intrinsic,
            mfa_k_penalty,
            knn_k,
            lambda1,
            lambda2,
            max_iters,
            tol,
            graph_k,
            seed
        )
    }

    pub fn gma_config(&self, variant: GmaVariant) -> GmaConfig {
        let d = GmaConfig::new(variant);
        GmaConfig {
            mu: self.mu.unwrap_or(d.mu),
            beta: self.beta.unwrap_or(d.beta),
            alpha: self.alpha.unwrap_or(d.alpha),
            variant,
            mfa_k_intrinsic: self.mfa_k_intrinsic.unwrap_or(d.mfa_k_intrinsic),
            mfa_k_penalty: self.mfa_k_penalty.unwrap_or(d.mfa_k_penalty),
        }
    }

    pub fn cdfe_config(&self) -> CdfeConfig {
        let d = CdfeConfig::default();
        CdfeConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            knn_k: self.knn_k.unwrap_or(d.knn_k),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol.unwrap_or(d.tol),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    pub fn sparse_config(&self) -> SparseCoupledConfig {
        let d = SparseCoupledConfig::default();
        SparseCoupledConfig {
            lambda1: self.lambda1.unwrap_or(d.lambda1),
            lambda2: self.lambda2.unwrap_or(d.lambda2),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol.unwrap_or(d.tol),
            graph_k: self.graph_k.unwrap_or(d.graph_k),
            eps: d.eps,
        }
    }
}

/// Largest subspace dimension each fitter supports on the given (already
/// preprocessed) training set.
pub fn max_dim(method: MethodKind, da: usize, db: usize, n: usize, c: usize) -> usize {
    match method {
        MethodKind::Cca => da.min(db).min(n.saturating_sub(1)),
        MethodKind::Pls => da.min(db),
        MethodKind::Blm | MethodKind::Gmmfa => da + db,
        MethodKind::Gmlda => da + db,
        MethodKind::Cdfe => da + db,
        MethodKind::Cca3v => da + db + if c >= 2 { c } else { 0 },
        MethodKind::Lcfs | MethodKind::Jfssl => c,
    }
}

/// Default dimension: `min(c-1, 30)` for supervised fitters, 30 otherwise,
/// clamped to [`max_dim`].
pub fn default_dim(method: MethodKind, da: usize, db: usize, n: usize, c: usize) -> usize {
    let want = if method.has_label_dimension() {
        c
    } else if method.is_supervised() {
        c.saturating_sub(1).clamp(1, 30)
    } else {
        30
    };
    want.min(max_dim(method, da, db, n, c)).max(1)
}

/// Options for [`fit_method`] beyond the method hyperparameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    pub pca: PcaSetting,
    /// Count PCA fitting in `fit_seconds` (off: only the subspace fit is timed).
    pub time_includes_pca: bool,
    /// Scale raw samples to unit norm before centering and PCA.
    pub l2_normalize: bool,
}

/// Fits preprocessing on `train`, then the requested method on the
/// preprocessed data. The returned model projects raw features.
pub fn fit_method(
    method: MethodKind,
    train: &PairedMultimodalDataset,
    params: &MethodParams,
    options: FitOptions,
) -> Result<SubspaceModel> {
    let scaled;
    let train = if options.l2_normalize {
        scaled = PairedMultimodalDataset {
            xa: l2_normalize_columns(&train.xa),
            xb: l2_normalize_columns(&train.xb),
            ..train.clone()
        };
        &scaled
    } else {
        train
    };
    let t0 = Instant::now();
    let pre_a = ModalityPreprocess::fit(&train.xa, options.pca)?;
    let pre_b = ModalityPreprocess::fit(&train.xb, options.pca)?;
    let pca_secs = t0.elapsed().as_secs_f64();

    let reduced = PairedMultimodalDataset {
        xa: pre_a.apply(&train.xa)?,
        xb: pre_b.apply(&train.xb)?,
        ..train.clone()
    };

    let t1 = Instant::now();
    let mut model = fit_core(method, &reduced, params)?;
    let fit_secs = t1.elapsed().as_secs_f64();

    let inner = model.preprocessing.take().expect("core fitters record centering");
    model.preprocessing = Some(Preprocessing {
        l2_normalize: options.l2_normalize,
        a: compose(pre_a, inner.a),
        b: compose(pre_b, inner.b),
    });
    model.fit_seconds = if options.time_includes_pca {
        pca_secs + fit_secs
    } else {
        fit_secs
    };
    // a zero reading would break the "strictly positive" timing contract
    model.fit_seconds = model.fit_seconds.max(f64::MIN_POSITIVE);
    if options.l2_normalize {
        model.hyperparams.insert("l2_normalize".into(), 1.0);
    }
    match options.pca.target() {
        None => {}
        Some(crate::preprocess::PcaTarget::Dim(k)) => {
            model.hyperparams.insert("pca_dim".into(), k as f64);
        }
        Some(crate::preprocess::PcaTarget::Energy(r)) => {
            model.hyperparams.insert("pca_energy".into(), r);
        }
    }
    Ok(model)
}

/// Folds a centering step fitted on already-preprocessed data into the outer
/// preprocessing.
fn compose(outer: ModalityPreprocess, inner: ModalityPreprocess) -> ModalityPreprocess {
    let shift = match inner {
        ModalityPreprocess::Center { mean } => mean,
        ModalityPreprocess::Pca(_) => unreachable!("core fitters only center"),
    };
    match outer {
        ModalityPreprocess::Center { mean } => ModalityPreprocess::Center { mean: mean + shift },
        ModalityPreprocess::Pca(mut p) => {
            // basisᵀ(x - m) - s = basisᵀ(x - m - basis·s) for orthonormal basis
            p.mean += &p.basis * shift;
            ModalityPreprocess::Pca(p)
        }
    }
}

/// Dispatches to the individual fitter on centered-or-raw features.
pub fn fit_core(method: MethodKind, train: &PairedMultimodalDataset, params: &MethodParams) -> Result<SubspaceModel> {
    let (da, db, n, c) = (train.xa.dim(), train.xb.dim(), train.len(), train.num_classes);
    let dim = match params.dim {
        Some(d) => d,
        None => default_dim(method, da, db, n, c),
    };
    match method {
        MethodKind::Cca => fit_cca(train, dim, params.ridge),
        MethodKind::Pls => fit_pls(train, dim).map(|(m, _)| m),
        MethodKind::Blm => fit_gma(train, dim, &params.gma_config(GmaVariant::Blm), params.ridge),
        MethodKind::Gmlda => fit_gma(train, dim, &params.gma_config(GmaVariant::Gmlda), params.ridge),
        MethodKind::Gmmfa => fit_gma(train, dim, &params.gma_config(GmaVariant::Gmmfa), params.ridge),
        MethodKind::Cdfe => fit_cdfe(train, dim, &params.cdfe_config()),
        MethodKind::Cca3v => fit_cca3v(train, dim, params.ridge),
        MethodKind::Lcfs => fit_lcfs(train, &params.sparse_config()),
        MethodKind::Jfssl => fit_jfssl(train, &params.sparse_config()),
    }
}

/// Centers both modalities; returns `(Xa_c, Xb_c, mean_a, mean_b)`.
pub(crate) fn centered(train: &PairedMultimodalDataset) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let ma = train.xa.values().column_mean();
    let mb = train.xb.values().column_mean();
    let mut xa = train.xa.values().clone();
    let mut xb = train.xb.values().clone();
    for mut col in xa.column_iter_mut() {
        col -= &ma;
    }
    for mut col in xb.column_iter_mut() {
        col -= &mb;
    }
    (xa, xb, ma, mb)
}

pub(crate) fn check_dim(method: MethodKind, d: usize, max: usize) -> Result<()> {
    if d == 0 || d > max {
        return Err(XmsError::InvalidArgument(format!(
            "{method}: subspace dimension {d} outside 1..={max}"
        )));
    }
    Ok(())
}

pub(crate) fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = (a.nrows(), b.nrows());
    let mut m = DMatrix::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(a);
    m.view_mut((p, p), (q, q)).copy_from(b);
    m
}
