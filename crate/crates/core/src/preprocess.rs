//! Centering and PCA reduction fitted on training data and applied to
//! held-out data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset_io::FeatureMatrix;
use crate::error::{Result, XmsError};
use crate::numerics::sym_eigen_desc;

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaTarget {
    Dim(usize),
    /// Smallest `k` whose cumulative eigenvalue fraction reaches `ρ ∈ (0, 1]`.
    Energy(f64),
}

/// Preprocessing choice for one fitter, as written in configs.
///
/// `Off` still centers the data; only the PCA reduction is skipped.
///
/// Configs write it as `off`, `default`, `{energy: 0.95}` or `{dim: 64}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", try_from = "PcaRepr")]
pub enum PcaSetting {
    Off,
    Energy(f64),
    Dim(usize),
    #[default]
    #[serde(rename = "default")]
    Default,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PcaRepr {
    Word(String),
    Energy { energy: f64 },
    Dim { dim: usize },
}

impl TryFrom<PcaRepr> for PcaSetting {
    type Error = String;

    fn try_from(r: PcaRepr) -> std::result::Result<Self, String> {
        match r {
            PcaRepr::Word(w) => match w.to_ascii_lowercase().as_str() {
                "off" | "none" => Ok(PcaSetting::Off),
                "default" => Ok(PcaSetting::Default),
                _ => Err(format!("unknown pca setting {w:?}")),
            },
            PcaRepr::Energy { energy } => Ok(PcaSetting::Energy(energy)),
            PcaRepr::Dim { dim } => Ok(PcaSetting::Dim(dim)),
        }
    }
}

impl PcaSetting {
    pub const DEFAULT_ENERGY: f64 = 0.98;

    pub fn target(self) -> Option<PcaTarget> {
        match self {
            PcaSetting::Off => None,
            PcaSetting::Energy(r) => Some(PcaTarget::Energy(r)),
            PcaSetting::Dim(k) => Some(PcaTarget::Dim(k)),
            PcaSetting::Default => Some(PcaTarget::Energy(Self::DEFAULT_ENERGY)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `d × k`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Non-increasing sample-covariance eigenvalues of the kept components.
    pub eigenvalues: DVector<f64>,
    /// Fraction of the total variance retained.
    pub energy: f64,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }
}

fn subtract_mean(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        col -= mean;
    }
    c
}

/// Column mean and the centered matrix.
/// Scales every sample (column) to unit Euclidean norm; zero columns are
/// left as they are.
pub fn l2_normalize_columns(x: &FeatureMatrix) -> FeatureMatrix {
    let mut v = x.values().clone();
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    FeatureMatrix::new(v).expect("scaling keeps values finite")
}

pub fn center_fit(x: &FeatureMatrix) -> (DVector<f64>, FeatureMatrix) {
    let mean = x.values().column_mean();
    let centered = subtract_mean(x.values(), &mean);
    (
        mean,
        FeatureMatrix::new(centered).expect("centering keeps values finite"),
    )
}

/// Fits PCA on the sample covariance (`1/(n-1)` normalization).
pub fn pca_fit(x: &FeatureMatrix, target: PcaTarget) -> Result<PcaModel> {
    let (d, n) = (x.dim(), x.len());
    if n < 2 {
        return Err(XmsError::InvalidArgument("PCA needs at least 2 samples".into()));
    }
    let max_k = d.min(n - 1);
    if let PcaTarget::Dim(k) = target {
        if k == 0 || k > max_k {
            return Err(XmsError::InvalidArgument(format!(
                "PCA dimension {k} outside 1..={max_k} (min(d, n-1))"
            )));
        }
    }
    if let PcaTarget::Energy(r) = target {
        if !(r > 0.0 && r <= 1.0) {
            return Err(XmsError::InvalidArgument(format!(
                "PCA energy must be in (0, 1], got {r}"
            )));
        }
    }

    let mean = x.values().column_mean();
    let xc = subtract_mean(x.values(), &mean);
    let scale = 1.0 / (n as f64 - 1.0);

    let (vals, vecs) = if d <= n {
        let (v, u) = sym_eigen_desc(&(&xc * xc.transpose() * scale));
        (v.rows(0, max_k).into_owned(), u.columns(0, max_k).into_owned())
    } else {
        // Gram route: eigenvectors of XcᵀXc mapped back through Xc.
        let (g, v) = sym_eigen_desc(&(xc.transpose() * &xc));
        let mut u = DMatrix::zeros(d, max_k);
        let mut keep = DVector::zeros(max_k);
        for j in 0..max_k {
            let lam = g[j].max(0.0);
            keep[j] = lam * scale;
            if lam > 0.0 {
                u.set_column(j, &(&xc * v.column(j) / lam.sqrt()));
            }
        }
        crate::numerics::fix_column_signs(&mut u);
        (keep, u)
    };
    let vals = vals.map(|v| v.max(0.0));
    let total: f64 = {
        // trace of the covariance equals the full eigenvalue sum
        xc.norm_squared() * scale
    };

    let k = match target {
        PcaTarget::Dim(k) => k,
        PcaTarget::Energy(rho) => {
            if total <= 0.0 {
                1
            } else {
                let mut acc = 0.0;
                let mut k = max_k;
                for (j, v) in vals.iter().enumerate() {
                    acc += v;
                    if acc / total >= rho - 1e-12 {
                        k = j + 1;
                        break;
                    }
                }
                k
            }
        }
    };
    let eigenvalues = vals.rows(0, k).into_owned();
    let energy = if total > 0.0 { eigenvalues.sum() / total } else { 1.0 };
    Ok(PcaModel {
        mean,
        basis: vecs.columns(0, k).into_owned(),
        eigenvalues,
        energy,
    })
}

/// `basisᵀ · (X - mean)`, shape `k × n`.
pub fn pca_apply(model: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.dim() != model.input_dim() {
        return Err(XmsError::DimensionMismatch {
            context: "PCA input".into(),
            expected: model.input_dim(),
            got: x.dim(),
        });
    }
    FeatureMatrix::new(model.basis.transpose() * subtract_mean(x.values(), &model.mean))
}

/// Fitted preprocessing for one modality.
#[derive(Debug, Clone, PartialEq)]
pub enum ModalityPreprocess {
    Center { mean: DVector<f64> },
    Pca(PcaModel),
}

impl ModalityPreprocess {
    pub fn fit(x: &FeatureMatrix, setting: PcaSetting) -> Result<Self> {
        match setting.target() {
            None => Ok(ModalityPreprocess::Center {
                mean: x.values().column_mean(),
            }),
            Some(t) => Ok(ModalityPreprocess::Pca(pca_fit(x, t)?)),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModalityPreprocess::Center { mean } => mean.len(),
            ModalityPreprocess::Pca(p) => p.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ModalityPreprocess::Center { mean } => mean.len(),
            ModalityPreprocess::Pca(p) => p.k(),
        }
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        match self {
            ModalityPreprocess::Center { mean } => {
                if x.dim() != mean.len() {
                    return Err(XmsError::DimensionMismatch {
                        context: "centering input".into(),
                        expected: mean.len(),
                        got: x.dim(),
                    });
                }
                FeatureMatrix::new(subtract_mean(x.values(), mean))
            }
            ModalityPreprocess::Pca(p) => pca_apply(p, x),
        }
    }
}
