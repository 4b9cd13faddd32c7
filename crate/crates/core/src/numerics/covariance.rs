use nalgebra::DMatrix;

use crate::error::{Result, XmsError};

/// Empirical auto- and cross-covariances of two centered modalities.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub saa: DMatrix<f64>,
    pub sbb: DMatrix<f64>,
    /// `Xa·Xbᵀ / (n-1)`; the b→a cross-covariance is its transpose.
    pub sab: DMatrix<f64>,
}

/// Covariances with `1/(n-1)` normalization. Inputs must already be centered.
pub fn covariances(xa: &DMatrix<f64>, xb: &DMatrix<f64>) -> Result<CovarianceSet> {
    let n = xa.ncols();
    if xb.ncols() != n {
        return Err(XmsError::PairCountMismatch {
            detail: format!("{} vs {} samples", n, xb.ncols()),
        });
    }
    if n < 2 {
        return Err(XmsError::InvalidArgument("covariances need n >= 2".into()));
    }
    let s = 1.0 / (n as f64 - 1.0);
    Ok(CovarianceSet {
        saa: super::symmetrize(&(xa * xa.transpose())) * s,
        sbb: super::symmetrize(&(xb * xb.transpose())) * s,
        sab: xa * xb.transpose() * s,
    })
}

/// Within/between-class scatter and class means of one modality.
#[derive(Debug, Clone)]
pub struct ScatterSet {
    pub within: DMatrix<f64>,
    pub between: DMatrix<f64>,
    /// `d × c`, column `k - 1` is the mean of class `k`.
    pub class_means: DMatrix<f64>,
}

/// Unnormalized scatter sums:
/// `S_W = Σ_k Σ_{i∈k} (x_i - m_k)(x_i - m_k)ᵀ`,
/// `S_B = Σ_k n_k (m_k - m)(m_k - m)ᵀ`.
pub fn scatter(x: &DMatrix<f64>, labels: &[usize], num_classes: usize) -> Result<ScatterSet> {
    let (d, n) = x.shape();
    if labels.len() != n {
        return Err(XmsError::PairCountMismatch {
            detail: format!("{} labels for {} samples", labels.len(), n),
        });
    }
    let mut counts = vec![0usize; num_classes];
    let mut means = DMatrix::zeros(d, num_classes);
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || l > num_classes {
            return Err(XmsError::LabelOutOfRange {
                label: l as i64,
                num_classes,
            });
        }
        counts[l - 1] += 1;
        let mut col = means.column_mut(l - 1);
        col += x.column(i);
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(XmsError::EmptyClass { class: k + 1 });
    }
    for (k, &cnt) in counts.iter().enumerate() {
        means.column_mut(k).scale_mut(1.0 / cnt as f64);
    }
    let total_mean = x.column_mean();

    let mut centered = x.clone();
    for (i, &l) in labels.iter().enumerate() {
        let mut col = centered.column_mut(i);
        col -= means.column(l - 1);
    }
    let within = super::symmetrize(&(&centered * centered.transpose()));

    let mut between_factor = DMatrix::zeros(d, num_classes);
    for (k, &count) in counts.iter().enumerate().take(num_classes) {
        let diff = means.column(k) - &total_mean;
        between_factor.set_column(k, &(diff * (count as f64).sqrt()));
    }
    let between = super::symmetrize(&(&between_factor * between_factor.transpose()));

    Ok(ScatterSet {
        within,
        between,
        class_means: means,
    })
}
