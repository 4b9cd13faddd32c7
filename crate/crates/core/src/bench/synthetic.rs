use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset_io::{FeatureMatrix, PairedMultimodalDataset};
use crate::error::{Result, XmsError};

/// Paired two-modality data with planted class structure.
///
/// Each pair shares a class latent (class center plus per-modality
/// within-class spread) and a class-free nuisance latent that is identical in
/// both modalities. The nuisance is the most correlated cross-modal signal
/// but carries no label information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub num_classes: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    pub class_dim: usize,
    pub nuisance_dim: usize,
    /// Standard deviation of the class centers.
    pub class_scale: f64,
    /// Within-class spread, drawn independently per modality.
    pub within_scale: f64,
    pub nuisance_scale: f64,
    /// Isotropic observation noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 400,
            num_classes: 3,
            dim_a: 128,
            dim_b: 128,
            class_dim: 4,
            nuisance_dim: 6,
            class_scale: 1.5,
            within_scale: 1.0,
            nuisance_scale: 2.0,
            noise: 0.3,
            seed: 2017,
        }
    }
}

pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<PairedMultimodalDataset> {
    if spec.n < spec.num_classes || spec.num_classes == 0 || spec.dim_a == 0 || spec.dim_b == 0 {
        return Err(XmsError::Config(
            "synthetic spec needs n >= num_classes >= 1 and positive dims".into(),
        ));
    }
    if spec.class_dim + spec.nuisance_dim == 0 {
        return Err(XmsError::Config(
            "synthetic spec needs at least one latent dimension".into(),
        ));
    }
    let normal = |s: f64| Normal::new(0.0, s.max(0.0)).map_err(|e| XmsError::Config(format!("synthetic spec: {e}")));
    let (std1, class_n, within_n, nuis_n, noise_n) = (
        normal(1.0)?,
        normal(spec.class_scale)?,
        normal(spec.within_scale)?,
        normal(spec.nuisance_scale)?,
        normal(spec.noise)?,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latent = spec.class_dim + spec.nuisance_dim;
    let scale = 1.0 / (latent as f64).sqrt();
    let mix_a = DMatrix::from_fn(spec.dim_a, latent, |_, _| std1.sample(&mut rng) * scale);
    let mix_b = DMatrix::from_fn(spec.dim_b, latent, |_, _| std1.sample(&mut rng) * scale);
    let centers = DMatrix::from_fn(spec.class_dim, spec.num_classes, |_, _| class_n.sample(&mut rng));

    // balanced labels in a shuffled-looking but deterministic order
    let labels: Vec<usize> = (0..spec.n)
        .map(|i| (i * 7 + i / spec.num_classes) % spec.num_classes + 1)
        .collect();
    let mut xa = DMatrix::zeros(spec.dim_a, spec.n);
    let mut xb = DMatrix::zeros(spec.dim_b, spec.n);
    for (i, &l) in labels.iter().enumerate() {
        let nuisance = DVector::from_fn(spec.nuisance_dim, |_, _| nuis_n.sample(&mut rng));
        let mut za = DVector::zeros(latent);
        let mut zb = DVector::zeros(latent);
        for r in 0..spec.class_dim {
            za[r] = centers[(r, l - 1)] + within_n.sample(&mut rng);
            zb[r] = centers[(r, l - 1)] + within_n.sample(&mut rng);
        }
        za.rows_mut(spec.class_dim, spec.nuisance_dim).copy_from(&nuisance);
        zb.rows_mut(spec.class_dim, spec.nuisance_dim).copy_from(&nuisance);
        let ea = DVector::from_fn(spec.dim_a, |_, _| noise_n.sample(&mut rng));
        let eb = DVector::from_fn(spec.dim_b, |_, _| noise_n.sample(&mut rng));
        xa.set_column(i, &(&mix_a * za + ea));
        xb.set_column(i, &(&mix_b * zb + eb));
    }
    PairedMultimodalDataset::new(
        FeatureMatrix::new(xa)?,
        FeatureMatrix::new(xb)?,
        labels,
        spec.num_classes,
    )
}
