//! Cross-modal subspace learning and retrieval benchmarking.
//!
//! Nine linear methods learn one projection matrix per modality so that
//! paired samples from two feature spaces (for example photos and
//! free-hand sketches) become comparable under cosine similarity:
//!
//! - unsupervised: CCA, PLS, BLM
//! - supervised: GMLDA, GMMFA, CDFE, CCA-3V, LCFS, JFSSL
//!
//! The [`bench`] module runs the repeated random-split protocol on top of
//! them and summarises MAP / acc@K results with box statistics and
//! Student's t-tests.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dataset_io;
pub mod error;
pub mod methods;
pub mod numerics;
pub mod preprocess;
pub mod retrieval_eval;

pub use dataset_io::{FeatureMatrix, LabelMatrix, PairedMultimodalDataset, SplitPlan};
pub use error::{Result, XmsError};
pub use methods::{MethodKind, Modality, SubspaceModel};
