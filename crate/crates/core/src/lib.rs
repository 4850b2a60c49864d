//! Tensor cross-view quadratic discriminant analysis (TXQDA) for person
//! re-identification.
//!
//! Descriptor vectors are cut into parts to form `parts x part_len x persons`
//! tensors per camera view ([`features`]). [`txqda::fit`] alternates XQDA solves
//! ([`xqda`]) over the parts and features modes, then learns a quadratic-form
//! metric on the projected slices. [`matching`] ranks galleries under that metric
//! and [`eval`] runs identity-level k-fold evaluation with CMC curves.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod matching;
pub mod tensor;
pub mod txqda;
pub mod xqda;

pub use error::{Error, Result};
pub use eval::{cmc, kfold_split, run_experiment, synth_dataset, CmcCurve, ExperimentConfig, ExperimentReport, FoldPlan};
pub use features::{fuse_tensors, load_features, split_to_tensor, FeatureFormat, FeatureRecord, FeatureSet, View, ViewTensor};
pub use matching::{distance_matrix, normalize_scores, quadratic_distance, rank_gallery, DistanceMatrix, Normalization};
pub use tensor::{Matrix, ProjectionSet, Tensor3};
pub use txqda::{convergence_check, fit, project, TxqdaConfig, TxqdaModel};
pub use xqda::{cross_covariances, solve_xqda, Alignment, CovariancePair, CrossViewSamples, TargetDim, XqdaSolution};
