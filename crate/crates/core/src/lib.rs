//! Hybrid principal components analysis of region-referenced longitudinal
//! functional data, pooled function-on-function regression, and selection of
//! the number of hybrid components by prediction error.
//!
//! The pipeline: [`hpca::fit_hpca`] decomposes a [`HybridTensor`] into product
//! components, [`hpca::reconstruct`] rebuilds it from a prefix of them,
//! [`pooling::pool_to_curve`] collapses each subject to one curve over `s`,
//! [`fofreg::fit_fof`] regresses those curves on functional predictors and
//! [`selection::select_num_components`] chooses the prefix size. The
//! [`simgen`] module generates synthetic studies.

pub mod error;
pub mod fofreg;
pub mod hpca;
pub mod io;

pub mod linalg;
pub mod metrics;
pub mod pooling;
pub mod selection;
pub mod simgen;

pub mod tensorcore;

pub use error::{Error, Result};
pub use fofreg::{FofConfig, FofModel};
pub use hpca::{HpcaConfig, HpcaModel};
pub use selection::SelectionResult;
pub use tensorcore::{FunctionalSample, Grid1D, HybridTensor};
