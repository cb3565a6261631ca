//! Imputation-free incremental attention learning for tabular data.
//!
//! Classifiers are trained directly on tables with missing cells: missing
//! features are excluded from attention through a per-sample pair of masks,
//! and a single feature-tokenized transformer is trained incrementally over
//! fixed-size, overlapping feature windows ordered by missing rate.
//!
//! The crate is `no_std` (with `alloc`). File formats, the experiment runner
//! and the command line live in the `ifial` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attention;
pub mod baselines;
pub mod data;
mod error;
pub mod eval;
pub(crate) mod linalg;
pub mod model;
pub mod optim;
pub mod partition;
pub mod seed;
pub mod simulate;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};

pub use attention::{build_masks, masked_attention, MaskPair, MaskVector};
pub use baselines::{impute_median, run_method, KPolicy, Method, Preprocessing};
pub use data::{
    compute_stats, standardize, Cell, ColumnRole, Dataset, DatasetView, FeatureKind, FeatureSchema,
    FeatureStats,
};
pub use eval::{
    auc, auc_multiclass, cost_ratio, cross_validate, rank_table, robustness_curve, win_matrix,
    CostMode, CostModel, FoldResult, Scenario, WinMatrix,
};
pub use model::{Activation, ModelConfig, ModelState};
pub use partition::{build_plan, partition_count, partition_view, PartitionPlan};
pub use simulate::{inject, Mechanism, MissingSpec};
pub use train::{predict, train_ifial, Probabilities, SessionLog, TrainConfig};
