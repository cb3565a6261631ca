//! Evaluation protocol: AUC, stratified cross-validation, rank tables, win
//! matrices, robustness curves and the forward-cost model.

mod cost;
mod cv;
mod metrics;
mod report;

pub use cost::{cost_curve, cost_ratio, CostMode, CostModel, CostPoint};
pub use cv::{
    cross_validate, evaluate_fold, fold_seed, scenario_data, stratified_folds, training_rows,
    FoldResult, FoldTask, Scenario,
};
pub use metrics::{auc, auc_multiclass};
pub use report::{
    average_ranks, rank_table, robustness_curve, win_matrix, CurvePoint, RankSummary, RankTable,
    ScenarioRanks, WinMatrix,
};
