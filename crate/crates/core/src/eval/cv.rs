use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_method, Method};
use crate::data::Dataset;
use crate::model::ModelConfig;
use crate::simulate::{inject, Mechanism, MissingSpec};
use crate::train::{NoObserver, TrainConfig};
use crate::{seed, Error, Result};

use super::auc_multiclass;

/// Which missingness a dataset carries during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Data used as loaded, with no missing cells (the reference setting).
    Complete,
    /// Data used as loaded, with its own missing cells.
    Natural,
    Injected {
        mechanism: Mechanism,
        rate: f64,
    },
}

impl Scenario {
    pub fn mechanism_label(&self) -> &'static str {
        match self {
            Scenario::Complete => "none",
            Scenario::Natural => "natural",
            Scenario::Injected { mechanism, .. } => mechanism.as_str(),
        }
    }

    /// Complete or natural, whichever matches `data`.
    pub fn as_loaded(data: &Dataset) -> Self {
        if data.total_missing() > 0 {
            Scenario::Natural
        } else {
            Scenario::Complete
        }
    }

    /// Injected rate, or the overall missing fraction of `data` otherwise.
    pub fn rate(&self, data: &Dataset) -> f64 {
        match *self {
            Scenario::Injected { rate, .. } => rate,
            _ => data.total_missing() as f64 / (data.n() * data.d()) as f64,
        }
    }
}

/// One fold score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub dataset: String,
    pub method: String,
    pub mechanism: String,
    pub rate: f64,
    pub fold: usize,
    pub seed: u64,
    pub auc: f64,
}

/// Applies `scenario` to the complete dataset. Injection happens once per
/// seed, before any split.
pub fn scenario_data(data: &Dataset, scenario: Scenario, seed: u64) -> Result<Dataset> {
    match scenario {
        Scenario::Complete | Scenario::Natural => Ok(data.clone()),
        Scenario::Injected { mechanism, rate } => inject(
            data,
            &MissingSpec::new(mechanism, rate, seed::derive(seed, seed::TAG_INJECT)),
        ),
    }
}

/// Test-row sets of `folds` stratified folds. Each class is shuffled and
/// dealt round-robin, continuing where the previous class stopped, so fold
/// sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config("at least 2 folds are required".into()));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); classes];
    for (r, &y) in labels.iter().enumerate() {
        by_class[y].push(r);
    }
    for (class, rows) in by_class.iter().enumerate() {
        if !rows.is_empty() && rows.len() < folds {
            return Err(Error::TooFewForFolds {
                class,
                count: rows.len(),
                folds,
            });
        }
    }
    let mut rng = seed::rng(seed, seed::TAG_FOLDS);
    let mut out = alloc::vec![Vec::new(); folds];
    let mut next = 0;
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            out[next].push(r);
            next = (next + 1) % folds;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Training rows for test fold `fold`: every row in the other folds.
pub fn training_rows(folds: &[Vec<usize>], fold: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fold)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    rows.sort_unstable();
    rows
}

/// Seed of the training run for (`seed`, `fold`).
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed::derive(seed::derive(seed, seed::TAG_TRAIN), fold as u64)
}

/// Everything identifying one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldTask<'a> {
    pub dataset: &'a str,
    pub method: Method,
    pub scenario: Scenario,
    pub seed: u64,
    pub fold: usize,
}

/// Trains on the other folds of the scenario data and scores fold `task.fold`.
pub fn evaluate_fold(
    task: &FoldTask<'_>,
    data: &Dataset,
    folds: &[Vec<usize>],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<FoldResult> {
    let test = &folds[task.fold];
    let train = training_rows(folds, task.fold);
    let tcfg = TrainConfig {
        seed: fold_seed(task.seed, task.fold),
        ..tcfg.clone()
    };
    let fitted = fit_method(task.method, data, &train, mcfg, &tcfg, &mut NoObserver)?;
    let probs = fitted.predict(data, test)?;
    let labels: Vec<usize> = test.iter().map(|&r| data.labels()[r]).collect();
    Ok(FoldResult {
        dataset: task.dataset.to_string(),
        method: task.method.label(),
        mechanism: task.scenario.mechanism_label().to_string(),
        rate: task.scenario.rate(data),
        fold: task.fold,
        seed: task.seed,
        auc: auc_multiclass(&probs, &labels)?,
    })
}

/// Stratified k-fold evaluation of one method under one scenario, repeated
/// for every seed.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    dataset: &str,
    data: &Dataset,
    method: Method,
    scenario: Scenario,
    folds: usize,
    seeds: &[u64],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<Vec<FoldResult>> {
    let mut out = Vec::with_capacity(folds * seeds.len());
    for &s in seeds {
        let prepared = scenario_data(data, scenario, s)?;
        let fold_rows = stratified_folds(prepared.labels(), folds, s)?;
        for fold in 0..folds {
            let task = FoldTask {
                dataset,
                method,
                scenario,
                seed: s,
                fold,
            };
            out.push(evaluate_fold(&task, &prepared, &fold_rows, mcfg, tcfg)?);
        }
    }
    Ok(out)
}
