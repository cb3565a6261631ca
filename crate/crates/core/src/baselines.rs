//! The three compared methods: incremental training over partition windows,
//! attention masking over all features at once, and median/mode imputation
//! feeding the same transformer.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{compute_stats, Cell, Dataset, FeatureKind, FeatureStats};
use crate::model::{ModelConfig, ModelState};
use crate::partition::{half_d, PartitionPlan};
use crate::train::{
    predict, train_ifial_observed, NoObserver, Probabilities, SessionLog, TrainConfig,
    TrainObserver,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPolicy {
    Explicit(usize),
    /// `ceil(d / 2)`.
    HalfD,
}

impl KPolicy {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            KPolicy::Explicit(k) => k,
            KPolicy::HalfD => half_d(d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ifial { k: KPolicy },
    AmFtt,
    MedianFtt,
}

impl Method {
    /// Stable label: `ifial` (half-d windows), `ifial_k<N>`, `am_ftt`, `median_ftt`.
    pub fn label(&self) -> String {
        match self {
            Method::Ifial { k: KPolicy::HalfD } => "ifial".into(),
            Method::Ifial {
                k: KPolicy::Explicit(k),
            } => format!("ifial_k{k}"),
            Method::AmFtt => "am_ftt".into(),
            Method::MedianFtt => "median_ftt".into(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ifial" => Ok(Method::Ifial { k: KPolicy::HalfD }),
            "am_ftt" => Ok(Method::AmFtt),
            "median_ftt" => Ok(Method::MedianFtt),
            _ => s
                .strip_prefix("ifial_k")
                .and_then(|k| k.parse().ok())
                .map(|k| Method::Ifial {
                    k: KPolicy::Explicit(k),
                })
                .ok_or_else(|| Error::Config(format!("unknown method `{s}`"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|e: Error| serde::de::Error::custom(e.to_string()))
    }
}

/// Fill value for one feature, on the standardized scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    Num(f64),
    Cat(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTransform {
    pub name: String,
    pub kind: FeatureKind,
    pub mean: f64,
    pub std: f64,
    pub fill: Option<Fill>,
}

/// Transform fitted on training rows and applied to every row: numerical
/// standardization and, for the imputation baseline, median/mode filling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub features: Vec<FeatureTransform>,
}

impl Preprocessing {
    pub fn fit(data: &Dataset, train_rows: &[usize], impute: bool) -> Result<Self> {
        let stats = compute_stats(data, train_rows)?;
        let features = data
            .features()
            .iter()
            .zip(&stats.features)
            .map(|(schema, s)| FeatureTransform {
                name: schema.name.clone(),
                kind: schema.kind,
                mean: s.mean,
                std: s.std,
                fill: impute.then(|| match schema.kind {
                    FeatureKind::Numerical => Fill::Num(match s.median {
                        Some(m) => (m - s.mean) / s.std,
                        None => {
                            log::warn!(
                                "`{}` has no observed training values; filling 0",
                                schema.name
                            );
                            0.0
                        }
                    }),
                    FeatureKind::Categorical => Fill::Cat(s.mode.unwrap_or_else(|| {
                        log::warn!(
                            "`{}` has no observed training values; filling category 0",
                            schema.name
                        );
                        0
                    })),
                }),
            })
            .collect();
        Ok(Self { features })
    }

    /// Applies the transform to every row. Features are matched by name;
    /// columns without a fitted transform pass through unchanged.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let d = data.d();
        let by_column: Vec<Option<&FeatureTransform>> = data
            .features()
            .iter()
            .map(|schema| {
                let t = self.features.iter().find(|t| t.name == schema.name);
                if t.is_none() {
                    log::warn!("no fitted transform for `{}`", schema.name);
                }
                t
            })
            .collect();
        for (schema, t) in data.features().iter().zip(&by_column) {
            if let Some(t) = t {
                if t.kind != schema.kind {
                    return Err(Error::Schema(format!(
                        "feature `{}` changed kind",
                        schema.name
                    )));
                }
            }
        }
        let cells = data
            .cells()
            .iter()
            .enumerate()
            .map(|(i, &cell)| match (cell, by_column[i % d]) {
                (Cell::Num(v), Some(t)) => Cell::Num((v - t.mean) / t.std),
                (Cell::Missing, Some(t)) => match t.fill {
                    Some(Fill::Num(v)) => Cell::Num(v),
                    Some(Fill::Cat(c)) => Cell::Cat(c),
                    None => Cell::Missing,
                },
                (cell, _) => cell,
            })
            .collect();
        Ok(data.with_cells(cells))
    }

    pub fn imputes(&self) -> bool {
        self.features.iter().any(|t| t.fill.is_some())
    }
}

/// Replaces missing numerical cells by the median and missing categorical
/// cells by the mode of `stats`. Features without observed values get 0 or
/// category 0.
pub fn impute_median(data: &Dataset, stats: &FeatureStats) -> Dataset {
    let d = data.d();
    let cells = data
        .cells()
        .iter()
        .enumerate()
        .map(|(i, &cell)| {
            if !cell.is_missing() {
                return cell;
            }
            let s = &stats.features[i % d];
            match s.kind {
                FeatureKind::Numerical => Cell::Num(s.median.unwrap_or_else(|| {
                    log::warn!(
                        "`{}` has no observed values; imputing 0",
                        data.feature(i % d).name
                    );
                    0.0
                })),
                FeatureKind::Categorical => Cell::Cat(s.mode.unwrap_or(0)),
            }
        })
        .collect();
    data.with_cells(cells)
}

/// A trained method ready to score rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedMethod {
    pub method: Method,
    pub preprocessing: Preprocessing,
    pub plan: PartitionPlan,
    pub state: ModelState,
    pub sessions: Vec<SessionLog>,
}

impl FittedMethod {
    /// Preprocesses `data` with the fitted transform and predicts `rows`.
    pub fn predict(&self, data: &Dataset, rows: &[usize]) -> Result<Probabilities> {
        let prepared = self.preprocessing.apply(data)?;
        predict(&self.state, &prepared, rows)
    }
}

/// Fits `method` on `train_rows` only.
pub fn fit_method(
    method: Method,
    data: &Dataset,
    train_rows: &[usize],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<FittedMethod> {
    let mcfg = ModelConfig {
        class_count: data.class_count(),
        ..mcfg.clone()
    };
    let impute = method == Method::MedianFtt;
    let preprocessing = Preprocessing::fit(data, train_rows, impute)?;
    let prepared = preprocessing.apply(data)?;
    let k = match method {
        Method::Ifial { k } => k.resolve(data.d()),
        Method::AmFtt | Method::MedianFtt => data.d(),
    };
    let stats = compute_stats(&prepared, train_rows)?;
    let plan = PartitionPlan::from_rates(&stats.missing_rates(), k)?;
    let (state, sessions) =
        train_ifial_observed(&prepared, train_rows, &plan, &mcfg, tcfg, observer)?;
    Ok(FittedMethod {
        method,
        preprocessing,
        plan,
        state,
        sessions,
    })
}

/// Trains on `train_rows` and returns probabilities for `test_rows`.
pub fn run_method(
    method: Method,
    data: &Dataset,
    train_rows: &[usize],
    test_rows: &[usize],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<Probabilities> {
    let mut seen = alloc::vec![false; data.n()];
    for &r in train_rows {
        if r >= data.n() {
            return Err(Error::RowOutOfRange {
                row: r,
                n: data.n(),
            });
        }
        seen[r] = true;
    }
    if let Some(&r) = test_rows.iter().find(|&&r| r < data.n() && seen[r]) {
        return Err(Error::Data(format!(
            "row {r} is in both train and test sets"
        )));
    }
    fit_method(method, data, train_rows, mcfg, tcfg, &mut NoObserver)?.predict(data, test_rows)
}
