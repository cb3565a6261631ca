//! Seeded MCAR and MNAR missingness injection with exact per-feature counts.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{Cell, Dataset, FeatureKind};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Mcar,
    Mnar,
}

impl Mechanism {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mechanism::Mcar => "mcar",
            Mechanism::Mnar => "mnar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSpec {
    pub mechanism: Mechanism,
    pub rate: f64,
    pub seed: u64,
    /// Feature indices to mask; all features when `None`.
    #[serde(default)]
    pub target_features: Option<Vec<usize>>,
}

impl MissingSpec {
    pub fn new(mechanism: Mechanism, rate: f64, seed: u64) -> Self {
        Self {
            mechanism,
            rate,
            seed,
            target_features: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(Error::MissingSpec(format!(
                "rate {} outside (0, 1)",
                self.rate
            )));
        }
        Ok(())
    }

    /// Number of cells masked per feature for `n` rows.
    pub fn count(&self, n: usize) -> usize {
        (libm::round(self.rate * n as f64) as usize).min(n)
    }
}

/// Masks exactly `round(rate * n)` cells of every target feature.
///
/// MCAR picks rows uniformly at random, independently per feature. MNAR is
/// upper-tail self-censoring: the largest numerical values are removed
/// (ties in seeded random order); for categorical features the most frequent
/// category is removed first, then the remaining categories by descending
/// frequency, each in seeded random order. Labels are never touched.
pub fn inject(data: &Dataset, spec: &MissingSpec) -> Result<Dataset> {
    spec.validate()?;
    let targets: Vec<usize> = match &spec.target_features {
        Some(t) => t.clone(),
        None => (0..data.d()).collect(),
    };
    if let Some(&j) = targets.iter().find(|&&j| j >= data.d()) {
        return Err(Error::MissingSpec(format!(
            "feature index {j} out of range"
        )));
    }
    for &j in &targets {
        if data.missing_count(j) > 0 {
            return Err(Error::AlreadyMissing {
                feature: data.feature(j).name.clone(),
            });
        }
    }

    let n = data.n();
    let d = data.d();
    let count = spec.count(n);
    let mut cells = data.cells().to_vec();
    let mut rng = seed::rng(spec.seed, seed::TAG_INJECT);
    for &j in &targets {
        let rows: Vec<usize> = match spec.mechanism {
            Mechanism::Mcar => index::sample(&mut rng, n, count).into_vec(),
            Mechanism::Mnar => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                match data.feature(j).kind {
                    FeatureKind::Numerical => {
                        let value = |r: usize| match data.cell(r, j) {
                            Cell::Num(v) => v,
                            _ => unreachable!("numerical column holds only numbers here"),
                        };
                        // Stable sort keeps the shuffled order among ties.
                        order.sort_by(|&a, &b| value(b).total_cmp(&value(a)));
                    }
                    FeatureKind::Categorical => {
                        let categories = data.feature(j).categories.len();
                        let mut freq = alloc::vec![0usize; categories];
                        let cat = |r: usize| match data.cell(r, j) {
                            Cell::Cat(c) => c as usize,
                            _ => unreachable!("categorical column holds only categories here"),
                        };
                        for r in 0..n {
                            freq[cat(r)] += 1;
                        }
                        // Rank categories by descending frequency, lowest index first on ties.
                        let mut rank: Vec<usize> = (0..categories).collect();
                        rank.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
                        let mut position = alloc::vec![0usize; categories];
                        for (p, &c) in rank.iter().enumerate() {
                            position[c] = p;
                        }
                        order.sort_by_key(|&r| position[cat(r)]);
                    }
                }
                order.truncate(count);
                order
            }
        };
        for r in rows {
            cells[r * d + j] = Cell::Missing;
        }
    }
    Ok(data.with_cells(cells))
}
