use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::FoldResult;

/// Totally ordered rate key.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Rate(f64);

impl Eq for Rate {}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

type ScenarioKey = (String, String, Rate);

/// Mean AUC per (dataset, mechanism, rate) scenario and method, over folds
/// and seeds. Errors unless every method appears in every scenario.
type ScenarioMeans = (Vec<String>, BTreeMap<ScenarioKey, Vec<f64>>);

fn scenario_means(results: &[FoldResult]) -> Result<ScenarioMeans> {
    if results.is_empty() {
        return Err(Error::IncompleteGrid("no results".into()));
    }
    let methods: Vec<String> = results
        .iter()
        .map(|r| r.method.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut sums: BTreeMap<ScenarioKey, Vec<(f64, usize)>> = BTreeMap::new();
    for r in results {
        let key = (r.dataset.clone(), r.mechanism.clone(), Rate(r.rate));
        let m = methods
            .iter()
            .position(|m| *m == r.method)
            .unwrap_or_default();
        let cell = &mut sums
            .entry(key)
            .or_insert_with(|| alloc::vec![(0.0, 0); methods.len()])[m];
        cell.0 += r.auc;
        cell.1 += 1;
    }
    let mut means = BTreeMap::new();
    for (key, cells) in sums {
        if let Some(m) = cells.iter().position(|c| c.1 == 0) {
            return Err(Error::IncompleteGrid(format!(
                "method `{}` has no result for dataset `{}`, {} at rate {}",
                methods[m], key.0, key.1, key.2 .0
            )));
        }
        means.insert(key, cells.iter().map(|(s, n)| s / *n as f64).collect());
    }
    Ok((methods, means))
}

/// Ranks by descending value; tied values share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 2) as f64 / 2.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRanks {
    pub dataset: String,
    pub mechanism: String,
    pub rate: f64,
    /// Mean AUC per method, in [`RankTable::methods`] order.
    pub aucs: Vec<f64>,
    pub ranks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub mechanism: Option<String>,
    pub rate: Option<f64>,
    pub method: String,
    pub mean_rank: f64,
    pub std_rank: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub scenarios: Vec<ScenarioRanks>,
    /// Per (mechanism, rate): mean and std of ranks across datasets.
    pub by_rate: Vec<RankSummary>,
    /// Per mechanism, across datasets and rates.
    pub by_mechanism: Vec<RankSummary>,
    pub overall: Vec<RankSummary>,
}

impl RankTable {
    pub fn summary(&self, mechanism: &str, rate: f64, method: &str) -> Option<&RankSummary> {
        self.by_rate.iter().find(|s| {
            s.mechanism.as_deref() == Some(mechanism) && s.rate == Some(rate) && s.method == method
        })
    }
}

/// Ranks methods within every (dataset, mechanism, rate) scenario by mean
/// AUC (1 = best, ties averaged) and summarizes ranks across datasets.
pub fn rank_table(results: &[FoldResult]) -> Result<RankTable> {
    let (methods, means) = scenario_means(results)?;
    let mut scenarios = Vec::with_capacity(means.len());
    let mut groups: BTreeMap<(String, Rate), Vec<Vec<f64>>> = BTreeMap::new();
    let mut mech_groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut all: Vec<Vec<f64>> = alloc::vec![Vec::new(); methods.len()];
    for ((dataset, mechanism, rate), aucs) in means {
        let ranks = average_ranks(&aucs);
        let g = groups
            .entry((mechanism.clone(), rate))
            .or_insert_with(|| alloc::vec![Vec::new(); methods.len()]);
        let mg = mech_groups
            .entry(mechanism.clone())
            .or_insert_with(|| alloc::vec![Vec::new(); methods.len()]);
        for (m, &r) in ranks.iter().enumerate() {
            g[m].push(r);
            mg[m].push(r);
            all[m].push(r);
        }
        scenarios.push(ScenarioRanks {
            dataset,
            mechanism,
            rate: rate.0,
            aucs,
            ranks,
        });
    }
    let summarize = |mechanism: Option<&String>, rate: Option<f64>, per_method: &[Vec<f64>]| {
        per_method
            .iter()
            .zip(&methods)
            .map(|(ranks, method)| {
                let (mean_rank, std_rank) = mean_std(ranks);
                RankSummary {
                    mechanism: mechanism.cloned(),
                    rate,
                    method: method.clone(),
                    mean_rank,
                    std_rank,
                    count: ranks.len(),
                }
            })
            .collect::<Vec<_>>()
    };
    let by_rate = groups
        .iter()
        .flat_map(|((mech, rate), g)| summarize(Some(mech), Some(rate.0), g))
        .collect();
    let by_mechanism = mech_groups
        .iter()
        .flat_map(|(mech, g)| summarize(Some(mech), None, g))
        .collect();
    let overall = summarize(None, None, &all);
    Ok(RankTable {
        methods,
        scenarios,
        by_rate,
        by_mechanism,
        overall,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinMatrix {
    pub methods: Vec<String>,
    /// `wins[i][j]`: fraction of scenarios where method i's mean AUC
    /// strictly exceeds method j's.
    pub wins: Vec<Vec<f64>>,
    pub ties: Vec<Vec<f64>>,
    pub scenarios: usize,
}

impl WinMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.methods.iter().position(|m| m == a)?;
        let j = self.methods.iter().position(|m| m == b)?;
        Some(self.wins[i][j])
    }
}

/// Pairwise strict-win fractions over (dataset, mechanism, rate) scenarios.
/// Ties count for neither method.
pub fn win_matrix(results: &[FoldResult]) -> Result<WinMatrix> {
    let (methods, means) = scenario_means(results)?;
    let m = methods.len();
    let mut wins = alloc::vec![alloc::vec![0usize; m]; m];
    let mut ties = alloc::vec![alloc::vec![0usize; m]; m];
    for aucs in means.values() {
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                if aucs[i] > aucs[j] {
                    wins[i][j] += 1;
                } else if aucs[i] == aucs[j] {
                    ties[i][j] += 1;
                }
            }
        }
    }
    let total = means.len();
    let frac = |c: usize| c as f64 / total as f64;
    let wins = wins
        .iter()
        .map(|r| r.iter().map(|&c| frac(c)).collect())
        .collect();
    let ties = ties
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, &c)| if i == j { 1.0 } else { frac(c) })
                .collect()
        })
        .collect();
    Ok(WinMatrix {
        methods,
        wins,
        ties,
        scenarios: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub mechanism: String,
    pub rate: f64,
    /// Mean over datasets of `100 * AUC / reference AUC`.
    pub percent: f64,
    pub datasets: usize,
}

/// Percentage of each method's complete-data AUC retained at every rate,
/// with a 100% point at rate 0. `reference` holds complete-data results
/// keyed by the same dataset and method names.
pub fn robustness_curve(
    results: &[FoldResult],
    reference: &[FoldResult],
) -> Result<Vec<CurvePoint>> {
    let mut ref_sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in reference {
        let e = ref_sums
            .entry((r.dataset.clone(), r.method.clone()))
            .or_default();
        e.0 += r.auc;
        e.1 += 1;
    }
    let mut sums: BTreeMap<(String, String, Rate, String), (f64, usize)> = BTreeMap::new();
    for r in results {
        let e = sums
            .entry((
                r.method.clone(),
                r.mechanism.clone(),
                Rate(r.rate),
                r.dataset.clone(),
            ))
            .or_default();
        e.0 += r.auc;
        e.1 += 1;
    }
    let mut curve: BTreeMap<(String, String, Rate), Vec<f64>> = BTreeMap::new();
    for ((method, mechanism, rate, dataset), (s, n)) in sums {
        let Some(&(rs, rn)) = ref_sums.get(&(dataset.clone(), method.clone())) else {
            return Err(Error::MissingReference(format!(
                "no complete-data result for `{method}` on `{dataset}`"
            )));
        };
        let reference = rs / rn as f64;
        if reference.is_nan() || reference <= 0.0 {
            return Err(Error::MissingReference(format!(
                "reference AUC of `{method}` on `{dataset}` is zero"
            )));
        }
        curve
            .entry((method.clone(), mechanism.clone(), Rate(0.0)))
            .or_default();
        curve
            .entry((method, mechanism, rate))
            .or_default()
            .push(100.0 * (s / n as f64) / reference);
    }
    Ok(curve
        .into_iter()
        .map(|((method, mechanism, rate), values)| {
            let (percent, datasets) = if rate.0 == 0.0 && values.is_empty() {
                (100.0, 0)
            } else {
                (mean_std(&values).0, values.len())
            };
            CurvePoint {
                method,
                mechanism: mechanism.to_string(),
                rate: rate.0,
                percent,
                datasets,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn result(dataset: &str, method: &str, rate: f64, auc: f64) -> FoldResult {
        FoldResult {
            dataset: dataset.into(),
            method: method.into(),
            mechanism: "mcar".into(),
            rate,
            fold: 0,
            seed: 0,
            auc,
        }
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[0.9, 0.8, 0.7]), vec![1.0, 2.0, 3.0]);
        assert_eq!(average_ranks(&[0.8, 0.8]), vec![1.5, 1.5]);
        assert_eq!(
            average_ranks(&[0.5, 0.9, 0.5, 0.5]),
            vec![3.0, 1.0, 3.0, 3.0]
        );
    }

    #[test]
    fn rank_table_mean_and_sample_std() {
        let results = vec![
            result("d1", "A", 0.2, 0.9),
            result("d1", "B", 0.2, 0.8),
            result("d2", "A", 0.2, 0.7),
            result("d2", "B", 0.2, 0.8),
        ];
        let t = rank_table(&results).unwrap();
        let a = t.summary("mcar", 0.2, "A").unwrap();
        assert_eq!(a.mean_rank, 1.5);
        assert!((a.std_rank - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(t.overall.len(), 2);
    }

    #[test]
    fn rank_table_rejects_incomplete_grid() {
        let results = vec![result("d1", "A", 0.2, 0.9), result("d2", "B", 0.2, 0.8)];
        assert!(matches!(
            rank_table(&results),
            Err(Error::IncompleteGrid(_))
        ));
        assert!(matches!(
            win_matrix(&results),
            Err(Error::IncompleteGrid(_))
        ));
    }

    #[test]
    fn win_matrix_excludes_ties() {
        let results = vec![
            result("d1", "A", 0.2, 0.9),
            result("d1", "B", 0.2, 0.8),
            result("d2", "A", 0.2, 0.7),
            result("d2", "B", 0.2, 0.7),
        ];
        let w = win_matrix(&results).unwrap();
        assert_eq!(w.get("A", "B"), Some(0.5));
        assert_eq!(w.get("B", "A"), Some(0.0));
        assert_eq!(w.ties[0][1], 0.5);
        assert_eq!(w.scenarios, 2);
    }

    #[test]
    fn robustness_halving() {
        let reference = vec![result("d1", "A", 0.0, 0.8)];
        let results = vec![result("d1", "A", 0.3, 0.4)];
        let c = robustness_curve(&results, &reference).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].rate, c[0].percent), (0.0, 100.0));
        assert_eq!((c[1].rate, c[1].percent), (0.3, 50.0));
        assert!(matches!(
            robustness_curve(&results, &[]),
            Err(Error::MissingReference(_))
        ));
    }

    proptest! {
        #[test]
        fn scenario_ranks_sum_to_triangle(aucs in proptest::collection::vec(0u8..5, 2..7)) {
            let results: Vec<FoldResult> = aucs
                .iter()
                .enumerate()
                .map(|(m, &a)| result("d", &alloc::format!("m{m}"), 0.1, a as f64 / 4.0))
                .collect();
            let t = rank_table(&results).unwrap();
            let m = aucs.len() as f64;
            let sum: f64 = t.scenarios[0].ranks.iter().sum();
            prop_assert!((sum - m * (m + 1.0) / 2.0).abs() < 1e-12);
            let w = win_matrix(&results).unwrap();
            for i in 0..aucs.len() {
                prop_assert_eq!(w.wins[i][i], 0.0);
                for j in 0..aucs.len() {
                    prop_assert!(w.wins[i][j] + w.wins[j][i] <= 1.0);
                    if i != j {
                        prop_assert!((w.wins[i][j] + w.wins[j][i] + w.ties[i][j] - 1.0).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn monotone_decay_gives_monotone_curve(decay in proptest::collection::vec(0.0f64..0.1, 5)) {
            let reference = vec![result("d", "A", 0.0, 0.9)];
            let mut auc = 0.9;
            let mut results = Vec::new();
            for (i, step) in decay.iter().enumerate() {
                auc -= step;
                results.push(result("d", "A", (i + 1) as f64 / 10.0, auc));
            }
            let c = robustness_curve(&results, &reference).unwrap();
            prop_assert!(c.windows(2).all(|w| w[1].percent <= w[0].percent));
        }
    }
}
