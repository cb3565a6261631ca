//! Overlapping fixed-size feature windows ordered by missing rate.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetView, FeatureStats};
use crate::{Error, Result};

/// Closed-form window count: `1 + ceil((d - k) / (k - ceil(k / 2)))` for
/// `d > k`, otherwise 1.
pub fn partition_count(d: usize, k: usize) -> usize {
    if d <= k {
        return 1;
    }
    let step = k - k.div_ceil(2);
    1 + (d - k).div_ceil(step)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub d: usize,
    /// Window size actually used (`min(requested, d)`).
    pub k: usize,
    pub requested_k: usize,
    pub overlap: usize,
    pub step: usize,
    /// Feature indices sorted by ascending missing rate, ties by index.
    pub sorted_features: Vec<usize>,
    pub sorted_rates: Vec<f64>,
    /// Global feature indices of each window, in sorted order.
    pub windows: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn count(&self) -> usize {
        self.windows.len()
    }

    /// Builds a plan directly from per-feature missing rates.
    pub fn from_rates(rates: &[f64], k: usize) -> Result<Self> {
        let d = rates.len();
        if k < 2 {
            return Err(Error::Partition(format!("partition size {k} is below 2")));
        }
        if d < 2 {
            return Err(Error::Partition(format!("{d} features; need at least 2")));
        }
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Partition(format!("missing rate {r} outside [0, 1]")));
        }
        let requested_k = k;
        let k = if k > d {
            log::warn!("partition size {k} exceeds {d} features; using a single window");
            d
        } else {
            k
        };
        let overlap = k.div_ceil(2);
        let step = k - overlap;

        let mut sorted_features: Vec<usize> = (0..d).collect();
        // Stable sort: equal rates keep ascending column order.
        sorted_features.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
        let sorted_rates = sorted_features.iter().map(|&j| rates[j]).collect();

        let mut windows: Vec<Vec<usize>> = Vec::new();
        let mut start = 0;
        loop {
            let begin = start.min(d - k);
            let window = sorted_features[begin..begin + k].to_vec();
            if windows.last() != Some(&window) {
                windows.push(window);
            }
            if begin + k >= d {
                break;
            }
            start += step;
        }
        debug_assert_eq!(windows.len(), partition_count(d, k));
        Ok(Self {
            d,
            k,
            requested_k,
            overlap,
            step,
            sorted_features,
            sorted_rates,
            windows,
        })
    }

    /// Window features in the order they appear in the sorted list.
    pub fn window(&self, i: usize) -> Result<&[usize]> {
        self.windows
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::WindowOutOfRange {
                index: i,
                count: self.count(),
            })
    }
}

/// Sorts features by training-subset missing rate and cuts windows of `k`.
pub fn build_plan(stats: &FeatureStats, k: usize) -> Result<PartitionPlan> {
    PartitionPlan::from_rates(&stats.missing_rates(), k)
}

/// Default partition size: half the feature count, rounded up.
pub fn half_d(d: usize) -> usize {
    d.div_ceil(2).max(2)
}

/// Column-subset view of window `i`.
pub fn partition_view<'a>(
    data: &'a Dataset,
    plan: &PartitionPlan,
    i: usize,
) -> Result<DatasetView<'a>> {
    if plan.d != data.d() {
        return Err(Error::Partition(format!(
            "plan covers {} features, dataset has {}",
            plan.d,
            data.d()
        )));
    }
    data.view(plan.window(i)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Cell, FeatureSchema};
    use alloc::vec;
    use proptest::prelude::*;

    fn positions(plan: &PartitionPlan) -> Vec<Vec<usize>> {
        plan.windows
            .iter()
            .map(|w| {
                w.iter()
                    .map(|f| plan.sorted_features.iter().position(|s| s == f).unwrap())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn eight_features_window_four() {
        let plan = PartitionPlan::from_rates(&[0.0; 8], 4).unwrap();
        assert_eq!(plan.step, 2);
        assert_eq!(plan.count(), 3);
        assert_eq!(
            positions(&plan),
            vec![vec![0, 1, 2, 3], vec![2, 3, 4, 5], vec![4, 5, 6, 7]]
        );
    }

    #[test]
    fn two_features_window_two() {
        let plan = PartitionPlan::from_rates(&[0.5, 0.1], 2).unwrap();
        assert_eq!(plan.count(), 1);
        assert_eq!(plan.windows, vec![vec![1, 0]]);
    }

    #[test]
    fn clamps_final_window() {
        let plan = PartitionPlan::from_rates(&[0.0; 21], 10).unwrap();
        assert_eq!(plan.step, 5);
        assert_eq!(plan.count(), 4);
        let starts: Vec<usize> = positions(&plan).iter().map(|w| w[0]).collect();
        assert_eq!(starts, vec![0, 5, 10, 11]);
        assert_eq!(positions(&plan)[3], (11..21).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_k_gives_single_window() {
        let plan = PartitionPlan::from_rates(&[0.2, 0.1, 0.3], 5).unwrap();
        assert_eq!(plan.count(), 1);
        assert_eq!(plan.k, 3);
        assert_eq!(plan.requested_k, 5);
        assert_eq!(plan.windows[0], vec![1, 0, 2]);
    }

    #[test]
    fn rejects_small_k_and_d() {
        assert!(PartitionPlan::from_rates(&[0.0; 5], 1).is_err());
        assert!(PartitionPlan::from_rates(&[0.0], 2).is_err());
    }

    #[test]
    fn ties_keep_column_order() {
        let plan = PartitionPlan::from_rates(&[0.3, 0.1, 0.3, 0.1], 2).unwrap();
        assert_eq!(plan.sorted_features, vec![1, 3, 0, 2]);
    }

    #[test]
    fn view_projects_window_columns() {
        let features = (0..8)
            .map(|j| FeatureSchema::numerical(alloc::format!("f{j}")))
            .collect();
        let cells = (0..16).map(|i| Cell::Num(i as f64)).collect();
        let data = Dataset::new(
            features,
            FeatureSchema::target("y", ["a", "b"]),
            8,
            cells,
            vec![0, 1],
        )
        .unwrap();
        let mut rates = vec![0.9; 8];
        rates[2] = 0.0;
        rates[5] = 0.1;
        rates[7] = 0.2;
        let plan = PartitionPlan::from_rates(&rates, 3).unwrap();
        let view = partition_view(&data, &plan, 0).unwrap();
        assert_eq!(view.columns(), &[2, 5, 7]);
        assert_eq!(view.cell(1, 0), Cell::Num(10.0));
        assert!(partition_view(&data, &plan, plan.count()).is_err());

        let full = PartitionPlan::from_rates(&[0.0; 8], 8).unwrap();
        let view = partition_view(&data, &full, 0).unwrap();
        assert_eq!(view.columns(), &(0..8).collect::<Vec<_>>()[..]);
    }

    proptest! {
        #[test]
        fn windows_cover_and_overlap(d in 2usize..40, k in 2usize..40, rates in proptest::collection::vec(0.0f64..1.0, 40)) {
            let rates = &rates[..d];
            let plan = PartitionPlan::from_rates(rates, k).unwrap();
            prop_assert_eq!(plan.count(), partition_count(d, k.min(d)));
            let mut seen = vec![false; d];
            for w in &plan.windows {
                prop_assert_eq!(w.len(), k.min(d));
                let mut sorted = w.clone();
                sorted.sort_unstable();
                sorted.dedup();
                prop_assert_eq!(sorted.len(), w.len());
                for &f in w { seen[f] = true; }
            }
            prop_assert!(seen.iter().all(|&s| s));
            for pair in plan.windows.windows(2) {
                prop_assert!(pair[0].iter().any(|f| pair[1].contains(f)));
            }
            prop_assert!(plan.sorted_rates.windows(2).all(|w| w[0] <= w[1]));
            // Leading features of successive windows have non-decreasing rates.
            let leads: Vec<f64> = plan.windows.iter().map(|w| rates[w[0]]).collect();
            prop_assert!(leads.windows(2).all(|w| w[0] <= w[1]));
            // The first window holds the lowest-rate features.
            let max_first = plan.windows[0].iter().map(|&f| rates[f]).fold(f64::MIN, f64::max);
            let outside_min = (0..d).filter(|f| !plan.windows[0].contains(f)).map(|f| rates[f]).fold(f64::MAX, f64::min);
            prop_assert!(max_first <= outside_min);
        }
    }
}
