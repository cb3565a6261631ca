use alloc::vec::Vec;

use crate::train::Probabilities;
use crate::{Error, Result};

/// Area under the ROC curve via the Mann-Whitney statistic: concordant
/// pairs plus half the tied pairs, over all positive-negative pairs.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Shape("one label per score".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let n1 = positive.iter().filter(|&&p| p).count();
    let n0 = positive.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, with tied groups sharing their mean rank.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1; twice their mean is i + j + 2.
        let twice_mean = (i + j + 2) as u128;
        let pos = order[i..=j].iter().filter(|&&r| positive[r]).count() as u128;
        twice_rank_sum += pos * twice_mean;
        i = j + 1;
    }
    let (n1, n0) = (n1 as u128, n0 as u128);
    let twice_u = twice_rank_sum - n1 * (n1 + 1);
    Ok(twice_u as f64 / (2 * n1 * n0) as f64)
}

/// Macro one-vs-rest AUC over the classes present in `labels`. With two
/// classes this is the binary AUC of column 1.
pub fn auc_multiclass(probs: &Probabilities, labels: &[usize]) -> Result<f64> {
    let c = probs.class_count;
    if labels.len() != probs.rows {
        return Err(Error::Shape("one label per probability row".into()));
    }
    if labels.iter().any(|&y| y >= c) {
        return Err(Error::Data("label outside the class range".into()));
    }
    if c == 2 {
        let positive: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        return auc(&probs.column(1), &positive);
    }
    let present: Vec<usize> = (0..c).filter(|k| labels.contains(k)).collect();
    if present.len() < 2 {
        return Err(Error::SingleClass);
    }
    let mut total = 0.0;
    for &k in &present {
        let positive: Vec<bool> = labels.iter().map(|&y| y == k).collect();
        total += auc(&probs.column(k), &positive)?;
    }
    Ok(total / present.len() as f64)
}
