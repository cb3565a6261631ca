//! Seeded two-class Gaussian data for smoke tests and examples.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Cell, Dataset, FeatureSchema};
use crate::{seed, Error, Result};

/// `n` rows, `d` unit-variance numerical features `x0..`, balanced labels.
/// Class 1 is shifted by `separation` on the first `informative` features.
pub fn two_gaussians(
    n: usize,
    d: usize,
    informative: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if informative > d {
        return Err(Error::Config(format!(
            "{informative} informative of {d} features"
        )));
    }
    let mut rng = seed::rng(seed, seed::TAG_INIT);
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    labels.shuffle(&mut rng);
    let mut cells = Vec::with_capacity(n * d);
    for &y in &labels {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            let shift = if j < informative && y == 1 {
                separation
            } else {
                0.0
            };
            cells.push(Cell::Num(z + shift));
        }
    }
    let features = (0..d)
        .map(|j| FeatureSchema::numerical(format!("x{j}")))
        .collect();
    Dataset::new(
        features,
        FeatureSchema::target("y", ["0", "1"]),
        d,
        cells,
        labels,
    )
}
