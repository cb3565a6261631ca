//! Tabular datasets with explicit per-cell missingness.
//!
//! A missing cell is its own variant of [`Cell`]; no numeric sentinel ever
//! stands in for it, so an observed `0.0` can never be confused with a
//! missing entry.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Feature,
    Target,
}

/// One column of a table. Target columns are categorical; their categories
/// are the class names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub categories: Vec<String>,
    pub role: ColumnRole,
}

impl FeatureSchema {
    pub fn numerical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numerical,
            categories: Vec::new(),
            role: ColumnRole::Feature,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            role: ColumnRole::Feature,
        }
    }

    pub fn target<S: Into<String>>(
        name: impl Into<String>,
        classes: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: classes.into_iter().map(Into::into).collect(),
            role: ColumnRole::Target,
        }
    }

    pub fn category_index(&self, value: &str) -> Option<u32> {
        self.categories
            .iter()
            .position(|c| c == value)
            .map(|i| i as u32)
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Schema("column with an empty name".into()));
        }
        if self.kind == FeatureKind::Categorical {
            if self.categories.is_empty() {
                return Err(Error::Schema(format!("`{}` has no categories", self.name)));
            }
            for (i, c) in self.categories.iter().enumerate() {
                if self.categories[..i].contains(c) {
                    return Err(Error::Schema(format!(
                        "`{}` lists category `{c}` twice",
                        self.name
                    )));
                }
            }
        } else if !self.categories.is_empty() {
            return Err(Error::Schema(format!(
                "numerical column `{}` lists categories",
                self.name
            )));
        }
        if self.role == ColumnRole::Target && self.kind != FeatureKind::Categorical {
            return Err(Error::Schema(format!(
                "target `{}` must be categorical",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Num(f64),
    Cat(u32),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// `n` samples over `d` feature columns plus a complete label column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<FeatureSchema>,
    target: FeatureSchema,
    /// Position of the target among all columns, kept for writing tables
    /// back out in their original column order.
    target_position: usize,
    cells: Vec<Cell>,
    labels: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from row-major `cells` (`labels.len() x features.len()`).
    pub fn new(
        features: Vec<FeatureSchema>,
        target: FeatureSchema,
        target_position: usize,
        cells: Vec<Cell>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        for f in &features {
            f.validate()?;
            if f.role != ColumnRole::Feature {
                return Err(Error::Schema(format!(
                    "`{}` is not a feature column",
                    f.name
                )));
            }
        }
        target.validate()?;
        if target.role != ColumnRole::Target {
            return Err(Error::Schema(format!(
                "`{}` is not a target column",
                target.name
            )));
        }
        if target.categories.len() < 2 {
            return Err(Error::Schema("target needs at least two classes".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if f.name == target.name || features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Schema(format!("duplicate column name `{}`", f.name)));
            }
        }
        if target_position > features.len() {
            return Err(Error::Schema("target position past the last column".into()));
        }
        let d = features.len();
        if cells.len() != labels.len() * d {
            return Err(Error::Data(format!(
                "{} cells for {} rows x {} features",
                cells.len(),
                labels.len(),
                d
            )));
        }
        let class_count = target.categories.len();
        if let Some((row, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= class_count) {
            return Err(Error::Data(format!(
                "label {y} in row {row} outside [0, {class_count})"
            )));
        }
        for (idx, cell) in cells.iter().enumerate() {
            if d > 0 {
                check_cell_kind(&features[idx % d], cell)
                    .map_err(|msg| Error::Data(format!("row {}: {msg}", idx / d)))?;
            }
        }
        Ok(Self {
            features,
            target,
            target_position,
            cells,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.features.len()
    }

    pub fn class_count(&self) -> usize {
        self.target.categories.len()
    }

    pub fn features(&self) -> &[FeatureSchema] {
        &self.features
    }

    pub fn feature(&self, j: usize) -> &FeatureSchema {
        &self.features[j]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn target(&self) -> &FeatureSchema {
        &self.target
    }

    pub fn target_position(&self) -> usize {
        self.target_position
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.d() + col]
    }

    pub fn row(&self, row: usize) -> &[Cell] {
        let d = self.d();
        &self.cells[row * d..(row + 1) * d]
    }

    /// Overwrites a single cell. The cell kind must match the column kind.
    pub fn set_cell(&mut self, row: usize, col: usize, cell: Cell) -> Result<()> {
        if row >= self.n() {
            return Err(Error::RowOutOfRange { row, n: self.n() });
        }
        if col >= self.d() {
            return Err(Error::Data(format!("column {col} out of range")));
        }
        check_cell_kind(&self.features[col], &cell).map_err(Error::Data)?;
        let d = self.d();
        self.cells[row * d + col] = cell;
        Ok(())
    }

    pub fn missing_count(&self, col: usize) -> usize {
        (0..self.n())
            .filter(|&r| self.cell(r, col).is_missing())
            .count()
    }

    pub fn total_missing(&self) -> usize {
        self.cells.iter().filter(|c| c.is_missing()).count()
    }

    /// View over every feature column in schema order.
    pub fn full_view(&self) -> DatasetView<'_> {
        DatasetView {
            data: self,
            columns: (0..self.d()).collect(),
        }
    }

    /// View over an arbitrary ordered column subset.
    pub fn view(&self, columns: &[usize]) -> Result<DatasetView<'_>> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.d()) {
            return Err(Error::Data(format!("column {c} out of range")));
        }
        Ok(DatasetView {
            data: self,
            columns: columns.to_vec(),
        })
    }

    pub(crate) fn with_cells(&self, cells: Vec<Cell>) -> Self {
        debug_assert_eq!(cells.len(), self.cells.len());
        Self {
            features: self.features.clone(),
            target: self.target.clone(),
            target_position: self.target_position,
            cells,
            labels: self.labels.clone(),
        }
    }

    pub(crate) fn cells(&self) -> &[Cell] {
        &self.cells
    }
}

fn check_cell_kind(schema: &FeatureSchema, cell: &Cell) -> core::result::Result<(), String> {
    match (schema.kind, cell) {
        (_, Cell::Missing) | (FeatureKind::Numerical, Cell::Num(_)) => Ok(()),
        (FeatureKind::Categorical, Cell::Cat(c)) if (*c as usize) < schema.categories.len() => {
            Ok(())
        }
        (FeatureKind::Categorical, Cell::Cat(c)) => Err(format!(
            "category index {c} out of range for `{}`",
            schema.name
        )),
        _ => Err(format!("cell kind does not match column `{}`", schema.name)),
    }
}

/// A column subset of a dataset. Only the column index list is owned; cells
/// and labels are borrowed.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    data: &'a Dataset,
    columns: Vec<usize>,
}

impl<'a> DatasetView<'a> {
    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    /// Global column indices, in view order.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn feature(&self, j: usize) -> &'a FeatureSchema {
        &self.data.features[self.columns[j]]
    }

    pub fn cell(&self, row: usize, j: usize) -> Cell {
        self.data.cell(row, self.columns[j])
    }

    pub fn labels(&self) -> &'a [usize] {
        &self.data.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub kind: FeatureKind,
    pub missing_rate: f64,
    pub observed: usize,
    /// Mean of observed numerical values (0 when none observed).
    pub mean: f64,
    /// Sample standard deviation; 1 when fewer than two values are observed
    /// or the values are constant.
    pub std: f64,
    pub median: Option<f64>,
    /// Most frequent observed category, lowest index on ties.
    pub mode: Option<u32>,
}

/// Per-feature statistics over a row subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub rows: usize,
    pub features: Vec<FeatureStat>,
}

impl FeatureStats {
    pub fn missing_rates(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.missing_rate).collect()
    }
}

/// Computes statistics over `rows` only; cells outside the subset are never
/// read.
pub fn compute_stats(data: &Dataset, rows: &[usize]) -> Result<FeatureStats> {
    if rows.is_empty() {
        return Err(Error::EmptySubset);
    }
    if let Some(&row) = rows.iter().find(|&&r| r >= data.n()) {
        return Err(Error::RowOutOfRange { row, n: data.n() });
    }
    let features = (0..data.d()).map(|j| column_stat(data, rows, j)).collect();
    Ok(FeatureStats {
        rows: rows.len(),
        features,
    })
}

fn column_stat(data: &Dataset, rows: &[usize], j: usize) -> FeatureStat {
    let schema = data.feature(j);
    let mut missing = 0usize;
    let mut values = Vec::new();
    let mut counts = vec![0usize; schema.categories.len()];
    for &r in rows {
        match data.cell(r, j) {
            Cell::Missing => missing += 1,
            Cell::Num(v) => values.push(v),
            Cell::Cat(c) => counts[c as usize] += 1,
        }
    }
    let observed = rows.len() - missing;
    let missing_rate = missing as f64 / rows.len() as f64;
    match schema.kind {
        FeatureKind::Numerical => {
            let (mean, std) = mean_std(&values);
            FeatureStat {
                kind: schema.kind,
                missing_rate,
                observed,
                mean,
                std,
                median: median(&mut values),
                mode: None,
            }
        }
        FeatureKind::Categorical => {
            let mode = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i as u32);
            FeatureStat {
                kind: schema.kind,
                missing_rate,
                observed,
                mean: 0.0,
                std: 1.0,
                median: None,
                mode,
            }
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 1.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 1.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let std = libm::sqrt(ss / (n - 1.0));
    // A constant column would otherwise divide by zero.
    (mean, if std > 0.0 { std } else { 1.0 })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// Replaces observed numerical cells by `(x - mean) / std`.
pub fn standardize(data: &Dataset, stats: &FeatureStats) -> Dataset {
    let d = data.d();
    let cells = data
        .cells()
        .iter()
        .enumerate()
        .map(|(idx, cell)| match *cell {
            Cell::Num(v) => {
                let s = &stats.features[idx % d];
                Cell::Num((v - s.mean) / s.std)
            }
            other => other,
        })
        .collect();
    data.with_cells(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let features = vec![
            FeatureSchema::numerical("age"),
            FeatureSchema::categorical("color", ["red", "green", "blue"]),
        ];
        let cells = vec![
            Cell::Num(2.0),
            Cell::Cat(0),
            Cell::Missing,
            Cell::Cat(2),
            Cell::Num(4.0),
            Cell::Missing,
        ];
        Dataset::new(
            features,
            FeatureSchema::target("y", ["0", "1"]),
            2,
            cells,
            vec![0, 1, 0],
        )
        .unwrap()
    }

    #[test]
    fn sample_std_of_two_values() {
        let data = small();
        let stats = compute_stats(&data, &[0, 1, 2]).unwrap();
        let age = &stats.features[0];
        assert_eq!(age.mean, 3.0);
        assert!((age.std - core::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((age.missing_rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(age.median, Some(3.0));
    }

    #[test]
    fn single_observed_value_has_unit_std() {
        let data = small();
        let stats = compute_stats(&data, &[0, 1]).unwrap();
        assert_eq!(stats.features[0].std, 1.0);
        assert_eq!(stats.features[0].missing_rate, 0.5);
    }

    #[test]
    fn missing_rate_three_of_ten() {
        let features = vec![FeatureSchema::numerical("x")];
        let cells = (0..10)
            .map(|i| {
                if i % 3 == 0 && i > 0 {
                    Cell::Missing
                } else {
                    Cell::Num(i as f64)
                }
            })
            .collect();
        let data = Dataset::new(
            features,
            FeatureSchema::target("y", ["a", "b"]),
            1,
            cells,
            vec![0; 10],
        )
        .unwrap();
        let stats = compute_stats(&data, &(0..10).collect::<Vec<_>>()).unwrap();
        assert_eq!(stats.features[0].missing_rate, 0.3);
    }

    #[test]
    fn empty_subset_rejected() {
        assert_eq!(compute_stats(&small(), &[]), Err(Error::EmptySubset));
    }

    #[test]
    fn categorical_mode_prefers_lowest_index_on_ties() {
        let data = small();
        let stats = compute_stats(&data, &[0, 1, 2]).unwrap();
        assert_eq!(stats.features[1].mode, Some(0));
    }

    #[test]
    fn stats_ignore_rows_outside_subset() {
        let mut data = small();
        let clean = compute_stats(&data, &[0, 1]).unwrap();
        data.set_cell(2, 0, Cell::Num(f64::NAN)).unwrap();
        data.set_cell(2, 1, Cell::Cat(1)).unwrap();
        let poisoned = compute_stats(&data, &[0, 1]).unwrap();
        assert_eq!(clean, poisoned);
    }

    #[test]
    fn standardize_numerical_only() {
        let data = small();
        let mut stats = compute_stats(&data, &[0, 1, 2]).unwrap();
        stats.features[0].mean = 3.0;
        stats.features[0].std = 2.0;
        let mut five = data.clone();
        five.set_cell(0, 0, Cell::Num(5.0)).unwrap();
        let out = standardize(&five, &stats);
        assert_eq!(out.cell(0, 0), Cell::Num(1.0));
        assert_eq!(out.cell(1, 0), Cell::Missing);
        assert_eq!(out.cell(1, 1), Cell::Cat(2));
        assert_eq!(out.cell(2, 1), Cell::Missing);
    }

    #[test]
    fn rejects_kind_mismatch_and_bad_labels() {
        let features = vec![FeatureSchema::numerical("x")];
        let target = FeatureSchema::target("y", ["a", "b"]);
        assert!(Dataset::new(
            features.clone(),
            target.clone(),
            1,
            vec![Cell::Cat(0)],
            vec![0]
        )
        .is_err());
        assert!(Dataset::new(features, target, 1, vec![Cell::Num(0.0)], vec![2]).is_err());
    }

    #[test]
    fn rejects_bad_schemas() {
        let target = FeatureSchema::target("y", ["a", "b"]);
        let empty_cats = FeatureSchema::categorical("c", Vec::<String>::new());
        assert!(Dataset::new(vec![empty_cats], target.clone(), 1, vec![], vec![]).is_err());
        let dup = FeatureSchema::categorical("c", ["a", "a"]);
        assert!(Dataset::new(vec![dup], target.clone(), 1, vec![], vec![]).is_err());
        let one_class = FeatureSchema::target("y", ["a"]);
        assert!(Dataset::new(vec![], one_class, 0, vec![], vec![]).is_err());
    }

    #[test]
    fn observed_zero_is_not_missing() {
        let data = Dataset::new(
            vec![FeatureSchema::numerical("x")],
            FeatureSchema::target("y", ["a", "b"]),
            1,
            vec![Cell::Num(0.0), Cell::Missing],
            vec![0, 1],
        )
        .unwrap();
        assert!(!data.cell(0, 0).is_missing());
        assert!(data.cell(1, 0).is_missing());
        assert_ne!(data.cell(0, 0), data.cell(1, 0));
        let stats = compute_stats(&data, &[0, 1]).unwrap();
        assert_eq!(stats.features[0].missing_rate, 0.5);
    }
}
