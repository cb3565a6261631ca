//! CSV tables with a JSON schema file.
//!
//! Schema: `{"columns": [{"name": "age", "kind": "numerical"}, {"name":
//! "color", "kind": "categorical", "categories": ["red", "blue"]}, {"name":
//! "label", "kind": "target"}]}`. Category lists are optional; values not in
//! a list are appended in first-seen order. A target without a list gets
//! its classes sorted (numerically when every value is a number).
//! Empty cells are missing. Target cells may not be empty.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ifial_core::data::{Cell, ColumnRole, Dataset, FeatureKind, FeatureSchema};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numerical,
    Categorical,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaColumn {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    pub columns: Vec<SchemaColumn>,
}

impl SchemaFile {
    /// Schema describing `data`, with every category list spelled out.
    pub fn of(data: &Dataset) -> Self {
        let mut columns: Vec<SchemaColumn> = data
            .features()
            .iter()
            .map(|f| SchemaColumn {
                name: f.name.clone(),
                kind: match f.kind {
                    FeatureKind::Numerical => ColumnKind::Numerical,
                    FeatureKind::Categorical => ColumnKind::Categorical,
                },
                categories: (f.kind == FeatureKind::Categorical).then(|| f.categories.clone()),
            })
            .collect();
        columns.insert(
            data.target_position(),
            SchemaColumn {
                name: data.target().name.clone(),
                kind: ColumnKind::Target,
                categories: Some(data.target().categories.clone()),
            },
        );
        Self { columns }
    }
}

pub fn read_schema(path: &Path) -> Result<SchemaFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: invalid schema: {e}", path.display())))
}

pub fn write_schema(schema: &SchemaFile, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(schema).expect("schema serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn load_csv(csv_path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = read_schema(schema_path)?;
    let file = File::open(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    read_csv(file, &schema).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", csv_path.display())),
        other => other,
    })
}

struct Vocabulary {
    categories: Vec<String>,
    given: bool,
}

impl Vocabulary {
    fn index(&mut self, value: &str) -> u32 {
        match self.categories.iter().position(|c| c == value) {
            Some(i) => i as u32,
            None => {
                self.categories.push(value.to_owned());
                (self.categories.len() - 1) as u32
            }
        }
    }
}

/// Parses a table against `schema`. Header names must match the schema's
/// column names (in any order).
pub fn read_csv<R: Read>(reader: R, schema: &SchemaFile) -> Result<Dataset> {
    let targets: Vec<&SchemaColumn> = schema
        .columns
        .iter()
        .filter(|c| c.kind == ColumnKind::Target)
        .collect();
    if targets.len() != 1 {
        return Err(CliError::Data(format!(
            "schema needs exactly one target column, found {}",
            targets.len()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    // Schema column for each header position.
    let mut layout = Vec::with_capacity(header.len());
    for name in &header {
        let col = schema
            .columns
            .iter()
            .find(|c| &c.name == name)
            .ok_or_else(|| {
                CliError::Data(format!("header column `{name}` is not in the schema"))
            })?;
        layout.push(col);
    }
    for col in &schema.columns {
        if !header.contains(&col.name) {
            return Err(CliError::Data(format!(
                "schema column `{}` is missing from the header",
                col.name
            )));
        }
    }
    if header.len() != schema.columns.len() {
        return Err(CliError::Data("header repeats a column".into()));
    }

    let mut vocab: Vec<Vocabulary> = layout
        .iter()
        .map(|c| Vocabulary {
            categories: c.categories.clone().unwrap_or_default(),
            given: c.categories.is_some(),
        })
        .collect();
    let target_col = layout
        .iter()
        .position(|c| c.kind == ColumnKind::Target)
        .unwrap_or(0);
    let mut cells = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data(format!("line {line}: malformed row: {e}"))
        })?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        for (j, col) in layout.iter().enumerate() {
            let value = record.get(j).unwrap_or("");
            let trimmed = value.trim();
            match col.kind {
                ColumnKind::Target => {
                    if trimmed.is_empty() {
                        return Err(CliError::Data(format!(
                            "line {line} (row {}): target `{}` is empty",
                            row + 1,
                            col.name
                        )));
                    }
                    raw_labels.push(trimmed.to_owned());
                }
                _ if trimmed.is_empty() => cells.push(Cell::Missing),
                ColumnKind::Numerical => match trimmed.parse::<f64>() {
                    Ok(v) if v.is_finite() => cells.push(Cell::Num(v)),
                    _ => {
                        return Err(CliError::Data(format!(
                            "line {line} (row {}), column `{}`: cannot parse `{value}` as a number",
                            row + 1,
                            col.name
                        )))
                    }
                },
                ColumnKind::Categorical => cells.push(Cell::Cat(vocab[j].index(trimmed))),
            }
        }
    }

    let target_vocab = &mut vocab[target_col];
    if !target_vocab.given {
        let mut classes: Vec<String> = raw_labels.clone();
        classes.sort();
        classes.dedup();
        if classes.iter().all(|c| c.parse::<f64>().is_ok()) {
            classes.sort_by(|a, b| {
                a.parse::<f64>()
                    .unwrap()
                    .total_cmp(&b.parse::<f64>().unwrap())
            });
        }
        target_vocab.categories = classes;
    }
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| target_vocab.index(l) as usize)
        .collect();

    let mut features = Vec::new();
    let mut target = None;
    for (col, v) in layout.iter().zip(vocab) {
        let schema = match col.kind {
            ColumnKind::Numerical => FeatureSchema::numerical(col.name.clone()),
            ColumnKind::Categorical => FeatureSchema::categorical(col.name.clone(), v.categories),
            ColumnKind::Target => {
                target = Some(FeatureSchema::target(col.name.clone(), v.categories));
                continue;
            }
        };
        features.push(schema);
    }
    let target = target.expect("one target column");
    debug_assert_eq!(target.role, ColumnRole::Target);
    Ok(Dataset::new(features, target, target_col, cells, labels)?)
}

/// Writes `data` in its original column order. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| CliError::Data(format!("writing csv: {e}"));
    let schema = SchemaFile::of(data);
    w.write_record(schema.columns.iter().map(|c| c.name.as_str()))
        .map_err(to_err)?;
    let tp = data.target_position();
    for r in 0..data.n() {
        let mut record: Vec<String> = data
            .row(r)
            .iter()
            .enumerate()
            .map(|(j, cell)| match *cell {
                Cell::Missing => String::new(),
                Cell::Num(v) => format!("{v}"),
                Cell::Cat(c) => data.feature(j).categories[c as usize].clone(),
            })
            .collect();
        record.insert(tp, data.target().categories[data.labels()[r]].clone());
        w.write_record(&record).map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Data(format!("writing csv: {e}")))
}

pub fn write_csv_path(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(data, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> SchemaFile {
        serde_json::from_str(
            r#"{"columns":[
                {"name":"age","kind":"numerical"},
                {"name":"color","kind":"categorical","categories":["red"]},
                {"name":"y","kind":"target"}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_cell_is_missing() {
        let text = "age,color,y\n30,red,1\n,blue,0\n41,red,1\n";
        let data = read_csv(text.as_bytes(), &schema()).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.missing_count(0), 1);
        assert_eq!(data.feature(1).categories, vec!["red", "blue"]);
        assert_eq!(data.target().categories, vec!["0", "1"]);
        assert_eq!(data.labels(), &[1, 0, 1]);
    }

    #[test]
    fn bad_number_names_row_and_column() {
        let text = "age,color,y\n30,red,1\nabc,red,0\n";
        let err = read_csv(text.as_bytes(), &schema())
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("row 2"), "{err}");
        assert!(err.contains("`age`"), "{err}");
    }

    #[test]
    fn missing_target_is_rejected() {
        let text = "age,color,y\n30,red,\n";
        assert!(read_csv(text.as_bytes(), &schema()).is_err());
    }

    #[test]
    fn ragged_row_reports_line() {
        let text = "age,color,y\n30,red,1\n31,red\n";
        let err = read_csv(text.as_bytes(), &schema())
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn numeric_classes_sort_numerically() {
        let text = "y,age,color\n10,1,red\n9,2,red\n10,3,red\n";
        let data = read_csv(text.as_bytes(), &schema()).unwrap();
        assert_eq!(data.target().categories, vec!["9", "10"]);
        assert_eq!(data.target_position(), 0);
    }

    #[test]
    fn round_trip_preserves_cells() {
        let text = "age,color,y\n0.1,red,1\n,blue,0\n1e-300,,1\n0,red,0\n";
        let data = read_csv(text.as_bytes(), &schema()).unwrap();
        let mut out = Vec::new();
        write_csv(&data, &mut out).unwrap();
        let back = read_csv(out.as_slice(), &SchemaFile::of(&data)).unwrap();
        assert_eq!(back, data);
        assert_eq!(back.cell(3, 0), Cell::Num(0.0));
        assert!(back.cell(1, 0).is_missing());
    }
}
