//! Results table and report files.

use std::path::{Path, PathBuf};

use ifial_core::eval::{rank_table, robustness_curve, win_matrix, CostPoint, FoldResult};
use serde::Serialize;

use crate::error::{CliError, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const RANK_FILE: &str = "rank_table.json";
pub const WIN_FILE: &str = "win_matrix.json";
pub const ROBUSTNESS_FILE: &str = "robustness.csv";

/// Mechanism label of complete-data reference rows.
pub const REFERENCE_MECHANISM: &str = "none";

pub fn read_results(path: &Path) -> Result<Vec<FoldResult>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| CliError::Data(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_results(results: &[FoldResult], path: &Path) -> Result<()> {
    write_rows(results, path)
}

pub fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn write_cost_curve(points: &[CostPoint], path: &Path) -> Result<()> {
    write_rows(points, path)
}

/// Writes the rank table and win matrix over non-reference rows, and the
/// robustness curve when reference rows exist. Returns the files written.
pub fn write_reports(results: &[FoldResult], dir: &Path) -> Result<Vec<PathBuf>> {
    let (reference, scored): (Vec<FoldResult>, Vec<FoldResult>) = results
        .iter()
        .cloned()
        .partition(|r| r.mechanism == REFERENCE_MECHANISM);
    let mut written = Vec::new();
    let basis = if scored.is_empty() {
        &reference
    } else {
        &scored
    };
    if basis.is_empty() {
        return Ok(written);
    }
    let path = dir.join(RANK_FILE);
    write_json(&rank_table(basis)?, &path)?;
    written.push(path);
    let path = dir.join(WIN_FILE);
    write_json(&win_matrix(basis)?, &path)?;
    written.push(path);
    if !reference.is_empty() && !scored.is_empty() {
        let path = dir.join(ROBUSTNESS_FILE);
        write_rows(&robustness_curve(&scored, &reference)?, &path)?;
        written.push(path);
    }
    Ok(written)
}
