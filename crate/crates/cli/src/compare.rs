//! Numeric comparison of two runs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use thiserror::Error;

use crate::run::Manifest;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("runs belong to different tasks: {a} vs {b}")]
    MismatchedTask { a: String, b: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnDiff {
    pub column: String,
    pub max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileDiff {
    pub name: String,
    pub columns: Vec<ColumnDiff>,
    /// Row counts differ or a non-numeric field changed.
    pub structural_mismatch: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffReport {
    pub tol: f64,
    pub files: Vec<FileDiff>,
    /// `file:column` entries whose deviation exceeds `tol`.
    pub exceedances: Vec<String>,
}

impl DiffReport {
    pub fn within_tolerance(&self) -> bool {
        self.exceedances.is_empty() && !self.files.iter().any(|f| f.structural_mismatch)
    }

    pub fn max_deviation(&self) -> f64 {
        self.files.iter().flat_map(|f| f.columns.iter().map(|c| c.max_deviation)).fold(0.0, f64::max)
    }
}

fn diff_csv(name: &str, a: &str, b: &str) -> FileDiff {
    let mut la = a.lines();
    let mut lb = b.lines();
    let header = la.next().unwrap_or_default();
    let structural = header != lb.next().unwrap_or_default();
    let names: Vec<&str> = header.split(',').collect();
    let mut max = vec![0.0_f64; names.len()];
    let mut mismatch = structural;
    let rows_a: Vec<&str> = la.collect();
    let rows_b: Vec<&str> = lb.collect();
    if rows_a.len() != rows_b.len() {
        mismatch = true;
    }
    for (ra, rb) in rows_a.iter().zip(&rows_b) {
        for (k, (fa, fb)) in ra.split(',').zip(rb.split(',')).enumerate().take(names.len()) {
            match (fa.parse::<f64>(), fb.parse::<f64>()) {
                (Ok(x), Ok(y)) => max[k] = max[k].max((x - y).abs()),
                _ if fa == fb => {}
                _ => mismatch = true,
            }
        }
    }
    FileDiff {
        name: name.to_string(),
        columns: names.iter().zip(max).map(|(c, m)| ColumnDiff { column: c.to_string(), max_deviation: m }).collect(),
        structural_mismatch: mismatch,
    }
}

/// Compares the CSV artifacts both runs list. `a` and `b` are run
/// directories or manifest paths.
pub fn compare_runs(a: &Path, b: &Path, tol: f64) -> Result<DiffReport> {
    let ma = Manifest::load(a)?;
    let mb = Manifest::load(b)?;
    if ma.task != mb.task {
        return Err(CompareError::MismatchedTask { a: ma.task.name().into(), b: mb.task.name().into() }.into());
    }
    let dir = |p: &Path| if p.is_dir() { p.to_path_buf() } else { p.parent().map(Path::to_path_buf).unwrap_or_default() };
    let (da, db) = (dir(a), dir(b));
    let mut files = Vec::new();
    for fa in ma.files.iter().filter(|f| f.name.ends_with(".csv")) {
        if !mb.files.iter().any(|fb| fb.name == fa.name) {
            continue;
        }
        let ta = fs::read_to_string(da.join(&fa.name)).with_context(|| format!("reading {}", fa.name))?;
        let tb = fs::read_to_string(db.join(&fa.name)).with_context(|| format!("reading {}", fa.name))?;
        files.push(diff_csv(&fa.name, &ta, &tb));
    }
    let exceedances = files
        .iter()
        .flat_map(|f| f.columns.iter().filter(|c| c.max_deviation > tol).map(move |c| format!("{}:{}", f.name, c.column)))
        .collect();
    Ok(DiffReport { tol, files, exceedances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_diff_per_column() {
        let a = "x,f,piece\n1.0,2.0,bridge\n2.0,3.0,bridge\n";
        let b = "x,f,piece\n1.0,2.5,bridge\n2.0,2.9,bridge\n";
        let d = diff_csv("t.csv", a, b);
        assert!(!d.structural_mismatch);
        assert_eq!(d.columns[0].max_deviation, 0.0);
        assert!((d.columns[1].max_deviation - 0.5).abs() < 1e-12);
        let c = "x,f,piece\n1.0,2.0,left_branch\n";
        assert!(diff_csv("t.csv", a, c).structural_mismatch);
    }
}
