//! Flood occurrence (BF) and flood-risk feature (FR) matrices.

use std::collections::BTreeSet;

use log::warn;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// FR column order.
pub const FEATURE_COLUMNS: [&str; 10] = [
    "flood_frequency",
    "flood_intensity",
    "population",
    "building_area",
    "poverty_rate",
    "disability_rate",
    "limited_english_rate",
    "poi_count",
    "building_age",
    "recip_foundation_height",
];

pub const N_FEATURES: usize = FEATURE_COLUMNS.len();

/// Columns that must lie in [0, 1]; every other column must be ≥ 0.
pub const RATE_COLUMNS: [usize; 3] = [4, 5, 6];

pub mod col {
    pub const FLOOD_FREQUENCY: usize = 0;
    pub const FLOOD_INTENSITY: usize = 1;
    pub const POPULATION: usize = 2;
    pub const BUILDING_AREA: usize = 3;
    pub const POVERTY_RATE: usize = 4;
    pub const DISABILITY_RATE: usize = 5;
    pub const LIMITED_ENGLISH_RATE: usize = 6;
    pub const POI_COUNT: usize = 7;
    pub const BUILDING_AGE: usize = 8;
    pub const RECIP_FOUNDATION_HEIGHT: usize = 9;
}

/// Binary cell-by-week flood occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct FloodOccurrenceMatrix(Matrix);

impl FloodOccurrenceMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.cols() == 0 {
            return Err(Error::invalid("flood occurrence matrix needs at least one week"));
        }
        if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("flood occurrence matrix must be binary"));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn cells(&self) -> usize {
        self.0.rows()
    }

    pub fn weeks(&self) -> usize {
        self.0.cols()
    }
}

/// `BF[i][j] = 1` iff at least one event was recorded for cell `i` in week `j`.
pub fn assemble_bf(events: &[(usize, usize)], m: usize, weeks: usize) -> Result<FloodOccurrenceMatrix> {
    if weeks == 0 {
        return Err(Error::invalid("d_BF must be at least 1"));
    }
    let mut bf = Matrix::zeros(m, weeks);
    for &(cell, week) in events {
        if cell >= m {
            return Err(Error::invalid(format!("event cell {cell} out of range for {m} cells")));
        }
        if week >= weeks {
            return Err(Error::invalid(format!("event week {week} out of range for {weeks} weeks")));
        }
        bf.set_unchecked(cell, week, 1.0);
    }
    FloodOccurrenceMatrix::new(bf)
}

/// Validated m×10 feature matrix in [`FEATURE_COLUMNS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.cols() != N_FEATURES {
            return Err(Error::invalid(format!(
                "feature matrix needs {N_FEATURES} columns, got {}",
                m.cols()
            )));
        }
        for r in 0..m.rows() {
            check_feature_row(r, m.row(r)).map_err(Error::InvalidArgument)?;
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn cells(&self) -> usize {
        self.0.rows()
    }
}

fn check_feature_row(cell: usize, row: &[f64]) -> std::result::Result<(), String> {
    for (c, &v) in row.iter().enumerate() {
        let name = FEATURE_COLUMNS[c];
        if RATE_COLUMNS.contains(&c) {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("cell {cell}: {name} = {v} outside [0, 1]"));
            }
        } else if v < 0.0 {
            return Err(format!("cell {cell}: negative count {name} = {v}"));
        }
    }
    Ok(())
}

/// Feature rows keyed by cell id, with named columns in any order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

/// Orders a keyed feature table into FR, checking completeness and ranges.
pub fn assemble_fr(table: &FeatureTable, m: usize) -> Result<FeatureMatrix> {
    let src = "feature table";
    let mut positions = [0usize; N_FEATURES];
    for (k, name) in FEATURE_COLUMNS.iter().enumerate() {
        positions[k] = table
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::schema(src, format!("missing column {name}")))?;
    }
    let mut out = Matrix::zeros(m, N_FEATURES);
    let mut seen = vec![false; m];
    for (cell, values) in &table.rows {
        let cell = *cell;
        if cell >= m {
            return Err(Error::schema(src, format!("cell {cell} out of range for {m} cells")));
        }
        if std::mem::replace(&mut seen[cell], true) {
            return Err(Error::schema(src, format!("cell {cell} appears more than once")));
        }
        if values.len() != table.columns.len() {
            return Err(Error::schema(src, format!("cell {cell}: wrong number of values")));
        }
        let row: Vec<f64> = positions.iter().map(|&p| values[p]).collect();
        if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::schema(
                src,
                format!("cell {cell}: {} is not finite", FEATURE_COLUMNS[bad]),
            ));
        }
        check_feature_row(cell, &row).map_err(|d| Error::schema(src, d))?;
        out.row_mut(cell).copy_from_slice(&row);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::schema(src, format!("missing cell {missing}")));
    }
    Ok(FeatureMatrix(out))
}

/// Per-cell hazard columns from raw claims `(cell, week, amount)`:
/// frequency is the number of distinct flood weeks, intensity the total claim
/// amount divided by that number (0 for cells without floods).
pub fn hazard_from_claims(claims: &[(usize, usize, f64)], m: usize) -> Result<Vec<(f64, f64)>> {
    let mut weeks: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
    let mut totals = vec![0.0; m];
    for &(cell, week, amount) in claims {
        if cell >= m {
            return Err(Error::invalid(format!("claim cell {cell} out of range")));
        }
        if !(amount >= 0.0) || !amount.is_finite() {
            return Err(Error::invalid(format!("claim amount {amount} invalid")));
        }
        weeks[cell].insert(week);
        totals[cell] += amount;
    }
    Ok(weeks
        .iter()
        .zip(totals)
        .map(|(w, total)| {
            let n = w.len() as f64;
            (n, if n > 0.0 { total / n } else { 0.0 })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: Matrix,
    /// Columns with zero variance, emitted as all zeros.
    pub constant_columns: Vec<usize>,
}

/// Column z-scores with the population standard deviation.
pub fn zscore_standardize(x: &Matrix) -> Result<Standardized> {
    let m = x.rows();
    if m < 2 {
        return Err(Error::invalid(format!("z-score needs at least 2 rows, got {m}")));
    }
    let mut out = Matrix::zeros(m, x.cols());
    let mut constant_columns = Vec::new();
    for c in 0..x.cols() {
        let col = x.column(c);
        let mean = col.iter().sum::<f64>() / m as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
        let std = var.sqrt();
        if std <= 1e-12 * mean.abs().max(1.0) {
            warn!("column {c} is constant; standardized to zeros");
            constant_columns.push(c);
            continue;
        }
        for (r, v) in col.iter().enumerate() {
            out.set_unchecked(r, c, (v - mean) / std);
        }
    }
    Ok(Standardized {
        matrix: out.checked("zscore_standardize")?,
        constant_columns,
    })
}
