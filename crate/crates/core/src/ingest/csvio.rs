//! Reading and writing the three input tables.

use std::fmt::Write as _;
use std::path::Path;

use super::features::{FeatureMatrix, FeatureTable, FEATURE_COLUMNS};
use super::grid::{CellRecord, GridSpec};
use crate::error::{Error, Result};
use crate::fsutil;

pub const CELLS_HEADER: &str = "cell_id,row,col,min_x,min_y,max_x,max_y,city_id,city_population";
pub const OCCURRENCES_HEADER: &str = "cell_id,week_index";

pub fn features_header() -> String {
    format!("cell_id,{}", FEATURE_COLUMNS.join(","))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn header_fields(rdr: &mut csv::Reader<&[u8]>, src: &str) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(|e| Error::schema(src, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn expect_header(found: &[String], expected: &str, src: &str, min_fields: usize) -> Result<()> {
    let want: Vec<&str> = expected.split(',').collect();
    let ok = found.len() >= min_fields
        && found.len() <= want.len()
        && found.iter().zip(&want).all(|(a, b)| a == b);
    if !ok {
        return Err(Error::schema(src, format!("expected header `{expected}`, found `{}`", found.join(","))));
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, what: &str, line: u64, src: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::schema(src, format!("line {line}: cannot parse {what} from `{field}`")))
}

pub fn parse_cells(text: &str, src: &str) -> Result<GridSpec> {
    let mut rdr = reader(text);
    let header = header_fields(&mut rdr, src)?;
    expect_header(&header, CELLS_HEADER, src, 7)?;
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::schema(src, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| rec.get(i).unwrap_or("");
        let city_id = Some(f(7)).filter(|s| !s.is_empty()).map(str::to_string);
        let city_population = match f(8) {
            "" => None,
            s => Some(parse::<f64>(s, "city_population", line, src)?),
        };
        cells.push(CellRecord {
            cell_id: parse(f(0), "cell_id", line, src)?,
            row: parse(f(1), "row", line, src)?,
            col: parse(f(2), "col", line, src)?,
            min_x: parse(f(3), "min_x", line, src)?,
            min_y: parse(f(4), "min_y", line, src)?,
            max_x: parse(f(5), "max_x", line, src)?,
            max_y: parse(f(6), "max_y", line, src)?,
            city_id,
            city_population,
        });
    }
    GridSpec::from_cells(cells, src)
}

pub fn parse_occurrences(text: &str, src: &str) -> Result<Vec<(usize, usize)>> {
    let mut rdr = reader(text);
    let header = header_fields(&mut rdr, src)?;
    expect_header(&header, OCCURRENCES_HEADER, src, 2)?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::schema(src, e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            Ok((
                parse(rec.get(0).unwrap_or(""), "cell_id", line, src)?,
                parse(rec.get(1).unwrap_or(""), "week_index", line, src)?,
            ))
        })
        .collect()
}

/// Reads a features table. Column order may differ from the documented one;
/// `cell_id` must be present.
pub fn parse_features(text: &str, src: &str) -> Result<FeatureTable> {
    let mut rdr = reader(text);
    let header = header_fields(&mut rdr, src)?;
    let id_col = header
        .iter()
        .position(|h| h == "cell_id")
        .ok_or_else(|| Error::schema(src, "missing column cell_id"))?;
    let columns: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != id_col)
        .map(|(_, h)| h.clone())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::schema(src, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = parse(&rec[id_col], "cell_id", line, src)?;
        let mut values = Vec::with_capacity(columns.len());
        for (i, field) in rec.iter().enumerate() {
            if i != id_col {
                values.push(parse::<f64>(field, &header[i], line, src)?);
            }
        }
        rows.push((id, values));
    }
    Ok(FeatureTable { columns, rows })
}

pub fn read_cells(path: &Path) -> Result<GridSpec> {
    parse_cells(&fsutil::read_to_string(path)?, &path.display().to_string())
}

pub fn read_occurrences(path: &Path) -> Result<Vec<(usize, usize)>> {
    parse_occurrences(&fsutil::read_to_string(path)?, &path.display().to_string())
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    parse_features(&fsutil::read_to_string(path)?, &path.display().to_string())
}

pub fn format_cells(grid: &GridSpec) -> String {
    let mut s = String::from(CELLS_HEADER);
    s.push('\n');
    for c in &grid.cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.cell_id,
            c.row,
            c.col,
            c.min_x,
            c.min_y,
            c.max_x,
            c.max_y,
            c.city_id.as_deref().unwrap_or(""),
            c.city_population.map(|p| p.to_string()).unwrap_or_default()
        );
    }
    s
}

/// One row per nonzero BF entry, cell-major.
pub fn format_occurrences(bf: &crate::Matrix) -> String {
    let mut s = String::from(OCCURRENCES_HEADER);
    s.push('\n');
    for i in 0..bf.rows() {
        for (j, &v) in bf.row(i).iter().enumerate() {
            if v != 0.0 {
                let _ = writeln!(s, "{i},{j}");
            }
        }
    }
    s
}

pub fn format_features(fr: &FeatureMatrix) -> String {
    let mut s = features_header();
    s.push('\n');
    let m = fr.matrix();
    for i in 0..m.rows() {
        let _ = write!(s, "{i}");
        for v in m.row(i) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
