//! Text formats of the stage outputs.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::clustering::ClusterState;
use crate::error::{Error, Result};
use crate::graph_learner::SpatialDependenceGraph;
use crate::ingest::{GridSpec, FEATURE_COLUMNS};
use crate::matrix::Matrix;
use crate::risk::RiskLevelTable;
use crate::spatial::{CityRisk, MoranTest, SimilarityReport};

pub const PLANTED_HEADER: &str = "cell_id,label";
pub const EDGES_HEADER: &str = "i,j,weight";
pub const RISK_LEVELS_HEADER: &str = "cluster,FH,FE,FV,FR_value,level";
pub const CELL_LEVELS_HEADER: &str = "cell_id,cluster,level";
pub const LEVEL_PAIRS_HEADER: &str = "level_a,level_b,mean_similarity,pairs";
pub const MORAN_HEADER: &str = "morans_i,p_value";
pub const CITIES_HEADER: &str = "city_id,population,mean_level,inequality";
pub const CORRELATION_HEADER: &str = "pearson_r,p_value";

pub fn clusters_header(k: usize) -> String {
    let mut h = String::from("cell_id,cluster");
    for c in 0..k {
        let _ = write!(h, ",z_{c}");
    }
    h
}

pub fn format_planted(labels: &[usize]) -> String {
    let mut s = format!("{PLANTED_HEADER}\n");
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(s, "{i},{l}");
    }
    s
}

pub fn format_edges(graph: &SpatialDependenceGraph) -> String {
    let mut s = format!("{EDGES_HEADER}\n");
    for (i, j, w) in graph.edges() {
        let _ = writeln!(s, "{i},{j},{w}");
    }
    s
}

pub fn format_clusters(state: &ClusterState) -> String {
    let mut s = clusters_header(state.clusters());
    s.push('\n');
    for (i, l) in state.labels.iter().enumerate() {
        let _ = write!(s, "{i},{l}");
        for v in state.z.row(i) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn records(text: &str, header: &str, src: &str, exact: bool) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = rdr
        .headers()
        .map_err(|e| Error::schema(src, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    let ok = if exact { found == header } else { found.starts_with(header) };
    if !ok {
        return Err(Error::schema(src, format!("expected header `{header}`, found `{found}`")));
    }
    rdr.records()
        .map(|r| r.map_err(|e| Error::schema(src, e.to_string())))
        .collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str, src: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::schema(src, format!("line {line}: cannot parse {what} from `{raw}`")))
}

/// Cluster labels and soft assignments from a clusters table for `m` cells.
pub fn parse_clusters(text: &str, m: usize, src: &str) -> Result<(Vec<usize>, Matrix)> {
    let recs = records(text, "cell_id,cluster", src, false)?;
    let k = recs.first().map_or(0, |r| r.len().saturating_sub(2));
    let mut labels = vec![None; m];
    let mut z = Matrix::zeros(m, k);
    for rec in &recs {
        if rec.len() != k + 2 {
            return Err(Error::schema(src, "rows have differing numbers of fields"));
        }
        let id: usize = field(rec, 0, "cell_id", src)?;
        if id >= m {
            return Err(Error::schema(src, format!("cell {id} out of range for {m} cells")));
        }
        if labels[id].is_some() {
            return Err(Error::schema(src, format!("duplicate cell {id}")));
        }
        labels[id] = Some(field::<usize>(rec, 1, "cluster", src)?);
        for c in 0..k {
            z.set_unchecked(id, c, field(rec, c + 2, "assignment", src)?);
        }
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::schema(src, format!("missing cell {i}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((labels, z.checked("clusters")?))
}

pub fn format_risk_levels(table: &RiskLevelTable) -> String {
    let mut s = format!("{RISK_LEVELS_HEADER}\n");
    for c in &table.clusters {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.cluster,
            c.components.hazard,
            c.components.exposure,
            c.components.vulnerability,
            c.value,
            c.level
        );
    }
    s
}

pub fn format_cell_levels(table: &RiskLevelTable) -> String {
    let mut s = format!("{CELL_LEVELS_HEADER}\n");
    for (i, (c, l)) in table.cell_clusters.iter().zip(&table.cell_levels).enumerate() {
        let _ = writeln!(s, "{i},{c},{l}");
    }
    s
}

/// Per-cell `(cluster, level)` from a cell-levels table for `m` cells.
pub fn parse_cell_levels(text: &str, m: usize, src: &str) -> Result<Vec<(usize, usize)>> {
    let recs = records(text, CELL_LEVELS_HEADER, src, true)?;
    let mut out = vec![None; m];
    for rec in &recs {
        let id: usize = field(rec, 0, "cell_id", src)?;
        if id >= m {
            return Err(Error::schema(src, format!("cell {id} out of range for {m} cells")));
        }
        out[id] = Some((field(rec, 1, "cluster", src)?, field(rec, 2, "level", src)?));
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::schema(src, format!("level missing for cell {i}"))))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Blocks separated by blank lines, each with its own header row.
pub fn format_analysis_report(
    similarity: &SimilarityReport,
    moran: Option<&MoranTest>,
    cities: &[CityRisk],
    correlation: Option<(f64, f64)>,
) -> String {
    let mut s = format!("{LEVEL_PAIRS_HEADER}\n");
    for p in &similarity.level_pairs {
        let _ = writeln!(s, "{},{},{},{}", p.level_a, p.level_b, p.mean, p.pairs);
    }
    let _ = write!(
        s,
        "\n{MORAN_HEADER}\n{},{}\n",
        opt(moran.map(|t| t.i)),
        opt(moran.map(|t| t.p_value))
    );
    let _ = write!(s, "\n{CITIES_HEADER}\n");
    for c in cities {
        let _ = writeln!(s, "{},{},{},{}", c.city_id, c.population, c.mean_level, c.inequality);
    }
    let _ = write!(
        s,
        "\n{CORRELATION_HEADER}\n{},{}\n",
        opt(correlation.map(|c| c.0)),
        opt(correlation.map(|c| c.1))
    );
    s
}

/// Polygon per cell with its cluster, level, city and standardized features.
pub fn export_geojson(grid: &GridSpec, clusters: &[usize], levels: &[usize], standardized: &Matrix) -> Result<String> {
    let m = grid.cells.len();
    if levels.len() != m || clusters.len() != m {
        return Err(Error::invalid(format!(
            "level missing for some cells: {} levels, {} clusters for {m} cells",
            levels.len(),
            clusters.len()
        )));
    }
    if standardized.shape() != (m, FEATURE_COLUMNS.len()) {
        return Err(Error::shape("export_geojson", format!("features {:?}", standardized.shape())));
    }
    let features: Vec<Value> = grid
        .cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let mut props = Map::new();
            props.insert("cell_id".into(), json!(cell.cell_id));
            props.insert("cluster".into(), json!(clusters[i]));
            props.insert("level".into(), json!(levels[i]));
            props.insert("city_id".into(), json!(cell.city_id));
            for (name, v) in FEATURE_COLUMNS.iter().zip(standardized.row(i)) {
                props.insert((*name).into(), json!(v));
            }
            json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [cell.ring()]},
                "properties": props,
            })
        })
        .collect();
    let doc = json!({"type": "FeatureCollection", "features": features});
    Ok(serde_json::to_string_pretty(&doc).expect("JSON values always serialize") + "\n")
}
