//! Per-cluster flood hazard, exposure and vulnerability, their product as a
//! risk value, and the ranking of clusters into risk levels.

use log::warn;

use crate::error::{Error, Result};
use crate::ingest::features::col;
use crate::matrix::Matrix;

/// Per-column `(x − min) / (max − min)` over all cells; constant columns
/// become zeros.
pub fn minmax_scale(fr: &Matrix) -> Matrix {
    let (m, d) = fr.shape();
    let mut out = Matrix::zeros(m, d);
    for c in 0..d {
        let column = fr.column(c);
        let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            if m > 0 {
                warn!("feature column {c} is constant; scaled to zeros");
            }
            continue;
        }
        let range = hi - lo;
        for (r, v) in column.iter().enumerate() {
            out.set_unchecked(r, c, (v - lo) / range);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFeatureSummary {
    /// `K′ × d` mean of each scaled feature per cluster.
    pub means: Matrix,
    pub counts: Vec<usize>,
}

/// Mean of every scaled feature over the cells of each cluster. Labels must
/// be dense: every cluster `0..=max(label)` needs at least one cell.
pub fn cluster_feature_means(scaled: &Matrix, labels: &[usize]) -> Result<ClusterFeatureSummary> {
    let (m, d) = scaled.shape();
    if labels.len() != m {
        return Err(Error::invalid(format!("{} labels for {m} cells", labels.len())));
    }
    let k = labels.iter().copied().max().map_or(0, |v| v + 1);
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (r, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(scaled.row(r)) {
            *s += v;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("cluster {empty} has no cells")));
    }
    for (c, &n) in counts.iter().enumerate() {
        sums.row_mut(c).iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(ClusterFeatureSummary { means: sums, counts })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskComponents {
    pub hazard: f64,
    pub exposure: f64,
    pub vulnerability: f64,
}

/// Hazard from flood frequency and intensity, exposure from population and
/// building area, vulnerability from the social and physical columns.
pub fn aggregate_risk_components(summary: &ClusterFeatureSummary) -> Vec<RiskComponents> {
    (0..summary.means.rows())
        .map(|k| {
            let f = summary.means.row(k);
            RiskComponents {
                hazard: f[col::FLOOD_FREQUENCY] + f[col::FLOOD_INTENSITY],
                exposure: f[col::POPULATION] + f[col::BUILDING_AREA],
                vulnerability: f[col::POVERTY_RATE]
                    + f[col::DISABILITY_RATE]
                    + f[col::LIMITED_ENGLISH_RATE]
                    + f[col::POI_COUNT]
                    + f[col::RECIP_FOUNDATION_HEIGHT]
                    + f[col::BUILDING_AGE],
            }
        })
        .collect()
}

pub fn compute_risk_values(components: &[RiskComponents]) -> Vec<f64> {
    components
        .iter()
        .map(|c| c.hazard * c.exposure * c.vulnerability)
        .collect()
}

/// Ascending rank starting at 1; equal values rank by cluster index.
pub fn assign_risk_levels(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut levels = vec![0; values.len()];
    for (rank, &k) in order.iter().enumerate() {
        levels[k] = rank + 1;
    }
    levels
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRisk {
    pub cluster: usize,
    pub components: RiskComponents,
    pub value: f64,
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskLevelTable {
    pub clusters: Vec<ClusterRisk>,
    pub cell_clusters: Vec<usize>,
    pub cell_levels: Vec<usize>,
}

impl RiskLevelTable {
    pub fn levels(&self) -> usize {
        self.clusters.len()
    }
}

/// Full rating of raw features `fr` under dense cluster labels.
pub fn rate_clusters(fr: &Matrix, labels: &[usize]) -> Result<RiskLevelTable> {
    if fr.rows() == 0 {
        return Err(Error::invalid("risk rating needs at least one cell"));
    }
    let summary = cluster_feature_means(&minmax_scale(fr), labels)?;
    let components = aggregate_risk_components(&summary);
    let values = compute_risk_values(&components);
    let levels = assign_risk_levels(&values);
    let clusters = components
        .iter()
        .zip(&values)
        .zip(&levels)
        .enumerate()
        .map(|(cluster, ((&components, &value), &level))| ClusterRisk {
            cluster,
            components,
            value,
            level,
        })
        .collect();
    Ok(RiskLevelTable {
        clusters,
        cell_clusters: labels.to_vec(),
        cell_levels: labels.iter().map(|&l| levels[l]).collect(),
    })
}
