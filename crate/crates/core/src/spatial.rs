//! Validation statistics: embedding similarity by risk level, global Moran's
//! I over the dependence graph, and city-level risk and inequality.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::ingest::CellRecord;
use crate::matrix::{self, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LevelPairSimilarity {
    pub level_a: usize,
    pub level_b: usize,
    pub mean: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    /// Cosine similarity with rows and columns in `order`.
    pub similarity: Matrix,
    /// Cell ids sorted by level, then id.
    pub order: Vec<usize>,
    /// One entry per level pair `a ≤ b` with at least one cell pair.
    pub level_pairs: Vec<LevelPairSimilarity>,
    /// Mean over distinct cells sharing a level.
    pub inner_mean: Option<f64>,
    /// Mean over cells on different levels.
    pub between_mean: Option<f64>,
    /// Mean over cells on levels that differ by one.
    pub adjacent_mean: Option<f64>,
    /// Mean over cells on the lowest and the highest level.
    pub extreme_mean: Option<f64>,
}

#[derive(Default)]
struct Acc {
    sum: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

pub fn embedding_similarity_report(embeddings: &Matrix, levels: &[usize]) -> Result<SimilarityReport> {
    let m = embeddings.rows();
    if levels.len() != m {
        return Err(Error::invalid(format!(
            "level missing for cell {} ({} levels for {m} cells)",
            levels.len().min(m),
            levels.len()
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| (levels[i], i));
    let sorted = embeddings.select_rows(&order);
    let similarity = matrix::cosine_similarity_matrix(&sorted);

    let lo = levels.iter().copied().min().unwrap_or(0);
    let hi = levels.iter().copied().max().unwrap_or(0);
    let mut by_pair: BTreeMap<(usize, usize), Acc> = BTreeMap::new();
    let (mut inner, mut between, mut adjacent, mut extreme) =
        (Acc::default(), Acc::default(), Acc::default(), Acc::default());
    for a in 0..m {
        for b in a + 1..m {
            let (la, lb) = (levels[order[a]], levels[order[b]]);
            let s = similarity.get(a, b);
            by_pair.entry((la.min(lb), la.max(lb))).or_default().add(s);
            if la == lb {
                inner.add(s);
            } else {
                between.add(s);
                if la.abs_diff(lb) == 1 {
                    adjacent.add(s);
                }
                if la.min(lb) == lo && la.max(lb) == hi {
                    extreme.add(s);
                }
            }
        }
    }
    let level_pairs = by_pair
        .into_iter()
        .map(|((level_a, level_b), acc)| LevelPairSimilarity {
            level_a,
            level_b,
            mean: acc.sum / acc.n as f64,
            pairs: acc.n,
        })
        .collect();
    Ok(SimilarityReport {
        similarity,
        order,
        level_pairs,
        inner_mean: inner.mean(),
        between_mean: between.mean(),
        adjacent_mean: adjacent.mean(),
        extreme_mean: extreme.mean(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MoranWeights {
    /// Weights used as given.
    #[default]
    Raw,
    /// Each row divided by its off-diagonal sum.
    RowStandardized,
}

fn prepare_weights(weights: &Matrix, mode: MoranWeights) -> Result<Matrix> {
    let n = weights.rows();
    if weights.cols() != n {
        return Err(Error::shape("global_morans_i", format!("weights {:?}", weights.shape())));
    }
    let mut w = weights.clone();
    for i in 0..n {
        w.set_unchecked(i, i, 0.0);
    }
    if mode == MoranWeights::RowStandardized {
        for i in 0..n {
            let row = w.row_mut(i);
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }
    if w.data().iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("spatial weights are all zero"));
    }
    Ok(w)
}

fn deviations(values: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::invalid(format!("Moran's I needs at least 2 cells, got {n}")));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::invalid("values have zero variance"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss = z.iter().map(|v| v * v).sum();
    Ok((z, ss))
}

fn cross_product(w: &Matrix, z: &[f64]) -> f64 {
    (0..z.len())
        .map(|i| z[i] * w.row(i).iter().zip(z).map(|(wij, zj)| wij * zj).sum::<f64>())
        .sum()
}

/// `I = (n / S₀) Σ_ij w_ij z_i z_j / Σ_i z_i²` with `z` the deviations from
/// the mean and the diagonal of `weights` ignored.
pub fn global_morans_i(values: &[f64], weights: &Matrix, mode: MoranWeights) -> Result<f64> {
    if values.len() != weights.rows() {
        return Err(Error::shape(
            "global_morans_i",
            format!("{} values for weights {:?}", values.len(), weights.shape()),
        ));
    }
    let w = prepare_weights(weights, mode)?;
    let (z, ss) = deviations(values)?;
    let n = values.len() as f64;
    Ok(n / w.sum() * cross_product(&w, &z) / ss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoranTest {
    pub i: f64,
    pub p_value: f64,
}

/// One-sided permutation test for positive autocorrelation:
/// `p = (1 + #{I_perm ≥ I_obs}) / (R + 1)` over `R` shuffles of the values.
pub fn permutation_pvalue(
    values: &[f64],
    weights: &Matrix,
    mode: MoranWeights,
    permutations: usize,
    seed: u64,
) -> Result<MoranTest> {
    if permutations == 0 {
        return Err(Error::invalid("permutation count must be at least 1"));
    }
    let observed = global_morans_i(values, weights, mode)?;
    let w = prepare_weights(weights, mode)?;
    let (mut z, ss) = deviations(values)?;
    let scale = values.len() as f64 / w.sum() / ss;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        z.shuffle(&mut rng);
        if scale * cross_product(&w, &z) >= observed {
            exceed += 1;
        }
    }
    Ok(MoranTest {
        i: observed,
        p_value: (1 + exceed) as f64 / (permutations + 1) as f64,
    })
}

/// `Σ_ij |x_i − x_j| / (2 n² x̄)`; 0 when every value is zero.
pub fn gini(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n == 0 {
        return Err(Error::invalid("inequality of an empty set"));
    }
    if values.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("inequality needs non-negative values"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let total: f64 = values
        .iter()
        .map(|a| values.iter().map(|b| (a - b).abs()).sum::<f64>())
        .sum();
    Ok(total / (2.0 * (n * n) as f64 * mean))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityRisk {
    pub city_id: String,
    pub population: f64,
    pub mean_level: f64,
    pub inequality: f64,
    pub cells: usize,
}

/// Mean level and level inequality of every city with population at least
/// `min_population`, ordered by city id. Cells without a city are ignored.
pub fn city_risk_summary(levels: &[usize], cells: &[CellRecord], min_population: f64) -> Result<Vec<CityRisk>> {
    if levels.len() != cells.len() {
        return Err(Error::invalid(format!(
            "{} levels for {} cells",
            levels.len(),
            cells.len()
        )));
    }
    let mut cities: BTreeMap<&str, (f64, Vec<f64>)> = BTreeMap::new();
    for (cell, &level) in cells.iter().zip(levels) {
        let Some(city) = cell.city_id.as_deref() else {
            continue;
        };
        let population = cell.city_population.ok_or_else(|| {
            Error::invalid(format!("cell {} in city {city} has no city population", cell.cell_id))
        })?;
        let entry = cities.entry(city).or_insert_with(|| (population, Vec::new()));
        if entry.0 != population {
            return Err(Error::invalid(format!("city {city} has inconsistent populations")));
        }
        entry.1.push(level as f64);
    }
    cities
        .into_iter()
        .filter(|(_, (pop, _))| *pop >= min_population)
        .map(|(city, (population, lv))| {
            if lv.is_empty() {
                return Err(Error::invalid(format!("city {city} has no cells")));
            }
            Ok(CityRisk {
                city_id: city.to_string(),
                population,
                mean_level: lv.iter().sum::<f64>() / lv.len() as f64,
                inequality: gini(&lv)?,
                cells: lv.len(),
            })
        })
        .collect()
}

/// Sample correlation and its two-sided p-value from Student's t with
/// `n − 2` degrees of freedom.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid(format!("correlation needs at least 3 points, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation of a zero-variance series"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    if r.abs() == 1.0 {
        return Ok((r, 0.0));
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((r, (2.0 * dist.cdf(-t.abs())).min(1.0)))
}
