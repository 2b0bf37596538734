//! Desk-scale synthetic datasets with planted cluster structure.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::features::{FeatureMatrix, FloodOccurrenceMatrix, N_FEATURES, RATE_COLUMNS};
use super::grid::{build_grid, BoundingBox, GridSpec, DEFAULT_CELL_SIZE};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub cells: usize,
    pub weeks: usize,
    pub planted_clusters: usize,
    pub separation: f64,
    pub spatially_contiguous: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cells: 150,
            weeks: 52,
            planted_clusters: 3,
            separation: 4.0,
            spatially_contiguous: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub grid: GridSpec,
    pub bf: FloodOccurrenceMatrix,
    pub fr: FeatureMatrix,
    pub labels: Vec<usize>,
}

pub const FEATURE_NOISE_SD: f64 = 0.5;
const ACTIVE_WEEK_PROB: f64 = 0.35;
const BACKGROUND_WEEK_PROB: f64 = 0.03;
const CITY_TILE: usize = 4;

/// Physical scale and offset applied to the latent value of each non-rate
/// column (`value = scale * (latent + offset)`, floored at 0).
const COLUMN_SCALE: [f64; N_FEATURES] = [1.0, 5000.0, 500.0, 2.0e4, 0.0, 0.0, 0.0, 2.0, 5.0, 0.1];
const LATENT_OFFSET: f64 = 8.0;

/// Generates a grid of `cells` cells partitioned into `planted_clusters`
/// blocks. Each block has its own latent feature centroid (consecutive blocks
/// `separation` apart) and its own set of frequently flooded weeks.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    let (m, k) = (cfg.cells, cfg.planted_clusters);
    if k == 0 || k > m {
        return Err(Error::invalid(format!("planted cluster count {k} must be in 1..={m}")));
    }
    if cfg.weeks == 0 {
        return Err(Error::invalid("weeks must be at least 1"));
    }
    if !(cfg.separation >= 0.0) || !cfg.separation.is_finite() {
        return Err(Error::invalid("separation must be a nonnegative number"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let grid_cols = (m as f64).sqrt().ceil() as usize;
    let grid_rows = m.div_ceil(grid_cols);
    let size = DEFAULT_CELL_SIZE;
    let mut grid = build_grid(
        BoundingBox::new(0.0, 0.0, grid_cols as f64 * size, grid_rows as f64 * size),
        size,
    )?;
    grid.cells.truncate(m);

    let labels = plant_labels(&grid, k, cfg.spatially_contiguous, &mut rng);
    let centroids = centroids(k, cfg.separation, &mut rng);

    let noise = Normal::new(0.0, FEATURE_NOISE_SD).expect("valid sd");
    let mut fr = Matrix::zeros(m, N_FEATURES);
    for i in 0..m {
        for c in 0..N_FEATURES {
            let latent = centroids[labels[i]][c] + noise.sample(&mut rng);
            let v = if RATE_COLUMNS.contains(&c) {
                1.0 / (1.0 + (-latent / 3.0).exp())
            } else {
                (COLUMN_SCALE[c] * (latent + LATENT_OFFSET)).max(0.0)
            };
            fr.set_unchecked(i, c, v);
        }
    }

    let week_owner: Vec<usize> = (0..cfg.weeks).map(|_| rng.random_range(0..k)).collect();
    let mut bf = Matrix::zeros(m, cfg.weeks);
    for i in 0..m {
        for (j, &owner) in week_owner.iter().enumerate() {
            let p = if owner == labels[i] {
                ACTIVE_WEEK_PROB
            } else {
                BACKGROUND_WEEK_PROB
            };
            if rng.random_bool(p) {
                bf.set_unchecked(i, j, 1.0);
            }
        }
    }

    let fr = FeatureMatrix::new(fr)?;
    assign_cities(&mut grid, &fr);

    Ok(SyntheticDataset {
        grid,
        bf: FloodOccurrenceMatrix::new(bf)?,
        fr,
        labels,
    })
}

/// Contiguous: consecutive chunks of the column-major cell order (column
/// strips). Otherwise: balanced random assignment.
fn plant_labels(grid: &GridSpec, k: usize, contiguous: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = grid.cells.len();
    let mut order: Vec<usize> = (0..m).collect();
    if contiguous {
        order.sort_by_key(|&i| (grid.cells[i].col, grid.cells[i].row));
    } else {
        order.shuffle(rng);
    }
    let mut labels = vec![0; m];
    for (pos, &cell) in order.iter().enumerate() {
        labels[cell] = pos * k / m;
    }
    labels
}

/// Feature groups that feed the hazard, exposure and vulnerability scores.
const GROUPS: [std::ops::Range<usize>; 3] = [0..2, 2..4, 4..N_FEATURES];

/// Fraction of the step between consecutive blocks taken along the risk axis.
const AXIS_SHARE: f64 = 0.3;

/// `k` latent centroids. Block `c` sits at `(c − mid)·separation·AXIS_SHARE`
/// along a risk axis whose loading is positive and constant within each
/// feature group, plus `separation·√((1 − AXIS_SHARE²)/2)` along its own
/// direction. Own directions sum to
/// zero within every group, so they are orthogonal to the axis and leave the
/// group totals, and hence the risk order, to the axis alone. Consecutive
/// blocks are `separation` apart and blocks further apart in index are
/// further apart. Past the seventh block the own offset is zero.
fn centroids(k: usize, separation: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; N_FEATURES]> {
    let mut axis = [0.0; N_FEATURES];
    for g in GROUPS {
        let v: f64 = StandardNormal.sample(rng);
        axis[g].fill(v.abs() + 0.5);
    }
    normalize(&mut axis);
    let mut basis: Vec<[f64; N_FEATURES]> = Vec::new();
    let mid = (k as f64 - 1.0) / 2.0;
    let radius = separation * ((1.0 - AXIS_SHARE * AXIS_SHARE) / 2.0).sqrt();
    (0..k)
        .map(|c| {
            let mut own = [0.0; N_FEATURES];
            if basis.len() < N_FEATURES - GROUPS.len() {
                own.iter_mut().for_each(|x| *x = StandardNormal.sample(rng));
                for g in GROUPS {
                    let mean = own[g.clone()].iter().sum::<f64>() / g.len() as f64;
                    own[g].iter_mut().for_each(|x| *x -= mean);
                }
                for d in &basis {
                    let dot: f64 = own.iter().zip(d).map(|(a, b)| a * b).sum();
                    own.iter_mut().zip(d).for_each(|(a, b)| *a -= dot * b);
                }
                normalize(&mut own);
                basis.push(own);
            }
            let t = (c as f64 - mid) * separation * AXIS_SHARE;
            let mut centroid = [0.0; N_FEATURES];
            for f in 0..N_FEATURES {
                centroid[f] = t * axis[f] + radius * own[f];
            }
            centroid
        })
        .collect()
}

fn normalize(v: &mut [f64; N_FEATURES]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Groups cells into square city tiles; each city's population is the sum of
/// its cells' population feature.
fn assign_cities(grid: &mut GridSpec, fr: &FeatureMatrix) {
    let tiles_across = grid.cols.div_ceil(CITY_TILE);
    let city_of = |row: usize, col: usize| (row / CITY_TILE) * tiles_across + col / CITY_TILE;
    let n_cities = grid.rows.div_ceil(CITY_TILE) * tiles_across;
    let mut population = vec![0.0; n_cities];
    for c in &grid.cells {
        population[city_of(c.row, c.col)] += fr.matrix().get(c.cell_id, super::features::col::POPULATION);
    }
    for c in &mut grid.cells {
        let city = city_of(c.row, c.col);
        c.city_id = Some(format!("city_{city:02}"));
        c.city_population = Some(population[city].round());
    }
}
