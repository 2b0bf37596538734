use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centers: Matrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = dist2(point, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let m = x.rows();
    let mut chosen = vec![rng.random_range(0..m)];
    let mut d2: Vec<f64> = (0..m).map(|i| dist2(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            (0..m).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(dist2(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

fn lloyd(x: &Matrix, mut centers: Matrix) -> KMeansResult {
    let (m, d) = x.shape();
    let k = centers.rows();
    let mut labels = vec![usize::MAX; m];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let (c, _) = nearest(x.row(i), &centers);
            if *label != c {
                *label = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster at the point farthest from its center
                let far = (0..m)
                    .max_by(|&a, &b| {
                        let da = dist2(x.row(a), centers.row(labels[a]));
                        let db = dist2(x.row(b), centers.row(labels[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                centers.row_mut(c).copy_from_slice(x.row(far));
                labels[far] = c;
            } else {
                let n = counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / n;
                }
            }
        }
    }
    for (i, label) in labels.iter_mut().enumerate() {
        *label = nearest(x.row(i), &centers).0;
    }
    let inertia = (0..m).map(|i| dist2(x.row(i), centers.row(labels[i]))).sum();
    KMeansResult {
        centers,
        labels,
        inertia,
    }
}

/// k-means with k-means++ seeding, keeping the lowest-inertia run of
/// `restarts`. Restart `r` draws from a generator seeded with `seed + r`.
pub fn kmeans(x: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let m = x.rows();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= {m}, got {k}")));
    }
    if restarts == 0 {
        return Err(Error::invalid("k-means needs at least one restart"));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let run = lloyd(x, plus_plus_seeds(x, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Initial cluster centers in embedding space.
pub fn kmeans_init_centers(h: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<Matrix> {
    Ok(kmeans(h, k, restarts, seed)?.centers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_blobs_recovered() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let c = (i % 3) as f64 * 10.0;
                vec![c + (i as f64 * 0.01), -c]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let r = kmeans(&x, 3, 5, 1).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(r.labels[i] == r.labels[j], i % 3 == j % 3);
            }
        }
    }

    #[test]
    fn k_equals_m_has_zero_inertia() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let r = kmeans(&x, 3, 2, 0).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert!(kmeans(&x, 4, 1, 0).is_err());
        assert!(kmeans(&x, 0, 1, 0).is_err());
    }

    #[test]
    fn duplicate_points_still_give_k_centers() {
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let r = kmeans(&x, 2, 3, 0).unwrap();
        assert_eq!(r.centers.rows(), 2);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64]).collect::<Vec<_>>()).unwrap();
        let a = kmeans(&x, 4, 3, 9).unwrap();
        let b = kmeans(&x, 4, 3, 9).unwrap();
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.labels, b.labels);
    }
}
