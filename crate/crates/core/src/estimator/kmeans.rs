//! Clustering-based starting values for factor models.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::families::FactorModel;
use crate::sample::RankMatrix;

/// Floor for the cluster masses.
pub const MASS_FLOOR: f64 = 1e-6;
const KMEANS_RESTARTS: usize = 20;
const LLOYD_MAX_ITER: usize = 300;

#[derive(Debug, Clone)]
pub struct Clustering {
    pub centers: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> Clustering {
    let dim = points[0].len();
    let r = centers.len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..LLOYD_MAX_ITER {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centers);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; r];
        let mut counts = vec![0usize; r];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..r {
            if counts[c] == 0 {
                // reseed an empty cluster at the point farthest from its center
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, dist2(p, &centers[assignment[i]])))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                centers[c] = points[far].clone();
                assignment[far] = c;
                changed = true;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| dist2(p, &centers[a]))
        .sum();
    Clustering {
        centers,
        assignment,
        inertia,
    }
}

fn plus_plus(points: &[Vec<f64>], r: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < r {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centers.push(points[idx].clone());
        for (v, p) in d2.iter_mut().zip(points) {
            *v = v.min(dist2(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

/// `r`-means clustering with k-means++ seeding; the best of `restarts`
/// seeded runs by within-cluster sum of squares, ties to the earliest run.
pub fn kmeans(points: &[Vec<f64>], r: usize, restarts: usize, seed: u64) -> Result<Clustering> {
    if r == 0 || points.len() < r {
        return Err(Error::Clustering(format!(
            "{} points cannot form {r} clusters",
            points.len()
        )));
    }
    let mut best: Option<Clustering> = None;
    for run in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64);
        let result = lloyd(points, plus_plus(points, r, &mut rng));
        if best.as_ref().map_or(true, |b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Nonnegative least squares `min |A m - b|, m >= 0` by enumerating active
/// sets; exact and adequate for the handful of columns used here.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let cols = a.ncols();
    assert!(cols < 20, "nnls enumeration limited to small problems");
    let mut best = DVector::zeros(cols);
    let mut best_res = b.norm_squared();
    for mask in 1u32..(1 << cols) {
        let idx: Vec<usize> = (0..cols).filter(|i| mask & (1 << i) != 0).collect();
        let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
        let Some(sol) = sub.clone().svd(true, true).solve(b, 1e-12).ok() else {
            continue;
        };
        if sol.iter().any(|&v| v < 0.0) {
            continue;
        }
        let res = (&sub * &sol - b).norm_squared();
        if res < best_res - 1e-15 {
            best_res = res;
            best = DVector::zeros(cols);
            for (c, &i) in idx.iter().enumerate() {
                best[i] = sol[c];
            }
        }
    }
    best
}

/// Pseudo-observations `n / (n + 1 - R)` whose coordinate sum exceeds
/// `n / divisor`, scaled onto the unit simplex.
pub fn extreme_directions(ranks: &RankMatrix, divisor: f64) -> Vec<Vec<f64>> {
    let n = ranks.n() as f64;
    let threshold = n / divisor;
    (0..ranks.n())
        .filter_map(|i| {
            let row: Vec<f64> = ranks.row(i).iter().map(|&r| n / (n + 1.0 - r as f64)).collect();
            let s: f64 = row.iter().sum();
            (s > threshold).then(|| row.iter().map(|v| v / s).collect())
        })
        .collect()
}

/// Starting loadings for an `r`-factor model: cluster the angular parts
/// of the largest observations, read the centers as spectral atoms and
/// solve for their masses so that each coordinate's loadings sum to one.
///
/// If fewer than `r * d` points pass the threshold, the threshold is
/// halved once before giving up.
pub fn factor_init_kmeans(ranks: &RankMatrix, r: usize, divisor: f64, seed: u64) -> Result<FactorModel> {
    let d = ranks.d();
    if r == 0 {
        return Err(Error::Config("factor count must be positive".into()));
    }
    if r == 1 {
        return FactorModel::new(d, 1, vec![1.0; d]);
    }
    let needed = r * d;
    let mut points = extreme_directions(ranks, divisor);
    if points.len() < needed {
        points = extreme_directions(ranks, 2.0 * divisor);
    }
    if points.len() < needed {
        return Err(Error::Clustering(format!(
            "only {} observations above the threshold, {needed} needed",
            points.len()
        )));
    }
    let clusters = kmeans(&points, r, KMEANS_RESTARTS, seed)?;
    let a = DMatrix::from_fn(d, r, |j, i| clusters.centers[i][j]);
    let masses = nnls(&a, &DVector::from_element(d, 1.0)).map(|m| m.max(MASS_FLOOR));
    let mut b = vec![0.0; d * r];
    for j in 0..d {
        let mut total = 0.0;
        for i in 0..r {
            let v = (masses[i] * clusters.centers[i][j]).max(f64::MIN_POSITIVE);
            b[j * r + i] = v;
            total += v;
        }
        for i in 0..r {
            b[j * r + i] /= total;
        }
    }
    Ok(FactorModel::new(d, r, b)?.canonical())
}
