//! Exemplar selection: a fixed number of Lloyd iterations started from
//! scalable k-means++ (k-means‖) or uniformly random seeds.

use crate::error::{Error, Result};
use crate::matrix::{pairwise_sq_dists, sq_dist, DenseMatrix};
use crate::rng::Rng;
use crate::scalar::{count, Real};
use serde::{Deserialize, Serialize};

/// Oversampling rounds of k-means‖.
pub const KMEANS_PARALLEL_ROUNDS: usize = 5;
/// Default number of Lloyd iterations.
pub const DEFAULT_KMEANS_ITERS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Seeding {
    /// k-means‖ (scalable k-means++).
    #[default]
    Careful,
    /// Distinct data rows drawn uniformly.
    Random,
}

impl std::str::FromStr for Seeding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "careful" => Ok(Seeding::Careful),
            "random" => Ok(Seeding::Random),
            other => Err(Error::param(format!("unknown seeding {other:?} (careful|random)"))),
        }
    }
}

/// Representative points `e^(j)` together with how they were obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct ExemplarSet<T> {
    /// `z x H` exemplar vectors.
    pub exemplars: DenseMatrix<T>,
    pub seeding: Seeding,
    pub kmeans_iters: usize,
    pub seed: u64,
    /// Cluster index of every data row under the assignment that produced
    /// the final means.
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each iteration.
    pub wcss_history: Vec<T>,
    /// Iterations (0-based) in which an empty cluster was re-seeded.
    pub reseed_iterations: Vec<usize>,
}

impl<T: Real> ExemplarSet<T> {
    pub fn len(&self) -> usize {
        self.exemplars.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.rows() == 0
    }
}

fn check_z(n: usize, z: usize) -> Result<()> {
    if z == 0 || z > n {
        return Err(Error::param(format!("need 1 <= z <= n, got z={z}, n={n}")));
    }
    Ok(())
}

/// `z` distinct data rows drawn uniformly without replacement.
pub fn seed_random<T: Real>(data: &DenseMatrix<T>, z: usize, rng: &mut Rng) -> Result<DenseMatrix<T>> {
    check_z(data.rows(), z)?;
    Ok(data.select_rows(&rng.sample_distinct(data.rows(), z)))
}

/// Nearest-center index and distance for every row; ties go to the lowest index.
fn nearest<T: Real>(dists: &DenseMatrix<T>) -> Vec<(usize, T)> {
    dists
        .row_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::infinity()), |best, (j, &d)| if d < best.1 { (j, d) } else { best })
        })
        .collect()
}

/// Row indices of the initial centers chosen by k-means‖.
///
/// One uniform seed, then [`KMEANS_PARALLEL_ROUNDS`] rounds sampling each
/// point independently with probability `ℓ·d²(x)/Σd²` (`ℓ = 2z`), then a
/// weighted k-means++ pass over the candidates with weights equal to the
/// number of points each candidate attracts.
pub fn kmeans_parallel_indices<T: Real>(data: &DenseMatrix<T>, z: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let n = data.rows();
    check_z(n, z)?;
    let first = rng.below(n);
    if z == 1 {
        return Ok(vec![first]);
    }
    let oversample = 2.0 * z as f64;

    let mut candidates = vec![first];
    let mut is_candidate = vec![false; n];
    is_candidate[first] = true;
    let mut d2: Vec<f64> = data
        .row_iter()
        .map(|r| sq_dist(r, data.row(first)).to_f64().unwrap())
        .collect();

    for _ in 0..KMEANS_PARALLEL_ROUNDS {
        let phi: f64 = d2.iter().sum();
        if phi <= 0.0 {
            break;
        }
        let mut fresh = Vec::new();
        for (i, &d) in d2.iter().enumerate() {
            let u = rng.uniform();
            if !is_candidate[i] && u < oversample * d / phi {
                fresh.push(i);
            }
        }
        if fresh.is_empty() {
            continue;
        }
        for &i in &fresh {
            is_candidate[i] = true;
        }
        let block = pairwise_sq_dists(data, &data.select_rows(&fresh))?;
        for (i, (_, d)) in nearest(&block).into_iter().enumerate() {
            d2[i] = d2[i].min(d.to_f64().unwrap());
        }
        candidates.extend(fresh);
    }

    if candidates.len() <= z {
        return Ok(fill_with_kmeanspp(data, candidates, z, rng));
    }

    // weight = number of points whose nearest candidate it is
    let cand_rows = data.select_rows(&candidates);
    let mut weights = vec![0.0f64; candidates.len()];
    for (j, _) in nearest(&pairwise_sq_dists(data, &cand_rows)?) {
        weights[j] += 1.0;
    }
    let picked = weighted_kmeanspp(&cand_rows, &weights, z, rng);
    Ok(picked.into_iter().map(|c| candidates[c]).collect())
}

/// Extends `chosen` to `z` rows by D²-sampling over the whole dataset.
fn fill_with_kmeanspp<T: Real>(data: &DenseMatrix<T>, mut chosen: Vec<usize>, z: usize, rng: &mut Rng) -> Vec<usize> {
    let n = data.rows();
    let mut taken = vec![false; n];
    let mut d2 = vec![f64::INFINITY; n];
    for &c in &chosen {
        taken[c] = true;
    }
    for (i, d) in d2.iter_mut().enumerate() {
        for &c in &chosen {
            *d = d.min(sq_dist(data.row(i), data.row(c)).to_f64().unwrap());
        }
    }
    while chosen.len() < z {
        let w: Vec<f64> = (0..n).map(|i| if taken[i] { 0.0 } else { d2[i] }).collect();
        let next = rng.weighted_index(&w).unwrap_or_else(|| {
            // only duplicates of chosen rows remain
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.below(free.len())]
        });
        taken[next] = true;
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), data.row(next)).to_f64().unwrap());
        }
    }
    chosen
}

/// k-means++ over weighted points; returns `z` distinct point indices.
fn weighted_kmeanspp<T: Real>(points: &DenseMatrix<T>, weights: &[f64], z: usize, rng: &mut Rng) -> Vec<usize> {
    let m = points.rows();
    let mut taken = vec![false; m];
    let mut d2 = vec![f64::INFINITY; m];
    let mut chosen = Vec::with_capacity(z);
    while chosen.len() < z {
        let scores: Vec<f64> = (0..m)
            .map(|i| {
                if taken[i] {
                    0.0
                } else if chosen.is_empty() {
                    weights[i]
                } else {
                    weights[i] * d2[i]
                }
            })
            .collect();
        let next = rng.weighted_index(&scores).unwrap_or_else(|| {
            let free: Vec<usize> = (0..m).filter(|&i| !taken[i]).collect();
            free[rng.below(free.len())]
        });
        taken[next] = true;
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)).to_f64().unwrap());
        }
    }
    chosen
}

/// Initial centers chosen by k-means‖ (see [`kmeans_parallel_indices`]).
pub fn seed_scalable_kmeanspp<T: Real>(data: &DenseMatrix<T>, z: usize, rng: &mut Rng) -> Result<DenseMatrix<T>> {
    Ok(data.select_rows(&kmeans_parallel_indices(data, z, rng)?))
}

/// Within-cluster sum of squares of `data` against `centers`.
pub fn wcss<T: Real>(data: &DenseMatrix<T>, centers: &DenseMatrix<T>) -> Result<T> {
    let d = pairwise_sq_dists(data, centers)?;
    Ok(nearest(&d)
        .into_iter()
        .enumerate()
        .map(|(i, (j, _))| sq_dist(data.row(i), centers.row(j)))
        .sum())
}

/// Runs exactly `iters` Lloyd iterations from `centers`.
///
/// Points go to the nearest center (ties to the lowest index); centers
/// become the means of their points. A cluster left empty is re-seeded with
/// the point farthest from its assigned center.
pub fn kmeans_refine<T: Real>(data: &DenseMatrix<T>, centers: &DenseMatrix<T>, iters: usize) -> Result<ExemplarSet<T>> {
    if centers.cols() != data.cols() {
        return Err(Error::shape(
            "kmeans_refine",
            format!("centers have {} columns, data {}", centers.cols(), data.cols()),
        ));
    }
    let z = centers.rows();
    let h = data.cols();
    let mut centers = centers.clone();
    let mut assignments: Vec<usize> = nearest(&pairwise_sq_dists(data, &centers)?)
        .into_iter()
        .map(|(j, _)| j)
        .collect();
    let mut history = Vec::with_capacity(iters);
    let mut reseeds = Vec::new();

    for it in 0..iters {
        let near = nearest(&pairwise_sq_dists(data, &centers)?);
        assignments = near.iter().map(|&(j, _)| j).collect();

        let mut sums = DenseMatrix::<T>::zeros(z, h);
        let mut counts = vec![0usize; z];
        for (i, &j) in assignments.iter().enumerate() {
            counts[j] += 1;
            for (s, &x) in sums.row_mut(j).iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }

        let mut farthest: Vec<(usize, T)> = near
            .iter()
            .enumerate()
            .map(|(i, &(j, _))| (i, sq_dist(data.row(i), centers.row(j))))
            .collect();
        // descending distance, ties to the lowest row index
        farthest.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut donors = farthest.into_iter().map(|(i, _)| i);

        let mut reseeded = false;
        for j in 0..z {
            if counts[j] == 0 {
                reseeded = true;
                if let Some(i) = donors.next() {
                    centers.row_mut(j).copy_from_slice(data.row(i));
                }
            } else {
                let inv = T::one() / count::<T>(counts[j]);
                for (c, &s) in centers.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *c = s * inv;
                }
            }
        }
        if reseeded {
            reseeds.push(it);
        }
        history.push(wcss(data, &centers)?);
    }

    Ok(ExemplarSet {
        exemplars: centers,
        seeding: Seeding::Careful,
        kmeans_iters: iters,
        seed: 0,
        assignments,
        wcss_history: history,
        reseed_iterations: reseeds,
    })
}

/// Seeds and refines `z` exemplars; all randomness comes from `seed`.
pub fn select_exemplars<T: Real>(
    data: &DenseMatrix<T>,
    z: usize,
    seeding: Seeding,
    iters: usize,
    seed: u64,
) -> Result<ExemplarSet<T>> {
    let mut rng = Rng::new(seed);
    let init = match seeding {
        Seeding::Careful => seed_scalable_kmeanspp(data, z, &mut rng)?,
        Seeding::Random => seed_random(data, z, &mut rng)?,
    };
    let mut set = kmeans_refine(data, &init, iters)?;
    set.seeding = seeding;
    set.seed = seed;
    Ok(set)
}
