//! High-dimensional neighbor probabilities.
//!
//! Every point gets its own Gaussian bandwidth, fitted by bisection on
//! `log σ` so that its conditional neighbor distribution reaches the target
//! perplexity. Two layouts are produced: symmetric joint probabilities over
//! point pairs, and per-point conditionals over a fixed exemplar set.

use crate::error::{Error, Result};
use crate::matrix::{pairwise_sq_dists, self_sq_dists, DenseMatrix};
use crate::scalar::{count, lit, Real};
use std::sync::atomic::{AtomicUsize, Ordering};

/// Bracket for the fitted bandwidth.
pub const SIGMA_MIN: f64 = 1e-20;
pub const SIGMA_MAX: f64 = 1e20;
/// Bisection steps on `log σ` after the bracket is found.
pub const MAX_SEARCH_STEPS: usize = 64;
/// Stop once the achieved perplexity is this close to the target.
pub const PERPLEXITY_TOL: f64 = 1e-5;

static BLOCKS_BUILT: AtomicUsize = AtomicUsize::new(0);

/// Number of affinity blocks (pairwise or exemplar) built by this process.
pub fn blocks_built() -> usize {
    BLOCKS_BUILT.load(Ordering::Relaxed)
}

/// Outcome of a per-point bandwidth search.
#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthFit<T> {
    pub sigma: T,
    pub probs: Vec<T>,
    /// `2^H` of `probs`, H in bits.
    pub perplexity: T,
    /// The target could not be reached; `probs` sit at the nearest limit.
    pub clamped: bool,
}

/// Softmax of `-(d - d_min) / (2σ²)` and its entropy in bits.
fn gaussian_row(shifted: &[f64], log_sigma: f64, out: &mut [f64]) -> f64 {
    let sigma = log_sigma.exp();
    let beta = 1.0 / (2.0 * sigma * sigma);
    let mut total = 0.0;
    for (o, &d) in out.iter_mut().zip(shifted) {
        *o = (-d * beta).exp();
        total += *o;
    }
    let mut h = 0.0;
    for o in out.iter_mut() {
        *o /= total;
        if *o > 0.0 {
            h -= *o * o.log2();
        }
    }
    h
}

/// Fits `σ` so that the Gaussian neighbor distribution over `dists`
/// (squared distances) has perplexity `u`.
///
/// Targets at or above the number of candidates, and rows whose distances
/// are all equal, yield the uniform distribution with `clamped = true`.
/// Rows of all-zero distances are rejected.
pub fn search_sigma<T: Real>(dists: &[T], u: T) -> Result<BandwidthFit<T>> {
    if dists.len() < 2 {
        return Err(Error::param(format!(
            "perplexity search needs at least 2 candidates, got {}",
            dists.len()
        )));
    }
    let u = u.to_f64().unwrap();
    if !(u > 1.0) || !u.is_finite() {
        return Err(Error::param(format!("perplexity must exceed 1, got {u}")));
    }
    let d: Vec<f64> = dists.iter().map(|v| v.to_f64().unwrap()).collect();
    if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::param("distances must be finite and non-negative"));
    }
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().copied().fold(0.0, f64::max);
    if dmax == 0.0 {
        return Err(Error::Degenerate(
            "all candidate distances are zero (duplicated points)".into(),
        ));
    }
    let k = d.len();
    let to_t = |probs: Vec<f64>, sigma: f64, perp: f64, clamped: bool| BandwidthFit {
        sigma: lit(sigma),
        probs: probs.into_iter().map(lit).collect(),
        perplexity: lit(perp),
        clamped,
    };
    if dmin == dmax || u >= k as f64 {
        return Ok(to_t(vec![1.0 / k as f64; k], SIGMA_MAX, k as f64, true));
    }

    let shifted: Vec<f64> = d.iter().map(|v| v - dmin).collect();
    let target = u.log2();
    let mut probs = vec![0.0; k];
    let (lo_bound, hi_bound) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());

    // start from the scale of the spread, then expand geometrically
    let spread = shifted.iter().sum::<f64>() / k as f64;
    let mut x = (0.5 * spread.ln()).clamp(lo_bound, hi_bound);
    let mut h = gaussian_row(&shifted, x, &mut probs);
    let (mut lo, mut hi);
    let mut step = 1.0;
    if h < target {
        lo = x;
        loop {
            if x >= hi_bound {
                return Ok(to_t(probs, SIGMA_MAX, h.exp2(), true));
            }
            x = (x + step).min(hi_bound);
            step *= 2.0;
            h = gaussian_row(&shifted, x, &mut probs);
            if h >= target {
                hi = x;
                break;
            }
            lo = x;
        }
    } else {
        hi = x;
        loop {
            if x <= lo_bound {
                return Ok(to_t(probs, SIGMA_MIN, h.exp2(), true));
            }
            x = (x - step).max(lo_bound);
            step *= 2.0;
            h = gaussian_row(&shifted, x, &mut probs);
            if h <= target {
                lo = x;
                break;
            }
            hi = x;
        }
    }

    let mut best = (f64::INFINITY, x, h);
    for _ in 0..MAX_SEARCH_STEPS {
        let err = (h.exp2() - u).abs();
        if err < best.0 {
            best = (err, x, h);
        }
        if err <= PERPLEXITY_TOL {
            break;
        }
        x = 0.5 * (lo + hi);
        h = gaussian_row(&shifted, x, &mut probs);
        if h < target {
            lo = x;
        } else {
            hi = x;
        }
    }
    let err = (h.exp2() - u).abs();
    if err > best.0 {
        h = gaussian_row(&shifted, best.1, &mut probs);
        x = best.1;
    }
    Ok(to_t(probs, x.exp(), h.exp2(), false))
}

/// Shape and scaling of an [`AffinityBlock`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AffinityKind {
    /// `n x n`, symmetric, zero diagonal, total mass 1.
    PairwiseJoint,
    /// `n x z`, each row a conditional over exemplars scaled to `1/n`.
    ExemplarConditional,
}

/// High-dimensional probabilities with the bandwidths that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityBlock<T> {
    pub p: DenseMatrix<T>,
    pub sigmas: Vec<T>,
    pub perplexity: T,
    pub kind: AffinityKind,
}

impl<T: Real> AffinityBlock<T> {
    /// Expected row sum (`ExemplarConditional`) for the current row count.
    pub fn row_mass(&self) -> T {
        T::one() / count(self.p.rows())
    }

    /// Rows `idx` re-scaled so the batch forms a distribution over
    /// batch × exemplar pairs (each row sums to `1/|idx|`).
    pub fn batch_rows(&self, idx: &[usize]) -> Result<Self> {
        if self.kind != AffinityKind::ExemplarConditional {
            return Err(Error::param("batch_rows applies to exemplar-conditional blocks"));
        }
        let mut p = self.p.select_rows(idx);
        p.scale_in_place(count::<T>(self.p.rows()) / count::<T>(idx.len()));
        Ok(Self {
            p,
            sigmas: idx.iter().map(|&i| self.sigmas[i]).collect(),
            perplexity: self.perplexity,
            kind: self.kind,
        })
    }
}

/// Symmetric joint probabilities `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn pairwise_affinities<T: Real>(data: &DenseMatrix<T>, u: T) -> Result<AffinityBlock<T>> {
    let n = data.rows();
    if n < 3 {
        return Err(Error::param(format!("pairwise affinities need n >= 3, got {n}")));
    }
    if !(u > T::one() && u < count::<T>(n - 1)) {
        return Err(Error::param(format!("perplexity {u} outside (1, n-1) for n={n}")));
    }
    BLOCKS_BUILT.fetch_add(1, Ordering::Relaxed);
    let d = self_sq_dists(data);
    let mut cond = DenseMatrix::<T>::zeros(n, n);
    let mut sigmas = Vec::with_capacity(n);
    let mut others = Vec::with_capacity(n - 1);
    for i in 0..n {
        others.clear();
        others.extend((0..n).filter(|&j| j != i).map(|j| d.get(i, j)));
        let fit = search_sigma(&others, u)?;
        let row = cond.row_mut(i);
        let mut k = 0;
        for (j, slot) in row.iter_mut().enumerate() {
            if j != i {
                *slot = fit.probs[k];
                k += 1;
            }
        }
        sigmas.push(fit.sigma);
    }
    let scale = T::one() / count::<T>(2 * n);
    let p = DenseMatrix::from_fn(n, n, |i, j| (cond.get(i, j) + cond.get(j, i)) * scale);
    Ok(AffinityBlock {
        p,
        sigmas,
        perplexity: u,
        kind: AffinityKind::PairwiseJoint,
    })
}

/// Conditional probabilities of every data row over the exemplars, each row
/// scaled by `1/n`.
pub fn exemplar_affinities<T: Real>(data: &DenseMatrix<T>, exemplars: &DenseMatrix<T>, u: T) -> Result<AffinityBlock<T>> {
    let n = data.rows();
    let z = exemplars.rows();
    if z < 2 {
        return Err(Error::param(format!("exemplar affinities need z >= 2, got {z}")));
    }
    if !(u > T::one() && u < count::<T>(z)) {
        return Err(Error::param(format!("perplexity {u} outside (1, z) for z={z}")));
    }
    BLOCKS_BUILT.fetch_add(1, Ordering::Relaxed);
    let d = pairwise_sq_dists(data, exemplars)?;
    let scale = T::one() / count::<T>(n.max(1));
    let mut p = DenseMatrix::<T>::zeros(n, z);
    let mut sigmas = Vec::with_capacity(n);
    for i in 0..n {
        let fit = search_sigma(d.row(i), u)?;
        for (slot, &q) in p.row_mut(i).iter_mut().zip(&fit.probs) {
            *slot = q * scale;
        }
        sigmas.push(fit.sigma);
    }
    Ok(AffinityBlock {
        p,
        sigmas,
        perplexity: u,
        kind: AffinityKind::ExemplarConditional,
    })
}

/// Sizes for the noise-contrastive approximation of the exemplar objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NceConfig<T> {
    /// Nearest exemplars kept per point.
    pub z_e: usize,
    /// Non-neighbor exemplars sampled per point.
    pub z_n: usize,
    /// Weight on the sampled kernel sum; `None` means `(z - z_e) / z_n`.
    pub k_e: Option<T>,
}

/// Per-point nearest exemplars plus the sampling configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct NceNeighborhood<T> {
    /// `n` rows of `z_e` exemplar indices, nearest first.
    pub neighbors: Vec<Vec<usize>>,
    pub z: usize,
    pub z_e: usize,
    pub z_n: usize,
    pub k_e: T,
}

impl<T: Real> NceNeighborhood<T> {
    /// Nearest `cfg.z_e` exemplars of every row of an exemplar block, ranked
    /// by descending probability (ascending distance), ties to lower index.
    /// Unlike [`truncate_for_nce`], `z_e == z` is allowed.
    pub fn from_block(block: &AffinityBlock<T>, cfg: &NceConfig<T>) -> Result<Self> {
        let z = block.p.cols();
        if block.kind != AffinityKind::ExemplarConditional {
            return Err(Error::param("NCE needs an exemplar-conditional block"));
        }
        if cfg.z_e == 0 || cfg.z_e + cfg.z_n > z {
            return Err(Error::param(format!(
                "need 1 <= z_e and z_e + z_n <= z (z_e={}, z_n={}, z={z})",
                cfg.z_e, cfg.z_n
            )));
        }
        let k_e = match cfg.k_e {
            Some(k) if k > T::zero() && k.is_finite() => k,
            Some(k) => return Err(Error::param(format!("K_e must be positive, got {k}"))),
            None if cfg.z_n == 0 => T::zero(),
            None => count::<T>(z - cfg.z_e) / count::<T>(cfg.z_n),
        };
        let neighbors = block
            .p
            .row_iter()
            .map(|row| {
                let mut order: Vec<usize> = (0..z).collect();
                order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
                order.truncate(cfg.z_e);
                order
            })
            .collect();
        Ok(Self {
            neighbors,
            z,
            z_e: cfg.z_e,
            z_n: cfg.z_n,
            k_e,
        })
    }

    /// Neighborhood rows for a batch.
    pub fn batch_rows(&self, idx: &[usize]) -> Self {
        Self {
            neighbors: idx.iter().map(|&i| self.neighbors[i].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Keeps each row's `z_e` most probable exemplars, zeroes the rest and
/// renormalizes the kept mass back to the row's original total.
pub fn truncate_for_nce<T: Real>(
    block: &AffinityBlock<T>,
    cfg: &NceConfig<T>,
) -> Result<(AffinityBlock<T>, NceNeighborhood<T>)> {
    if cfg.z_e >= block.p.cols() {
        return Err(Error::param(format!(
            "z_e ({}) must be below the exemplar count ({})",
            cfg.z_e,
            block.p.cols()
        )));
    }
    let nbhd = NceNeighborhood::from_block(block, cfg)?;
    let mut out = block.clone();
    for (i, keep) in nbhd.neighbors.iter().enumerate() {
        let row = out.p.row_mut(i);
        let total: T = row.iter().copied().sum();
        let kept: T = keep.iter().map(|&j| row[j]).sum();
        let mut mask = vec![false; row.len()];
        for &j in keep {
            mask[j] = true;
        }
        let k = total / kept;
        for (j, v) in row.iter_mut().enumerate() {
            *v = if mask[j] { *v * k } else { T::zero() };
        }
    }
    Ok((out, nbhd))
}
