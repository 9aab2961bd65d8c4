//! KL objectives between high-dimensional neighbor probabilities and
//! Student-t similarities of the embedded points, with gradients with
//! respect to the embedded coordinates.

use crate::affinity::{AffinityBlock, AffinityKind, NceNeighborhood};
use crate::error::{Error, Result};
use crate::matrix::{pairwise_sq_dists, self_sq_dists, DenseMatrix};
use crate::rng::Rng;
use crate::scalar::{lit, Real};

/// Smallest `q` fed to the logarithm.
pub const Q_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct LowDimAffinities<T> {
    pub q: DenseMatrix<T>,
    /// Unnormalized kernel values `(1 + d)^-1`.
    pub kernel: DenseMatrix<T>,
    pub normalizer: T,
    pub kind: AffinityKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport<T> {
    pub value: T,
    /// `∂ℓ/∂y_i` for the data rows.
    pub grad_data: DenseMatrix<T>,
    /// `∂ℓ/∂e_j` for the exemplar rows; `None` for the pairwise objective.
    pub grad_exemplars: Option<DenseMatrix<T>>,
}

fn student_t<T: Real>(d: &DenseMatrix<T>) -> DenseMatrix<T> {
    d.map(|v| T::one() / (T::one() + v))
}

/// Joint Student-t similarities over ordered pairs `i != j`.
pub fn pairwise_q<T: Real>(y: &DenseMatrix<T>) -> Result<LowDimAffinities<T>> {
    if y.rows() < 2 {
        return Err(Error::param("pairwise_q needs at least 2 points"));
    }
    let mut kernel = student_t(&self_sq_dists(y));
    for i in 0..y.rows() {
        kernel.set(i, i, T::zero());
    }
    let normalizer = kernel.sum();
    let q = kernel.map(|w| w / normalizer);
    Ok(LowDimAffinities {
        q,
        kernel,
        normalizer,
        kind: AffinityKind::PairwiseJoint,
    })
}

/// Student-t similarities between data and exemplar rows, normalized over
/// every data-exemplar pair present.
pub fn exemplar_q<T: Real>(y_data: &DenseMatrix<T>, y_ex: &DenseMatrix<T>) -> Result<LowDimAffinities<T>> {
    if y_data.is_empty() || y_ex.is_empty() {
        return Err(Error::param("exemplar_q needs at least one data row and one exemplar"));
    }
    let kernel = student_t(&pairwise_sq_dists(y_data, y_ex)?);
    let normalizer = kernel.sum();
    let q = kernel.map(|w| w / normalizer);
    Ok(LowDimAffinities {
        q,
        kernel,
        normalizer,
        kind: AffinityKind::ExemplarConditional,
    })
}

fn kl_term<T: Real>(p: T, q: T, row: usize, col: usize) -> Result<T> {
    if p <= T::zero() {
        return Ok(T::zero());
    }
    if q <= T::zero() || !q.is_finite() {
        return Err(Error::InfiniteDivergence { row, col });
    }
    Ok(p * (p.ln() - q.max(lit(Q_FLOOR)).ln()))
}

/// `Σ p log(p/q)` over the support of `p`.
pub fn kl_divergence<T: Real>(p: &DenseMatrix<T>, q: &DenseMatrix<T>) -> Result<T> {
    if p.shape() != q.shape() {
        return Err(Error::shape("kl_divergence", format!("{:?} vs {:?}", p.shape(), q.shape())));
    }
    let mut total = T::zero();
    for i in 0..p.rows() {
        for (j, (&pv, &qv)) in p.row(i).iter().zip(q.row(i)).enumerate() {
            total += kl_term(pv, qv, i, j)?;
        }
    }
    Ok(total)
}

/// Pairwise objective and its gradient with respect to `y`.
pub fn kl_pairwise<T: Real>(p: &AffinityBlock<T>, y: &DenseMatrix<T>) -> Result<LossReport<T>> {
    if p.kind != AffinityKind::PairwiseJoint {
        return Err(Error::param("kl_pairwise needs a pairwise-joint block"));
    }
    let n = y.rows();
    if p.p.shape() != (n, n) {
        return Err(Error::shape("kl_pairwise", format!("P is {:?}, Y has {n} rows", p.p.shape())));
    }
    let q = pairwise_q(y)?;
    let value = kl_divergence(&p.p, &q.q)?;
    let mass = p.p.sum();
    let h = y.cols();
    let four: T = lit(4.0);
    let mut grad = DenseMatrix::zeros(n, h);
    for i in 0..n {
        let yi = y.row(i);
        let mut g = vec![T::zero(); h];
        for j in 0..n {
            if j == i {
                continue;
            }
            let w = q.kernel.get(i, j);
            let c = w * (p.p.get(i, j) - mass * q.q.get(i, j));
            for (gk, (&a, &b)) in g.iter_mut().zip(yi.iter().zip(y.row(j))) {
                *gk += c * (a - b);
            }
        }
        for (dst, v) in grad.row_mut(i).iter_mut().zip(g) {
            *dst = four * v;
        }
    }
    Ok(LossReport {
        value,
        grad_data: grad,
        grad_exemplars: None,
    })
}

/// Accumulates `c_ij (y_i - e_j)` into both gradient blocks.
fn accumulate_bipartite<T: Real>(
    coef: &DenseMatrix<T>,
    y_data: &DenseMatrix<T>,
    y_ex: &DenseMatrix<T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    // Σ_j c_ij (y_i - e_j) = y_i Σ_j c_ij - (C E)_i
    let row_sums: Vec<T> = coef.row_iter().map(|r| r.iter().copied().sum()).collect();
    let col_sums = coef.column_sums();
    let ce = coef.matmul(y_ex)?;
    let cty = coef.t_matmul(y_data)?;
    let two: T = lit(2.0);
    let gd = DenseMatrix::from_fn(y_data.rows(), y_data.cols(), |i, k| {
        two * (y_data.get(i, k) * row_sums[i] - ce.get(i, k))
    });
    let ge = DenseMatrix::from_fn(y_ex.rows(), y_ex.cols(), |j, k| {
        -two * (cty.get(j, k) - y_ex.get(j, k) * col_sums[j])
    });
    Ok((gd, ge))
}

fn check_exemplar_shapes<T: Real>(op: &'static str, p: &AffinityBlock<T>, yd: &DenseMatrix<T>, ye: &DenseMatrix<T>) -> Result<()> {
    if p.kind != AffinityKind::ExemplarConditional {
        return Err(Error::param(format!("{op} needs an exemplar-conditional block")));
    }
    if p.p.shape() != (yd.rows(), ye.rows()) || yd.cols() != ye.cols() {
        return Err(Error::shape(
            op,
            format!("P is {:?}, data {:?}, exemplars {:?}", p.p.shape(), yd.shape(), ye.shape()),
        ));
    }
    Ok(())
}

/// Exemplar-centered objective and gradients for data and exemplar rows.
pub fn kl_exemplar<T: Real>(p: &AffinityBlock<T>, y_data: &DenseMatrix<T>, y_ex: &DenseMatrix<T>) -> Result<LossReport<T>> {
    check_exemplar_shapes("kl_exemplar", p, y_data, y_ex)?;
    let q = exemplar_q(y_data, y_ex)?;
    let value = kl_divergence(&p.p, &q.q)?;
    let mass = p.p.sum();
    let coef = DenseMatrix::from_fn(p.p.rows(), p.p.cols(), |i, j| {
        q.kernel.get(i, j) * (p.p.get(i, j) - mass * q.q.get(i, j))
    });
    let (gd, ge) = accumulate_bipartite(&coef, y_data, y_ex)?;
    Ok(LossReport {
        value,
        grad_data: gd,
        grad_exemplars: Some(ge),
    })
}

/// Per-row sampled non-neighbors: `z_n` exemplars drawn uniformly without
/// replacement from outside each row's neighbor set.
pub fn draw_nce_samples<T: Real>(nbhd: &NceNeighborhood<T>, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut inside = vec![false; nbhd.z];
    nbhd.neighbors
        .iter()
        .map(|nbrs| {
            if nbhd.z_n == 0 {
                return Vec::new();
            }
            nbrs.iter().for_each(|&j| inside[j] = true);
            let outside: Vec<usize> = (0..nbhd.z).filter(|&j| !inside[j]).collect();
            nbrs.iter().for_each(|&j| inside[j] = false);
            rng.sample_distinct(outside.len(), nbhd.z_n)
                .into_iter()
                .map(|k| outside[k])
                .collect()
        })
        .collect()
}

/// Exact normalizer `Σ_i Σ_j (1 + d_ij)^-1` over all data-exemplar pairs.
pub fn exact_normalizer<T: Real>(y_data: &DenseMatrix<T>, y_ex: &DenseMatrix<T>) -> Result<T> {
    Ok(student_t(&pairwise_sq_dists(y_data, y_ex)?).sum())
}

/// One sampled estimate of the normalizer.
pub fn sampled_normalizer<T: Real>(
    nbhd: &NceNeighborhood<T>,
    y_data: &DenseMatrix<T>,
    y_ex: &DenseMatrix<T>,
    rng: &mut Rng,
) -> Result<T> {
    let samples = draw_nce_samples(nbhd, rng);
    let (mult, kernel) = nce_weights(nbhd, &samples, y_data, y_ex)?;
    Ok(mult
        .as_slice()
        .iter()
        .zip(kernel.as_slice())
        .map(|(&m, &w)| m * w)
        .sum())
}

/// Multiplier (1 for neighbors, K_e for samples, 0 elsewhere) and kernel
/// values on the kept pairs.
fn nce_weights<T: Real>(
    nbhd: &NceNeighborhood<T>,
    samples: &[Vec<usize>],
    y_data: &DenseMatrix<T>,
    y_ex: &DenseMatrix<T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    let n = y_data.rows();
    let z = y_ex.rows();
    if nbhd.neighbors.len() != n || nbhd.z != z {
        return Err(Error::shape(
            "kl_exemplar_nce",
            format!("neighborhood is {}x{}, data {n} rows, {z} exemplars", nbhd.neighbors.len(), nbhd.z),
        ));
    }
    let mut mult = DenseMatrix::zeros(n, z);
    let mut kernel = DenseMatrix::zeros(n, z);
    for i in 0..n {
        let yi = y_data.row(i);
        for (set, m) in [(&nbhd.neighbors[i], T::one()), (&samples[i], nbhd.k_e)] {
            for &j in set {
                mult.set(i, j, m);
                let d: T = yi.iter().zip(y_ex.row(j)).map(|(&a, &b)| (a - b) * (a - b)).sum();
                kernel.set(i, j, T::one() / (T::one() + d));
            }
        }
    }
    Ok((mult, kernel))
}

/// Exemplar-centered objective with the normalizer estimated from each
/// row's neighbors plus `K_e`-weighted sampled non-neighbors.
///
/// The estimate is not a true divergence and can fall slightly below zero.
pub fn kl_exemplar_nce<T: Real>(
    p_trunc: &AffinityBlock<T>,
    nbhd: &NceNeighborhood<T>,
    y_data: &DenseMatrix<T>,
    y_ex: &DenseMatrix<T>,
    rng: &mut Rng,
) -> Result<LossReport<T>> {
    check_exemplar_shapes("kl_exemplar_nce", p_trunc, y_data, y_ex)?;
    if nbhd.z_e + nbhd.z_n > nbhd.z {
        return Err(Error::param(format!(
            "z_e + z_n = {} exceeds z = {}",
            nbhd.z_e + nbhd.z_n,
            nbhd.z
        )));
    }
    let samples = draw_nce_samples(nbhd, rng);
    let (mult, kernel) = nce_weights(nbhd, &samples, y_data, y_ex)?;
    let normalizer: T = mult
        .as_slice()
        .iter()
        .zip(kernel.as_slice())
        .map(|(&m, &w)| m * w)
        .sum();
    let mass = p_trunc.p.sum();
    let (n, z) = p_trunc.p.shape();
    let mut value = T::zero();
    let mut coef = DenseMatrix::zeros(n, z);
    for i in 0..n {
        for j in 0..z {
            let m = mult.get(i, j);
            let pv = p_trunc.p.get(i, j);
            if m == T::zero() {
                if pv > T::zero() {
                    return Err(Error::param("P has mass outside the NCE neighborhood"));
                }
                continue;
            }
            let w = kernel.get(i, j);
            let q = w / normalizer;
            value += kl_term(pv, q, i, j)?;
            coef.set(i, j, w * (pv - mass * m * q));
        }
    }
    let (gd, ge) = accumulate_bipartite(&coef, y_data, y_ex)?;
    Ok(LossReport {
        value,
        grad_data: gd,
        grad_exemplars: Some(ge),
    })
}
