//! Exact nearest-neighbor metrics on embeddings: kNN classification error
//! and neighborhood preservation.

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, DenseMatrix};
use crate::output::atomic_write;
use crate::scalar::Real;
use std::fmt;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnResult {
    pub k: usize,
    pub misclassified: usize,
    pub total: usize,
    pub error_rate: f64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityScore {
    pub k: usize,
    pub score: f64,
}

/// Indices of the `k` rows of `reference` closest to `query`, nearest
/// first, distance ties to the lower index. `skip` is left out.
pub fn nearest<T: Real>(query: &[T], reference: &DenseMatrix<T>, k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
    for (j, row) in reference.row_iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let d = sq_dist(query, row);
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        // rows arrive in index order, so inserting after equal distances
        // keeps lower indices first
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, j));
        best.truncate(k);
    }
    best.into_iter().map(|(_, j)| j).collect()
}

/// Majority label among `neighbors`; ties go to the smallest label.
fn vote(neighbors: &[usize], labels: &[usize]) -> usize {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for &j in neighbors {
        let l = labels[j];
        match counts.iter_mut().find(|(lab, _)| *lab == l) {
            Some(c) => c.1 += 1,
            None => counts.push((l, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
        .expect("at least one neighbor")
}

fn labeled<'a>(labels: &'a Option<Vec<usize>>, what: &str) -> Result<&'a [usize]> {
    labels
        .as_deref()
        .ok_or_else(|| Error::param(format!("{what} embedding has no labels")))
}

fn check_rows<T: Real>(op: &'static str, m: &DenseMatrix<T>, labels: &[usize]) -> Result<()> {
    if m.rows() != labels.len() {
        return Err(Error::shape(op, format!("{} rows but {} labels", m.rows(), labels.len())));
    }
    Ok(())
}

fn knn_core<T: Real>(
    train: &DenseMatrix<T>,
    train_labels: &[usize],
    test: &DenseMatrix<T>,
    test_labels: &[usize],
    k: usize,
    leave_one_out: bool,
) -> Result<usize> {
    check_rows("knn_error", train, train_labels)?;
    check_rows("knn_error", test, test_labels)?;
    if train.cols() != test.cols() {
        return Err(Error::shape("knn_error", "train and test dimensions differ"));
    }
    let available = train.rows() - usize::from(leave_one_out);
    if k == 0 || k > available {
        return Err(Error::param(format!("k = {k} must lie in 1..={available}")));
    }
    Ok((0..test.rows())
        .filter(|&i| {
            let nb = nearest(test.row(i), train, k, leave_one_out.then_some(i));
            vote(&nb, train_labels) != test_labels[i]
        })
        .count())
}

/// Error rate of a `k`-nearest-neighbor vote over `train` for every row
/// of `test`.
pub fn knn_error<T: Real>(
    train: &DenseMatrix<T>,
    train_labels: &[usize],
    test: &DenseMatrix<T>,
    test_labels: &[usize],
    k: usize,
) -> Result<KnnResult> {
    let miss = knn_core(train, train_labels, test, test_labels, k, false)?;
    Ok(KnnResult {
        k,
        misclassified: miss,
        total: test.rows(),
        error_rate: miss as f64 / test.rows() as f64,
        split: Split::Test,
    })
}

/// Leave-one-out error on the training embedding itself.
pub fn knn_error_loo<T: Real>(train: &DenseMatrix<T>, labels: &[usize], k: usize) -> Result<KnnResult> {
    let miss = knn_core(train, labels, train, labels, k, true)?;
    Ok(KnnResult {
        k,
        misclassified: miss,
        total: train.rows(),
        error_rate: miss as f64 / train.rows() as f64,
        split: Split::Train,
    })
}

/// Labeled-embedding convenience over [`knn_error`].
pub fn knn_error_emb<T: Real>(
    train: &crate::output::EmbeddingResult<T>,
    test: &crate::output::EmbeddingResult<T>,
    k: usize,
) -> Result<KnnResult> {
    knn_error(
        &train.coords,
        labeled(&train.labels, "train")?,
        &test.coords,
        labeled(&test.labels, "test")?,
        k,
    )
}

fn quality_core<T: Real, U: Real>(
    high: &DenseMatrix<T>,
    low: &DenseMatrix<U>,
    ref_high: &DenseMatrix<T>,
    ref_low: &DenseMatrix<U>,
    k: usize,
    same_set: bool,
) -> Result<QualityScore> {
    if high.rows() != low.rows() || ref_high.rows() != ref_low.rows() {
        return Err(Error::shape(
            "quality_score",
            format!(
                "high/low rows {}/{}, reference rows {}/{}",
                high.rows(),
                low.rows(),
                ref_high.rows(),
                ref_low.rows()
            ),
        ));
    }
    if high.cols() != ref_high.cols() || low.cols() != ref_low.cols() {
        return Err(Error::shape("quality_score", "query and reference dimensions differ"));
    }
    let available = ref_high.rows() - usize::from(same_set);
    if k == 0 || k > available {
        return Err(Error::param(format!("k = {k} must lie in 1..={available}")));
    }
    if high.rows() == 0 {
        return Err(Error::param("quality score needs at least one query"));
    }
    let mut mark = vec![false; ref_high.rows()];
    let mut total = 0usize;
    for i in 0..high.rows() {
        let skip = same_set.then_some(i);
        let hn = nearest(high.row(i), ref_high, k, skip);
        let ln = nearest(low.row(i), ref_low, k, skip);
        hn.iter().for_each(|&j| mark[j] = true);
        total += ln.iter().filter(|&&j| mark[j]).count();
        hn.iter().for_each(|&j| mark[j] = false);
    }
    Ok(QualityScore {
        k,
        score: total as f64 / (k * high.rows()) as f64,
    })
}

/// Mean fraction of each query's `k` high-dimensional neighbors among the
/// reference set that are also its `k` low-dimensional neighbors.
pub fn quality_score<T: Real, U: Real>(
    high: &DenseMatrix<T>,
    low: &DenseMatrix<U>,
    reference_high: &DenseMatrix<T>,
    reference_low: &DenseMatrix<U>,
    k: usize,
) -> Result<QualityScore> {
    quality_core(high, low, reference_high, reference_low, k, false)
}

/// [`quality_score`] with the queries as their own reference set, each
/// point excluded from its own neighborhood.
pub fn quality_score_within<T: Real, U: Real>(high: &DenseMatrix<T>, low: &DenseMatrix<U>, k: usize) -> Result<QualityScore> {
    quality_core(high, low, high, low, k, true)
}

/// One line of a metrics report.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub k: usize,
    pub split: String,
    pub value: f64,
}

impl From<&KnnResult> for MetricRow {
    fn from(r: &KnnResult) -> Self {
        let metric = if r.k == 1 { "1nn_error".to_owned() } else { "knn_error".to_owned() };
        Self {
            metric,
            k: r.k,
            split: r.split.to_string(),
            value: r.error_rate,
        }
    }
}

impl MetricRow {
    pub fn quality(q: &QualityScore, split: Split) -> Self {
        Self {
            metric: "quality".into(),
            k: q.k,
            split: split.to_string(),
            value: q.score,
        }
    }
}

pub const METRICS_HEADER: &str = "metric,k,split,value";

pub fn write_metrics(rows: &[MetricRow], path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in rows {
            writeln!(w, "{},{},{},{}", r.metric, r.k, r.split, r.value)?;
        }
        Ok(())
    })
}
