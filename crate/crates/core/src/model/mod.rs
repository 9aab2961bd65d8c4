//! Parametric embedding functions `f: R^H -> R^h` with hand-written
//! backpropagation.

mod checkpoint;
mod feedforward;
mod gradcheck;
mod high_order;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, BlockInfo, CheckpointHeader, CHECKPOINT_FORMAT,
};
pub use feedforward::{Activation, FeedForwardCache, FeedForwardNet};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use high_order::{HighOrderCache, HighOrderNet};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;
use crate::scalar::{lit, Real};

/// Gradients of a scalar loss, one block per model parameter, in the
/// model's declared parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle<T> {
    pub names: Vec<String>,
    pub blocks: Vec<DenseMatrix<T>>,
}

impl<T: Real> GradientBundle<T> {
    pub fn zeros_like<M: EmbeddingFunction<T> + ?Sized>(model: &M) -> Self {
        Self {
            names: model.param_names(),
            blocks: model
                .params()
                .iter()
                .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.blocks[i])
    }

    pub fn norm(&self) -> T {
        self.blocks.iter().map(|b| b.frobenius_sq()).sum::<T>().sqrt()
    }

    pub fn scale(&mut self, k: T) {
        self.blocks.iter_mut().for_each(|b| b.scale_in_place(k));
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.is_finite())
    }

    /// Rescales so the global norm does not exceed `max_norm`.
    pub fn clip_norm(&mut self, max_norm: T) -> T {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }
}

/// A differentiable map from input rows to embedding rows.
pub trait EmbeddingFunction<T: Real> {
    /// Intermediate values kept from the forward pass for backpropagation.
    type Cache;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn forward_cached(&self, x: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, Self::Cache)>;

    /// Parameter gradients given `∂L/∂Y` for the cached forward pass.
    fn backward_cached(&self, cache: &Self::Cache, dl_dy: &DenseMatrix<T>) -> Result<GradientBundle<T>>;

    fn param_names(&self) -> Vec<String>;
    fn params(&self) -> Vec<&DenseMatrix<T>>;
    fn params_mut(&mut self) -> Vec<&mut DenseMatrix<T>>;

    fn forward(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    fn backward(&self, x: &DenseMatrix<T>, dl_dy: &DenseMatrix<T>) -> Result<GradientBundle<T>> {
        let (_, cache) = self.forward_cached(x)?;
        self.backward_cached(&cache, dl_dy)
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

pub(crate) fn check_input<T: Real>(op: &'static str, x: &DenseMatrix<T>, dim: usize) -> Result<()> {
    if x.cols() != dim {
        return Err(Error::shape(op, format!("input has {} columns, model expects {dim}", x.cols())));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite(op));
    }
    Ok(())
}

pub(crate) fn check_cotangent<T: Real>(op: &'static str, dl_dy: &DenseMatrix<T>, rows: usize, cols: usize) -> Result<()> {
    if dl_dy.shape() != (rows, cols) {
        return Err(Error::shape(
            op,
            format!("dL/dY is {:?}, expected ({rows}, {cols})", dl_dy.shape()),
        ));
    }
    Ok(())
}

/// Uniform(±√(6/(fan_in+fan_out))) initialization.
pub fn glorot_uniform<T: Real>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> DenseMatrix<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| lit((2.0 * rng.uniform() - 1.0) * limit))
}

/// Either embedding network behind one type.
#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingModel<T> {
    HighOrder(HighOrderNet<T>),
    FeedForward(FeedForwardNet<T>),
}

pub enum ModelCache<T> {
    HighOrder(HighOrderCache<T>),
    FeedForward(FeedForwardCache<T>),
}

impl<T: Real> EmbeddingModel<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            EmbeddingModel::HighOrder(_) => "high-order",
            EmbeddingModel::FeedForward(_) => "feedforward",
        }
    }
}

impl<T: Real> EmbeddingFunction<T> for EmbeddingModel<T> {
    type Cache = ModelCache<T>;

    fn input_dim(&self) -> usize {
        match self {
            EmbeddingModel::HighOrder(m) => m.input_dim(),
            EmbeddingModel::FeedForward(m) => m.input_dim(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            EmbeddingModel::HighOrder(m) => m.output_dim(),
            EmbeddingModel::FeedForward(m) => m.output_dim(),
        }
    }

    fn forward_cached(&self, x: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, Self::Cache)> {
        Ok(match self {
            EmbeddingModel::HighOrder(m) => {
                let (y, c) = m.forward_cached(x)?;
                (y, ModelCache::HighOrder(c))
            }
            EmbeddingModel::FeedForward(m) => {
                let (y, c) = m.forward_cached(x)?;
                (y, ModelCache::FeedForward(c))
            }
        })
    }

    fn backward_cached(&self, cache: &Self::Cache, dl_dy: &DenseMatrix<T>) -> Result<GradientBundle<T>> {
        match (self, cache) {
            (EmbeddingModel::HighOrder(m), ModelCache::HighOrder(c)) => m.backward_cached(c, dl_dy),
            (EmbeddingModel::FeedForward(m), ModelCache::FeedForward(c)) => m.backward_cached(c, dl_dy),
            _ => Err(Error::param("forward cache belongs to a different model kind")),
        }
    }

    fn param_names(&self) -> Vec<String> {
        match self {
            EmbeddingModel::HighOrder(m) => m.param_names(),
            EmbeddingModel::FeedForward(m) => m.param_names(),
        }
    }

    fn params(&self) -> Vec<&DenseMatrix<T>> {
        match self {
            EmbeddingModel::HighOrder(m) => m.params(),
            EmbeddingModel::FeedForward(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut DenseMatrix<T>> {
        match self {
            EmbeddingModel::HighOrder(m) => m.params_mut(),
            EmbeddingModel::FeedForward(m) => m.params_mut(),
        }
    }
}
