//! Fully connected network with elementwise hidden activations and a linear
//! output layer.

use super::{check_cotangent, check_input, glorot_uniform, EmbeddingFunction, GradientBundle};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;
use crate::scalar::{logistic, Real};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Logistic,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, t: T) -> T {
        match self {
            Activation::Relu => t.max(T::zero()),
            Activation::Logistic => logistic(t),
            Activation::Identity => t,
        }
    }

    /// Derivative expressed through the pre-activation `t` and output `a`.
    #[inline]
    fn derivative<T: Real>(self, t: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if t > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Logistic => a * (T::one() - a),
            Activation::Identity => T::one(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "logistic" | "sigmoid" => Ok(Activation::Logistic),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::param(format!("unknown activation {other:?}"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Logistic => "logistic",
            Activation::Identity => "identity",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardNet<T> {
    /// `[H, hidden..., h]`.
    pub layer_dims: Vec<usize>,
    /// Layer `l` maps `dims[l]` to `dims[l+1]` as `x W_l + b_l`.
    pub weights: Vec<DenseMatrix<T>>,
    pub biases: Vec<DenseMatrix<T>>,
    pub activation: Activation,
}

pub struct FeedForwardCache<T> {
    /// Input of every layer (`inputs[0]` is the data).
    inputs: Vec<DenseMatrix<T>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<DenseMatrix<T>>,
}

impl<T: Real> FeedForwardNet<T> {
    pub fn new(layer_dims: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::param(format!("invalid layer sizes {layer_dims:?}")));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| glorot_uniform(w[0], w[1], w[0], w[1], rng))
            .collect();
        let biases = layer_dims[1..].iter().map(|&d| DenseMatrix::zeros(1, d)).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn from_parts(weights: Vec<DenseMatrix<T>>, biases: Vec<DenseMatrix<T>>, activation: Activation) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::shape("FeedForwardNet::from_parts", "need one bias per weight matrix"));
        }
        let mut dims = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != *dims.last().unwrap() || b.shape() != (1, w.cols()) {
                return Err(Error::shape(
                    "FeedForwardNet::from_parts",
                    format!("layer {l}: W {:?}, b {:?}", w.shape(), b.shape()),
                ));
            }
            dims.push(w.cols());
        }
        Ok(Self {
            layer_dims: dims,
            weights,
            biases,
            activation,
        })
    }

    fn layers(&self) -> usize {
        self.weights.len()
    }
}

impl<T: Real> EmbeddingFunction<T> for FeedForwardNet<T> {
    type Cache = FeedForwardCache<T>;

    fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn forward_cached(&self, x: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, Self::Cache)> {
        check_input("forward_ffn", x, self.input_dim())?;
        let last = self.layers() - 1;
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(last);
        for l in 0..=last {
            let mut z = inputs[l].matmul(&self.weights[l])?;
            let bias = self.biases[l].row(0);
            for r in 0..z.rows() {
                for (v, &b) in z.row_mut(r).iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if l == last {
                return Ok((z, FeedForwardCache { inputs, pre }));
            }
            let act = self.activation;
            inputs.push(z.map(|t| act.apply(t)));
            pre.push(z);
        }
        unreachable!("loop returns at the output layer")
    }

    fn backward_cached(&self, cache: &Self::Cache, dl_dy: &DenseMatrix<T>) -> Result<GradientBundle<T>> {
        let n = cache.inputs[0].rows();
        check_cotangent("backward_ffn", dl_dy, n, self.output_dim())?;
        let layers = self.layers();
        let mut d_w = vec![DenseMatrix::zeros(0, 0); layers];
        let mut d_b = vec![DenseMatrix::zeros(0, 0); layers];
        let mut delta = dl_dy.clone();
        for l in (0..layers).rev() {
            d_w[l] = cache.inputs[l].t_matmul(&delta)?;
            d_b[l] = DenseMatrix::new(1, delta.cols(), delta.column_sums())?;
            if l > 0 {
                let mut up = delta.matmul_t(&self.weights[l])?;
                let act = self.activation;
                for ((g, &t), &a) in up
                    .as_mut_slice()
                    .iter_mut()
                    .zip(cache.pre[l - 1].as_slice())
                    .zip(cache.inputs[l].as_slice())
                {
                    *g *= act.derivative(t, a);
                }
                delta = up;
            }
        }
        let mut blocks = Vec::with_capacity(2 * layers);
        for (w, b) in d_w.into_iter().zip(d_b) {
            blocks.push(w);
            blocks.push(b);
        }
        Ok(GradientBundle {
            names: self.param_names(),
            blocks,
        })
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.layers())
            .flat_map(|l| [format!("W{l}"), format!("b{l}")])
            .collect()
    }

    fn params(&self) -> Vec<&DenseMatrix<T>> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut DenseMatrix<T>> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}
