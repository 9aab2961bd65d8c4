//! Shallow embedding network over factorized high-order feature products.
//!
//! ```text
//! x' = [x; 1]
//! a_f = C_fᵀ x'                 (F factors)
//! s_k = Σ_f W_fk a_f^O + b_k    (m hidden units)
//! y   = V σ(s)                  (h outputs)
//! ```
//!
//! The trailing 1 in `x'` makes `a_f^O` a full polynomial of degree `O` in
//! the inputs, so all interaction orders up to `O` are represented.

use super::{check_cotangent, check_input, glorot_uniform, EmbeddingFunction, GradientBundle};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;
use crate::scalar::{count, logistic, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct HighOrderNet<T> {
    /// `(H+1) x F` factor matrix; the last row multiplies the constant 1.
    pub c: DenseMatrix<T>,
    /// `F x m`.
    pub w: DenseMatrix<T>,
    /// `1 x m` hidden biases.
    pub b: DenseMatrix<T>,
    /// `h x m` output projection.
    pub v: DenseMatrix<T>,
    pub order: u32,
}

pub struct HighOrderCache<T> {
    x: DenseMatrix<T>,
    /// `x' C`, `n x F`.
    factors: DenseMatrix<T>,
    /// factors raised to `order`.
    powered: DenseMatrix<T>,
    /// `σ(s)`, `n x m`.
    hidden: DenseMatrix<T>,
}

impl<T: Real> HighOrderNet<T> {
    /// Randomly initialized network (Glorot-uniform weights, zero biases).
    pub fn new(input_dim: usize, factors: usize, hidden: usize, output_dim: usize, order: u32, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || factors == 0 || hidden == 0 || output_dim == 0 || order == 0 {
            return Err(Error::param(format!(
                "high-order net needs positive sizes (H={input_dim}, F={factors}, m={hidden}, h={output_dim}, O={order})"
            )));
        }
        let c = glorot_uniform(input_dim + 1, factors, input_dim + 1, factors, rng);
        let w = glorot_uniform(factors, hidden, factors, hidden, rng);
        let v = glorot_uniform(output_dim, hidden, hidden, output_dim, rng);
        Ok(Self {
            c,
            w,
            b: DenseMatrix::zeros(1, hidden),
            v,
            order,
        })
    }

    /// Assembles a network from explicit parameters.
    pub fn from_parts(c: DenseMatrix<T>, w: DenseMatrix<T>, b: DenseMatrix<T>, v: DenseMatrix<T>, order: u32) -> Result<Self> {
        let f = c.cols();
        let m = w.cols();
        if c.rows() < 2 || w.rows() != f || b.shape() != (1, m) || v.cols() != m || v.rows() == 0 || order == 0 {
            return Err(Error::shape(
                "HighOrderNet::from_parts",
                format!(
                    "C {:?}, W {:?}, b {:?}, V {:?}, O={order}",
                    c.shape(),
                    w.shape(),
                    b.shape(),
                    v.shape()
                ),
            ));
        }
        Ok(Self { c, w, b, v, order })
    }

    pub fn factors(&self) -> usize {
        self.c.cols()
    }

    pub fn hidden_units(&self) -> usize {
        self.w.cols()
    }
}

impl<T: Real> EmbeddingFunction<T> for HighOrderNet<T> {
    type Cache = HighOrderCache<T>;

    fn input_dim(&self) -> usize {
        self.c.rows() - 1
    }

    fn output_dim(&self) -> usize {
        self.v.rows()
    }

    fn forward_cached(&self, x: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, Self::Cache)> {
        let h_in = self.input_dim();
        check_input("forward_high_order", x, h_in)?;
        let n = x.rows();
        let f = self.factors();

        // x' C = x C[..H] + C[H]
        let bias_row = self.c.row(h_in);
        let mut factors = DenseMatrix::from_fn(n, f, |_, j| bias_row[j]);
        T::gemm(
            n,
            h_in,
            f,
            T::one(),
            x.as_slice(),
            (h_in as isize, 1),
            &self.c.as_slice()[..h_in * f],
            (f as isize, 1),
            T::one(),
            factors.as_mut_slice(),
            (f as isize, 1),
        );
        let order = self.order as i32;
        let powered = factors.map(|a| a.powi(order));
        let mut hidden = powered.matmul(&self.w)?;
        let bias = self.b.row(0);
        for r in 0..n {
            for (s, &bk) in hidden.row_mut(r).iter_mut().zip(bias) {
                *s = logistic(*s + bk);
            }
        }
        let y = hidden.matmul_t(&self.v)?;
        Ok((
            y,
            HighOrderCache {
                x: x.clone(),
                factors,
                powered,
                hidden,
            },
        ))
    }

    fn backward_cached(&self, cache: &Self::Cache, dl_dy: &DenseMatrix<T>) -> Result<GradientBundle<T>> {
        let n = cache.x.rows();
        let h_in = self.input_dim();
        let f = self.factors();
        check_cotangent("backward_high_order", dl_dy, n, self.output_dim())?;

        let d_v = dl_dy.t_matmul(&cache.hidden)?;
        let mut d_s = dl_dy.matmul(&self.v)?;
        for (ds, &hv) in d_s.as_mut_slice().iter_mut().zip(cache.hidden.as_slice()) {
            *ds *= hv * (T::one() - hv);
        }
        let d_b = DenseMatrix::new(1, self.hidden_units(), d_s.column_sums())?;
        let d_w = cache.powered.t_matmul(&d_s)?;

        let mut d_a = d_s.matmul_t(&self.w)?;
        let order = self.order as i32;
        let o: T = count(self.order as usize);
        for (da, &a) in d_a.as_mut_slice().iter_mut().zip(cache.factors.as_slice()) {
            *da *= o * a.powi(order - 1);
        }

        // dC = x'ᵀ dA: data rows from xᵀ dA, constant row from column sums
        let mut d_c = DenseMatrix::zeros(h_in + 1, f);
        T::gemm(
            h_in,
            n,
            f,
            T::one(),
            cache.x.as_slice(),
            (1, h_in as isize),
            d_a.as_slice(),
            (f as isize, 1),
            T::zero(),
            &mut d_c.as_mut_slice()[..h_in * f],
            (f as isize, 1),
        );
        d_c.row_mut(h_in).copy_from_slice(&d_a.column_sums());
        if !d_c.is_finite() {
            return Err(Error::NonFinite("backward_high_order"));
        }

        Ok(GradientBundle {
            names: self.param_names(),
            blocks: vec![d_c, d_w, d_b, d_v],
        })
    }

    fn param_names(&self) -> Vec<String> {
        ["C", "W", "b", "V"].iter().map(|s| s.to_string()).collect()
    }

    fn params(&self) -> Vec<&DenseMatrix<T>> {
        vec![&self.c, &self.w, &self.b, &self.v]
    }

    fn params_mut(&mut self) -> Vec<&mut DenseMatrix<T>> {
        vec![&mut self.c, &mut self.w, &mut self.b, &mut self.v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(rng: &mut Rng) -> HighOrderNet<f64> {
        let mut net = HighOrderNet::new(4, 3, 5, 2, 2, rng).unwrap();
        net.b = DenseMatrix::from_fn(1, 5, |_, _| rng.uniform() - 0.5);
        net
    }

    /// Literal per-scalar evaluation of the network.
    fn scalar_forward(net: &HighOrderNet<f64>, x: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        let (h_in, f, m, h) = (net.input_dim(), net.factors(), net.hidden_units(), net.output_dim());
        DenseMatrix::from_fn(x.rows(), h, |i, s| {
            let mut ys = 0.0;
            for k in 0..m {
                let mut pre = net.b.get(0, k);
                for ff in 0..f {
                    let mut a = net.c.get(h_in, ff);
                    for j in 0..h_in {
                        a += net.c.get(j, ff) * x.get(i, j);
                    }
                    pre += net.w.get(ff, k) * a.powi(net.order as i32);
                }
                ys += net.v.get(s, k) / (1.0 + (-pre).exp());
            }
            ys
        })
    }

    #[test]
    fn zero_w_and_b_give_half_row_sums_of_v() {
        let mut rng = Rng::new(1);
        let mut net = tiny(&mut rng);
        net.w = DenseMatrix::zeros(3, 5);
        net.b = DenseMatrix::zeros(1, 5);
        let x = DenseMatrix::from_fn(3, 4, |_, _| rng.uniform());
        let y = net.forward(&x).unwrap();
        for r in 0..3 {
            for s in 0..2 {
                let want: f64 = 0.5 * net.v.row(s).iter().sum::<f64>();
                assert!((y.get(r, s) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scalar_example() {
        let net = HighOrderNet::<f64>::from_parts(
            DenseMatrix::from_rows(&[[1.0], [0.0]]).unwrap(),
            DenseMatrix::from_rows(&[[1.0]]).unwrap(),
            DenseMatrix::zeros(1, 1),
            DenseMatrix::from_rows(&[[1.0]]).unwrap(),
            2,
        )
        .unwrap();
        let y = net.forward(&DenseMatrix::from_rows(&[[2.0]]).unwrap()).unwrap();
        assert!((y.get(0, 0) - 0.982_013_790_0).abs() < 1e-10);
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = Rng::new(2);
        let net = tiny(&mut rng);
        let x = DenseMatrix::from_fn(5, 4, |_, _| rng.uniform());
        let fast = net.forward(&x).unwrap();
        let slow = scalar_forward(&net, &x);
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_v_gives_zero_output() {
        let mut rng = Rng::new(3);
        let mut net = tiny(&mut rng);
        net.v = DenseMatrix::zeros(2, 5);
        let x = DenseMatrix::from_fn(4, 4, |_, _| rng.uniform() * 10.0);
        assert!(net.forward(&x).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zeroing_bias_row_leaves_only_top_degree_terms() {
        // with C's constant row at zero, a_f is homogeneous in x, so scaling
        // x by t scales every a_f^2 by t^2
        let mut rng = Rng::new(4);
        let mut net = tiny(&mut rng);
        for v in net.c.row_mut(4) {
            *v = 0.0;
        }
        let x = DenseMatrix::from_fn(3, 4, |_, _| rng.uniform());
        let (_, c1) = net.forward_cached(&x).unwrap();
        let x3 = x.map(|v| 3.0 * v);
        let (_, c3) = net.forward_cached(&x3).unwrap();
        for (a, b) in c1.powered.as_slice().iter().zip(c3.powered.as_slice()) {
            assert!((9.0 * a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        let fast = net.forward(&x).unwrap();
        for (a, b) in fast.as_slice().iter().zip(scalar_forward(&net, &x).as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = Rng::new(5);
        let net = tiny(&mut rng);
        let x = DenseMatrix::from_fn(4, 4, |_, _| rng.uniform());
        let g = net.backward(&x, &DenseMatrix::zeros(4, 2)).unwrap();
        assert!(g.blocks.iter().all(|b| b.max_abs() == 0.0));
    }

    #[test]
    fn output_gradient_is_outer_product_with_hidden() {
        let mut rng = Rng::new(6);
        let net = tiny(&mut rng);
        let x = DenseMatrix::from_fn(4, 4, |_, _| rng.uniform());
        let gy = DenseMatrix::from_fn(4, 2, |_, _| rng.uniform() - 0.5);
        let (_, cache) = net.forward_cached(&x).unwrap();
        let g = net.backward_cached(&cache, &gy).unwrap();
        let dv = g.get("V").unwrap();
        for s in 0..2 {
            for k in 0..5 {
                let want: f64 = (0..4).map(|i| gy.get(i, s) * cache.hidden.get(i, k)).sum();
                assert!((dv.get(s, k) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = Rng::new(7);
        let net = tiny(&mut rng);
        assert!(net.forward(&DenseMatrix::zeros(2, 3)).is_err());
        let x = DenseMatrix::zeros(2, 4);
        assert!(net.backward(&x, &DenseMatrix::zeros(2, 3)).is_err());
        assert!(HighOrderNet::<f64>::new(4, 0, 5, 2, 2, &mut rng).is_err());
    }

    #[test]
    fn single_precision_forward_is_close_to_double() {
        let mut rng = Rng::new(8);
        let net = tiny(&mut rng);
        let x = DenseMatrix::from_fn(3, 4, |_, _| rng.uniform());
        let net32 = HighOrderNet::<f32>::from_parts(net.c.cast(), net.w.cast(), net.b.cast(), net.v.cast(), 2).unwrap();
        let y64 = net.forward(&x).unwrap();
        let y32 = net32.forward(&x.cast()).unwrap();
        for (a, b) in y64.as_slice().iter().zip(y32.as_slice()) {
            assert!((a - *b as f64).abs() < 1e-5);
        }
    }
}
