//! Mini-batch training of the embedding networks.

use crate::affinity::{exemplar_affinities, pairwise_affinities, truncate_for_nce, AffinityBlock, NceConfig, NceNeighborhood};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exemplars::{select_exemplars, ExemplarSet, Seeding, DEFAULT_KMEANS_ITERS};
use crate::loss::{kl_exemplar, kl_exemplar_nce, kl_pairwise, LossReport};
use crate::matrix::DenseMatrix;
use crate::model::{Activation, EmbeddingFunction, EmbeddingModel, FeedForwardNet, GradientBundle, HighOrderNet};
use crate::output::{atomic_write, EmbeddingResult};
use crate::rng::{derive_seed, Rng};
use crate::scalar::{lit, Real};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Global gradient norm ceiling applied every step.
pub const GRAD_CLIP: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Method {
    #[serde(rename = "pt-sne")]
    PtSne,
    #[serde(rename = "hot-sne")]
    HotSne,
    #[serde(rename = "dt-see")]
    DtSee,
    #[default]
    #[serde(rename = "hot-see")]
    HotSee,
}

impl Method {
    pub fn uses_exemplars(self) -> bool {
        matches!(self, Method::DtSee | Method::HotSee)
    }

    pub fn high_order(self) -> bool {
        matches!(self, Method::HotSne | Method::HotSee)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::PtSne => "pt-sne",
            Method::HotSne => "hot-sne",
            Method::DtSee => "dt-see",
            Method::HotSee => "hot-see",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pt-sne" => Ok(Method::PtSne),
            "hot-sne" => Ok(Method::HotSne),
            "dt-see" => Ok(Method::DtSee),
            "hot-see" => Ok(Method::HotSee),
            other => Err(Error::param(format!(
                "unknown method {other:?} (pt-sne|hot-sne|dt-see|hot-see)"
            ))),
        }
    }
}

/// Training settings; serialized as a flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub perplexity: f64,
    /// `None` picks 100 when `z < 1000`, else 1000 (capped at `n`).
    pub batch_size: Option<usize>,
    pub epochs: usize,
    pub z: usize,
    pub z_e: Option<usize>,
    pub z_n: Option<usize>,
    pub k_e: Option<f64>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub output_dim: usize,
    pub factors: usize,
    pub hidden_units: usize,
    pub order: u32,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub seeding: Seeding,
    pub kmeans_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::HotSee,
            perplexity: 3.0,
            batch_size: None,
            epochs: 100,
            z: 200,
            z_e: None,
            z_n: None,
            k_e: None,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
            output_dim: 2,
            factors: 800,
            hidden_units: 400,
            order: 2,
            hidden_layers: vec![500, 500, 2000],
            activation: Activation::Relu,
            seeding: Seeding::Careful,
            kmeans_iters: DEFAULT_KMEANS_ITERS,
        }
    }
}

impl TrainConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn effective_batch_size(&self, n: usize) -> usize {
        self.batch_size
            .unwrap_or_else(|| (if self.z < 1000 { 100 } else { 1000 }).min(n))
    }

    pub fn nce(&self) -> Option<NceConfig<f64>> {
        self.z_e.map(|z_e| NceConfig {
            z_e,
            z_n: self.z_n.unwrap_or(0),
            k_e: self.k_e,
        })
    }

    /// Checks the settings against a dataset of `n` rows.
    pub fn validate(&self, n: usize) -> Result<()> {
        let u = self.perplexity;
        let b = self.effective_batch_size(n);
        if b == 0 || b > n {
            return Err(Error::param(format!("batch size {b} must lie in 1..={n}")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param("momentum must lie in [0, 1)"));
        }
        if self.output_dim == 0 {
            return Err(Error::param("output dimension must be positive"));
        }
        if self.method.uses_exemplars() {
            if self.z < 2 || self.z > n {
                return Err(Error::param(format!("z = {} must lie in 2..={n}", self.z)));
            }
            if !(u > 1.0 && u < self.z as f64) {
                return Err(Error::param(format!("perplexity {u} outside (1, z) for z = {}", self.z)));
            }
            if let Some(c) = self.nce() {
                if c.z_e == 0 || c.z_e >= self.z || c.z_e + c.z_n > self.z {
                    return Err(Error::param(format!(
                        "NCE needs 1 <= z_e < z and z_e + z_n <= z (z_e={}, z_n={}, z={})",
                        c.z_e, c.z_n, self.z
                    )));
                }
                if let Some(k) = c.k_e {
                    if !(k > 0.0 && k.is_finite()) {
                        return Err(Error::param("K_e must be positive"));
                    }
                }
            } else if self.z_n.is_some() || self.k_e.is_some() {
                return Err(Error::param("z_n and K_e require z_e"));
            }
        } else {
            if self.z_e.is_some() {
                return Err(Error::param("NCE applies to exemplar methods only"));
            }
            if !(u > 1.0 && u < b as f64 - 1.0) {
                return Err(Error::param(format!("perplexity {u} outside (1, batch - 1) for batch {b}")));
            }
        }
        if self.method.high_order() {
            if self.factors == 0 || self.hidden_units == 0 || self.order == 0 {
                return Err(Error::param("factors, hidden units and order must be positive"));
            }
        } else if self.hidden_layers.contains(&0) {
            return Err(Error::param("hidden layer sizes must be positive"));
        }
        Ok(())
    }

    pub fn build_model<T: Real>(&self, input_dim: usize, rng: &mut Rng) -> Result<EmbeddingModel<T>> {
        Ok(if self.method.high_order() {
            EmbeddingModel::HighOrder(HighOrderNet::new(
                input_dim,
                self.factors,
                self.hidden_units,
                self.output_dim,
                self.order,
                rng,
            )?)
        } else {
            let mut dims = vec![input_dim];
            dims.extend(&self.hidden_layers);
            dims.push(self.output_dim);
            EmbeddingModel::FeedForward(FeedForwardNet::new(&dims, self.activation, rng)?)
        })
    }
}

/// Per-epoch record of a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
    pub seconds: Vec<f64>,
    /// High-dimensional affinity computations before the first epoch.
    pub affinity_calls_init: usize,
    /// High-dimensional affinity computations during the epochs.
    pub affinity_calls_training: usize,
    pub checkpoint: Option<PathBuf>,
}

impl TrainTrace {
    pub fn first_loss(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

pub fn write_trace(trace: &TrainTrace, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "epoch,loss,seconds")?;
        for (e, (l, s)) in trace.losses.iter().zip(&trace.seconds).enumerate() {
            writeln!(w, "{},{},{}", e + 1, l, s)?;
        }
        Ok(())
    })
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: EmbeddingModel<T>,
    pub trace: TrainTrace,
    pub exemplars: Option<ExemplarSet<T>>,
}

enum Objective<T> {
    Pairwise,
    Exemplar {
        set: ExemplarSet<T>,
        p: AffinityBlock<T>,
        nce: Option<NceNeighborhood<T>>,
    },
}

/// Splits a permutation into batches; with `min_len`, a short tail is merged
/// into the previous batch.
fn batches(perm: &[usize], size: usize, min_len: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = perm.chunks(size).collect();
    if out.len() > 1 && out.last().unwrap().len() < min_len {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().unwrap() = &perm[start..];
    }
    out
}

struct Momentum<T> {
    velocity: Vec<DenseMatrix<T>>,
    lr: T,
    mu: T,
}

impl<T: Real> Momentum<T> {
    fn new(model: &EmbeddingModel<T>, lr: f64, mu: f64) -> Self {
        Self {
            velocity: model.params().iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect(),
            lr: lit(lr),
            mu: lit(mu),
        }
    }

    fn step(&mut self, model: &mut EmbeddingModel<T>, grads: &GradientBundle<T>) {
        for ((p, v), g) in model.params_mut().into_iter().zip(&mut self.velocity).zip(&grads.blocks) {
            for ((pv, vv), &gv) in p.as_mut_slice().iter_mut().zip(v.as_mut_slice()).zip(g.as_slice()) {
                *vv = self.mu * *vv - self.lr * gv;
                *pv += *vv;
            }
        }
    }
}

/// Trains an embedding network on `data`.
pub fn train<T: Real>(data: &Dataset<T>, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    let n = data.len();
    cfg.validate(n)?;
    let x = &data.features;
    let u: T = lit(cfg.perplexity);
    let batch = cfg.effective_batch_size(n);
    let mut trace = TrainTrace::default();

    let objective = if cfg.method.uses_exemplars() {
        let set = select_exemplars(x, cfg.z, cfg.seeding, cfg.kmeans_iters, derive_seed(cfg.seed, "exemplars"))?;
        let p = exemplar_affinities(x, &set.exemplars, u)?;
        trace.affinity_calls_init += 1;
        let (p, nce) = match cfg.nce() {
            Some(c) => {
                let c = NceConfig {
                    z_e: c.z_e,
                    z_n: c.z_n,
                    k_e: c.k_e.map(lit),
                };
                let (pt, nb) = truncate_for_nce(&p, &c)?;
                (pt, Some(nb))
            }
            None => (p, None),
        };
        Objective::Exemplar { set, p, nce }
    } else {
        Objective::Pairwise
    };

    let mut model = cfg.build_model::<T>(data.dim(), &mut Rng::for_stage(cfg.seed, "init"))?;
    let mut shuffle_rng = Rng::for_stage(cfg.seed, "shuffle");
    let mut nce_rng = Rng::for_stage(cfg.seed, "nce");
    let mut opt = Momentum::new(&model, cfg.learning_rate, cfg.momentum);
    let clip: T = lit(GRAD_CLIP);
    let min_batch = if cfg.method.uses_exemplars() {
        1
    } else {
        cfg.perplexity.floor() as usize + 2
    };

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let perm = shuffle_rng.permutation(n);
        let mut total = 0.0;
        let parts = batches(&perm, batch, min_batch);
        for (step, idx) in parts.iter().enumerate() {
            let diverged = |detail: String| Error::Diverged { epoch, step, detail };
            let xb = x.select_rows(idx);
            let (report, cache) = match &objective {
                Objective::Pairwise => {
                    let p = pairwise_affinities(&xb, u)?;
                    trace.affinity_calls_training += 1;
                    let (y, cache) = model.forward_cached(&xb)?;
                    if !y.is_finite() {
                        return Err(diverged("non-finite embedding".into()));
                    }
                    (kl_pairwise(&p, &y)?, cache)
                }
                Objective::Exemplar { set, p, nce } => {
                    let input = xb.vstack(&set.exemplars)?;
                    let (y, cache) = model.forward_cached(&input)?;
                    if !y.is_finite() {
                        return Err(diverged("non-finite embedding".into()));
                    }
                    let (yd, ye) = y.split_rows(idx.len());
                    let pb = p.batch_rows(idx)?;
                    let r = match nce {
                        Some(nb) => kl_exemplar_nce(&pb, &nb.batch_rows(idx), &yd, &ye, &mut nce_rng)?,
                        None => kl_exemplar(&pb, &yd, &ye)?,
                    };
                    (r, cache)
                }
            };
            let LossReport {
                value,
                grad_data,
                grad_exemplars,
            } = report;
            if !value.is_finite() {
                return Err(diverged(format!("loss is {value}")));
            }
            let dl_dy = match grad_exemplars {
                Some(ge) => grad_data.vstack(&ge)?,
                None => grad_data,
            };
            let mut grads = model.backward_cached(&cache, &dl_dy)?;
            if !grads.is_finite() {
                return Err(diverged("non-finite gradient".into()));
            }
            grads.clip_norm(clip);
            opt.step(&mut model, &grads);
            total += value.to_f64().unwrap();
        }
        trace.losses.push(total / parts.len() as f64);
        trace.seconds.push(start.elapsed().as_secs_f64());
    }

    let exemplars = match objective {
        Objective::Exemplar { set, .. } => Some(set),
        Objective::Pairwise => None,
    };
    Ok(TrainOutcome { model, trace, exemplars })
}

/// Maps every row of `data` through the trained network.
pub fn embed<T: Real>(model: &EmbeddingModel<T>, data: &Dataset<T>) -> Result<EmbeddingResult<T>> {
    if data.dim() != model.input_dim() {
        return Err(Error::shape(
            "embed",
            format!("data has {} features, model expects {}", data.dim(), model.input_dim()),
        ));
    }
    Ok(EmbeddingResult {
        coords: model.forward(&data.features)?,
        labels: data.labels.clone(),
        source_dataset: data.name.clone(),
        model_id: model.kind().to_owned(),
    })
}
