//! One-knob sensitivity sweeps: retrain per setting and report 1NN error.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{knn_error, knn_error_loo, KnnResult};
use crate::output::atomic_write;
use crate::scalar::Real;
use crate::train::{embed, train, TrainConfig};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub enum Vary {
    BatchSize(Vec<usize>),
    Perplexity(Vec<f64>),
}

impl Vary {
    pub fn name(&self) -> &'static str {
        match self {
            Vary::BatchSize(_) => "batch_size",
            Vary::Perplexity(_) => "perplexity",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Vary::BatchSize(v) => v.len(),
            Vary::Perplexity(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply(&self, i: usize, cfg: &TrainConfig) -> (TrainConfig, String) {
        let mut c = cfg.clone();
        let label = match self {
            Vary::BatchSize(v) => {
                c.batch_size = Some(v[i]);
                v[i].to_string()
            }
            Vary::Perplexity(v) => {
                c.perplexity = v[i];
                v[i].to_string()
            }
        };
        (c, label)
    }
}

impl std::str::FromStr for Vary {
    type Err = Error;

    /// Parses `batch_size=100,500` or `perplexity=3,10`.
    fn from_str(s: &str) -> Result<Self> {
        let (key, values) = s
            .split_once('=')
            .ok_or_else(|| Error::param(format!("expected knob=v1,v2,... but got {s:?}")))?;
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if items.is_empty() {
            return Err(Error::param(format!("no values given for {key}")));
        }
        let bad = |v: &str| Error::param(format!("invalid {key} value {v:?}"));
        match key.trim() {
            "batch_size" => items
                .iter()
                .map(|v| v.parse::<usize>().map_err(|_| bad(v)))
                .collect::<Result<_>>()
                .map(Vary::BatchSize),
            "perplexity" => items
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| bad(v)))
                .collect::<Result<_>>()
                .map(Vary::Perplexity),
            other => Err(Error::param(format!("cannot vary {other:?} (batch_size|perplexity)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub parameter: String,
    pub setting: String,
    pub result: KnnResult,
    pub final_loss: f64,
    pub seconds: f64,
}

/// Trains once per setting, sequentially, and scores the 1NN error on
/// `test` (or leave-one-out on `train` when no test split is given).
pub fn run_sweep<T: Real>(
    train_data: &Dataset<T>,
    test_data: Option<&Dataset<T>>,
    cfg: &TrainConfig,
    vary: &Vary,
) -> Result<Vec<SweepRow>> {
    if vary.is_empty() {
        return Err(Error::param("sweep needs at least one setting"));
    }
    let train_labels = train_data
        .labels
        .as_deref()
        .ok_or_else(|| Error::param("sweep needs labeled training data"))?;
    // validate every setting before any training
    let settings: Vec<(TrainConfig, String)> = (0..vary.len()).map(|i| vary.apply(i, cfg)).collect();
    for (c, _) in &settings {
        c.validate(train_data.len())?;
    }
    let mut rows = Vec::with_capacity(settings.len());
    for (c, setting) in settings {
        let out = train(train_data, &c)?;
        let tr = embed(&out.model, train_data)?;
        let result = match test_data {
            Some(t) => {
                let te = embed(&out.model, t)?;
                let labels = t.labels.as_deref().ok_or_else(|| Error::param("sweep needs labeled test data"))?;
                knn_error(&tr.coords, train_labels, &te.coords, labels, 1)?
            }
            None => knn_error_loo(&tr.coords, train_labels, 1)?,
        };
        rows.push(SweepRow {
            parameter: vary.name().into(),
            setting,
            result,
            final_loss: out.trace.final_loss().unwrap_or(f64::NAN),
            seconds: out.trace.seconds.iter().sum(),
        });
    }
    Ok(rows)
}

/// Largest minus smallest error rate across the rows.
pub fn error_spread(rows: &[SweepRow]) -> f64 {
    let errs = rows.iter().map(|r| r.result.error_rate);
    let hi = errs.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = errs.fold(f64::INFINITY, f64::min);
    hi - lo
}

pub const SWEEP_HEADER: &str = "parameter,setting,metric,k,split,value,final_loss,seconds";

pub fn write_sweep(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "{SWEEP_HEADER}")?;
        for r in rows {
            writeln!(
                w,
                "{},{},1nn_error,{},{},{},{},{:.3}",
                r.parameter, r.setting, r.result.k, r.result.split, r.result.error_rate, r.final_loss, r.seconds
            )?;
        }
        Ok(())
    })
}
