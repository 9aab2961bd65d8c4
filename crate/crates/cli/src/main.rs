use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tsee::dataset::{load_csv_with, load_idx, CsvOptions};
use tsee::eval::{knn_error, knn_error_loo, quality_score, quality_score_within, write_metrics, MetricRow, Split};
use tsee::exemplars::{select_exemplars, Seeding};
use tsee::model::{read_checkpoint, write_checkpoint, Activation};
use tsee::output::{read_embedding, write_embedding, write_matrix_csv};
use tsee::plot::plot_svg;
use tsee::sweep::{error_spread, run_sweep, write_sweep, Vary};
use tsee::train::{embed, train, write_trace, Method, TrainConfig};
use tsee::Dataset64;

#[derive(Parser)]
#[command(name = "tsee", version, about = "Parametric exemplar-centered embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select exemplars by k-means and write them as CSV.
    Exemplars(ExemplarsArgs),
    /// Train an embedding network.
    Train(TrainArgs),
    /// Map data through a trained network.
    Embed(EmbedArgs),
    /// Score embeddings with kNN error and neighborhood preservation.
    Eval(EvalArgs),
    /// Draw a 2-D embedding as SVG.
    Plot(PlotArgs),
    /// Retrain over several values of one setting and report 1NN error.
    Sweep(SweepArgs),
}

/// A dataset given as CSV or as an IDX image/label pair.
#[derive(Args, Clone)]
struct DataArgs {
    /// Feature file: CSV, or IDX images (optionally gzipped) with --labels.
    #[arg(long)]
    data: PathBuf,
    /// IDX label file paired with --data.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Name of the integer label column in a CSV file.
    #[arg(long)]
    label_column: Option<String>,
    /// Skip per-feature min-max scaling of CSV input.
    #[arg(long)]
    no_normalize: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset64> {
        load_data(&self.data, self.labels.as_deref(), self.label_column.as_deref(), !self.no_normalize)
    }
}

fn load_data(path: &Path, labels: Option<&Path>, label_column: Option<&str>, normalize: bool) -> Result<Dataset64> {
    let ds = match labels {
        Some(l) => load_idx(path, l)?,
        None => load_csv_with(
            path,
            &CsvOptions {
                label_column: label_column.map(str::to_owned),
                normalize,
            },
        )?,
    };
    if ds.is_empty() {
        bail!("{} contains no rows", path.display());
    }
    Ok(ds)
}

#[derive(Args)]
struct ExemplarsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    z: usize,
    #[arg(long, default_value = "careful")]
    seeding: Seeding,
    #[arg(long, default_value_t = tsee::exemplars::DEFAULT_KMEANS_ITERS)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Command-line overrides for [`TrainConfig`] fields.
#[derive(Args, Clone, Default)]
struct ConfigOverrides {
    /// Flat JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    z: Option<usize>,
    #[arg(long)]
    z_e: Option<usize>,
    #[arg(long)]
    z_n: Option<usize>,
    #[arg(long)]
    k_e: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dim: Option<usize>,
    #[arg(long)]
    factors: Option<usize>,
    #[arg(long)]
    hidden_units: Option<usize>,
    #[arg(long)]
    order: Option<u32>,
    /// Comma-separated hidden layer sizes of the feedforward network.
    #[arg(long, value_delimiter = ',')]
    hidden_layers: Option<Vec<usize>>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    seeding: Option<Seeding>,
    #[arg(long)]
    kmeans_iters: Option<usize>,
}

impl ConfigOverrides {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => TrainConfig::from_json_file(p)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    c.$f = v;
                }
            )*};
        }
        macro_rules! set_opt {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f {
                    c.$f = Some(v);
                }
            )*};
        }
        set!(method, perplexity, epochs, z, learning_rate, momentum, seed, output_dim, factors, hidden_units, order, hidden_layers, activation, seeding, kmeans_iters);
        set_opt!(batch_size, z_e, z_n, k_e);
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    cfg: ConfigOverrides,
    #[arg(long)]
    out_checkpoint: PathBuf,
    /// Per-epoch CSV `epoch,loss,seconds`.
    #[arg(long)]
    out_trace: Option<PathBuf>,
    /// Also write the embedding of the training data.
    #[arg(long)]
    out_embedding: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    train_emb: PathBuf,
    /// Without a test embedding the train split is scored leave-one-out.
    #[arg(long)]
    test_emb: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    knn: Vec<usize>,
    /// Also report the neighborhood-preservation quality score.
    #[arg(long, requires = "high_data")]
    quality: bool,
    /// High-dimensional data row-aligned with the train embedding.
    #[arg(long)]
    high_data: Option<PathBuf>,
    #[arg(long)]
    high_labels: Option<PathBuf>,
    /// High-dimensional data row-aligned with the test embedding.
    #[arg(long)]
    high_test: Option<PathBuf>,
    #[arg(long)]
    high_test_labels: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    k_list: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigOverrides,
    /// `batch_size=v1,v2,...` or `perplexity=v1,v2,...`.
    #[arg(long)]
    vary: Vary,
    #[arg(long)]
    out: PathBuf,
}

fn run_exemplars(a: ExemplarsArgs) -> Result<()> {
    let ds = a.data.load()?;
    let set = select_exemplars(&ds.features, a.z, a.seeding, a.iters, a.seed)?;
    write_matrix_csv(&set.exemplars, &a.out)?;
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let ds = a.data.load()?;
    cfg.validate(ds.len())?;
    let out = train(&ds, &cfg)?;
    write_checkpoint(&out.model, cfg.seed, Some(cfg.method.as_str()), &a.out_checkpoint)?;
    if let Some(p) = &a.out_trace {
        write_trace(&out.trace, p)?;
    }
    if let Some(p) = &a.out_embedding {
        write_embedding(&embed(&out.model, &ds)?, p)?;
    }
    if let (Some(first), Some(last)) = (out.trace.first_loss(), out.trace.final_loss()) {
        eprintln!("loss {first:.6} -> {last:.6} over {} epochs", out.trace.losses.len());
    }
    Ok(())
}

fn run_embed(a: EmbedArgs) -> Result<()> {
    let (model, header) = read_checkpoint::<f64>(&a.checkpoint)?;
    let ds = a.data.load()?;
    let mut e = embed(&model, &ds)?;
    if let Some(m) = header.method {
        e.model_id = m;
    }
    write_embedding(&e, &a.out)?;
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    if a.knn.contains(&0) || a.k_list.contains(&0) {
        bail!("neighborhood sizes must be positive");
    }
    let train_e = read_embedding::<f64>(&a.train_emb)?;
    let test_e = a.test_emb.as_ref().map(read_embedding::<f64>).transpose()?;
    let train_labels = train_e
        .labels
        .as_deref()
        .with_context(|| format!("{} has no label column", a.train_emb.display()))?;
    let mut rows = Vec::new();
    for &k in &a.knn {
        let r = match &test_e {
            Some(t) => {
                let labels = t.labels.as_deref().context("test embedding has no label column")?;
                knn_error(&train_e.coords, train_labels, &t.coords, labels, k)?
            }
            None => knn_error_loo(&train_e.coords, train_labels, k)?,
        };
        rows.push(MetricRow::from(&r));
    }
    if a.quality {
        let high_path = a.high_data.as_ref().expect("clap enforces --high-data");
        let col = a.label_column.as_deref();
        let high = load_data(high_path, a.high_labels.as_deref(), col, true)?;
        for &k in &a.k_list {
            let row = match (&a.high_test, &test_e) {
                (Some(ht), Some(t)) => {
                    let high_t = load_data(ht, a.high_test_labels.as_deref(), col, true)?;
                    let q = quality_score(&high_t.features, &t.coords, &high.features, &train_e.coords, k)?;
                    MetricRow::quality(&q, Split::Test)
                }
                (Some(_), None) => bail!("--high-test needs --test-emb"),
                (None, _) => {
                    let q = quality_score_within(&high.features, &train_e.coords, k)?;
                    MetricRow::quality(&q, Split::Train)
                }
            };
            rows.push(row);
        }
    }
    write_metrics(&rows, &a.out)?;
    Ok(())
}

fn run_plot(a: PlotArgs) -> Result<()> {
    let e = read_embedding::<f64>(&a.embedding)?;
    plot_svg(&e, &a.out)?;
    Ok(())
}

fn run_sweep_cmd(a: SweepArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let ds = a.data.load()?;
    let test = match &a.test_data {
        Some(p) => Some(load_data(p, a.test_labels.as_deref(), a.data.label_column.as_deref(), !a.data.no_normalize)?),
        None => None,
    };
    let rows = run_sweep(&ds, test.as_ref(), &cfg, &a.vary)?;
    write_sweep(&rows, &a.out)?;
    eprintln!("1nn error spread {:.4} over {} settings", error_spread(&rows), rows.len());
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors before anything runs
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Exemplars(a) => run_exemplars(a),
        Command::Train(a) => run_train(a),
        Command::Embed(a) => run_embed(a),
        Command::Eval(a) => run_eval(a),
        Command::Plot(a) => run_plot(a),
        Command::Sweep(a) => run_sweep_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"method":"dt-see","epochs":7,"z":30}"#).unwrap();
        let o = ConfigOverrides {
            config: Some(p),
            epochs: Some(3),
            z_e: Some(5),
            ..Default::default()
        };
        let c = o.resolve().unwrap();
        assert_eq!(c.method, Method::DtSee);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.z, 30);
        assert_eq!(c.z_e, Some(5));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
