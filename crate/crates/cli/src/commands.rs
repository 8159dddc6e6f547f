use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use maskdiff_core::kernel::KernelReference;
use maskdiff_core::knn::{knn_score_dataset, KnnConfig};
use maskdiff_core::metrics::{LabeledScores, MetricsReport};
use maskdiff_core::model::{load_checkpoint, save_checkpoint, Model};
use maskdiff_core::probe::ProbeConfig;
use maskdiff_core::schema::{
    encode, fit_encoding, ingest_csv, split_labels, table_labels, EncodedDataset, EncodingDoc, FeatureSpec,
    LABEL_COLUMN,
};
use maskdiff_core::scorer::{calibrate_threshold, read_scores_csv, score_dataset, write_scores_csv, ScoreReport};

use crate::Ctx;

/// Prints the one-line summary followed by the artifact paths.
pub fn report(summary: &str, artifacts: &[PathBuf]) {
    println!("{summary}");
    for p in artifacts {
        println!("  {}", p.display());
    }
}

fn or_out(ctx: &Ctx, given: Option<PathBuf>, name: &str) -> PathBuf {
    given.unwrap_or_else(|| ctx.out(name))
}

pub fn load_encoded(data: &Path, encoding: &Path) -> Result<(EncodingDoc, EncodedDataset)> {
    let doc = EncodingDoc::load(encoding).with_context(|| format!("loading encoding {}", encoding.display()))?;
    let ds = EncodedDataset::load_csv(data, &doc.features).with_context(|| format!("loading {}", data.display()))?;
    Ok((doc, ds))
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Raw CSV with a header row.
    pub input: PathBuf,
}

pub fn preprocess(ctx: &Ctx, a: PreprocessArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let table = ingest_csv(&a.input, &cfg.data.column_kinds).with_context(|| format!("reading {}", a.input.display()))?;
    let label_col = cfg.encoding.labels_column.as_deref();
    let labels = label_col.map(|c| table_labels(&table, c)).transpose()?;
    let mut split_cfg = cfg.split.clone();
    split_cfg.stratify &= labels.is_some();
    let split = split_labels(table.n_rows(), labels.as_deref(), &split_cfg)?;
    let train_rows = split.normal_train(labels.as_deref());
    let mut mask = vec![false; table.n_rows()];
    for &i in &train_rows {
        mask[i] = true;
    }
    let specs = fit_encoding(&table, &cfg.encoding, &mask)?;
    let ds = encode(&table, &specs, label_col)?;
    let (train, test) = (ds.select(&train_rows), ds.select(&split.test));

    let paths = [ctx.out("encoding.json"), ctx.out("train.csv"), ctx.out("test.csv")];
    EncodingDoc::new(specs, label_col.map(String::from)).save(&paths[0])?;
    train.save_csv(&paths[1])?;
    test.save_csv(&paths[2])?;
    report(
        &format!(
            "preprocess: {} rows, {} features -> {} normal train rows, {} test rows",
            table.n_rows(),
            ds.n_features(),
            train.n_rows(),
            test.n_rows()
        ),
        &paths,
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Encoded training file [default: <out-dir>/train.csv].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Encoding specs [default: <out-dir>/encoding.json].
    #[arg(long)]
    pub encoding: Option<PathBuf>,
}

pub fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let (_, ds) = load_encoded(&or_out(ctx, a.data, "train.csv"), &or_out(ctx, a.encoding, "encoding.json"))?;
    let ds = ds.normal_only();
    ensure!(!ds.is_empty(), "no normal rows to train on");
    let probe = &cfg.parametric_probe;
    let model = Model::new(cfg.model.clone(), &ds.cardinalities(), probe.n_levels())?;
    let epochs = cfg.train.epochs;
    let (model, trace) = model.train(&ds, probe, &cfg.train, |e| {
        eprintln!("epoch {}/{epochs}: loss {:.6}", e.epoch, e.mean_loss);
    })?;
    let paths = [ctx.out("model.ckpt"), ctx.out("loss_trace.csv")];
    save_checkpoint(&model, &paths[0])?;
    trace.save_csv(&paths[1])?;
    report(
        &format!(
            "train: {} rows, {} params, {epochs} epochs, loss {:.6} -> {:.6}",
            ds.n_rows(),
            model.n_params(),
            trace.initial,
            trace.final_loss().unwrap_or(trace.initial)
        ),
        &paths,
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Parametric,
    Kernel,
    Knn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Parametric => "parametric",
            Method::Kernel => "kernel",
            Method::Knn => "knn",
        }
    }
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Encoded file to score [default: <out-dir>/test.csv].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Encoding specs [default: <out-dir>/encoding.json].
    #[arg(long)]
    pub encoding: Option<PathBuf>,
    /// Checkpoint for the parametric method [default: <out-dir>/model.ckpt].
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Normal reference rows for kernel and kNN [default: <out-dir>/train.csv].
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Score CSV [default: <out-dir>/scores_<method>.csv].
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Fixed decision threshold.
    #[arg(long, conflicts_with = "alpha")]
    pub threshold: Option<f64>,
    /// Calibrate the threshold to this false-alarm rate on --calibration rows.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Held-out normal rows for threshold calibration.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Also write per-view scores as JSON lines.
    #[arg(long)]
    pub cells: bool,
}

enum Scorer {
    Parametric(Model, ProbeConfig),
    Kernel(KernelReference, ProbeConfig),
    Knn(EncodedDataset, KnnConfig),
}

impl Scorer {
    fn score(&self, ds: &EncodedDataset) -> Result<Vec<ScoreReport>> {
        Ok(match self {
            Scorer::Parametric(m, p) => score_dataset(ds, p, m)?,
            Scorer::Kernel(r, p) => score_dataset(ds, p, r)?,
            Scorer::Knn(r, k) => knn_score_dataset(ds, r, k)?,
        })
    }
}

fn load_reference(path: &Path, specs: &[FeatureSpec]) -> Result<EncodedDataset> {
    let ds = EncodedDataset::load_csv(path, specs).with_context(|| format!("loading reference {}", path.display()))?;
    let ds = ds.normal_only();
    ensure!(!ds.is_empty(), "reference file {} has no normal rows", path.display());
    Ok(ds)
}

pub fn score(ctx: &Ctx, a: ScoreArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let encoding = or_out(ctx, a.encoding, "encoding.json");
    let (doc, ds) = load_encoded(&or_out(ctx, a.data, "test.csv"), &encoding)?;
    let scorer = match a.method {
        Method::Parametric => {
            let path = or_out(ctx, a.model, "model.ckpt");
            let model = load_checkpoint(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
            model
                .validate_cardinalities(&doc.features)
                .context("checkpoint does not match the encoding")?;
            model.check_probe(&cfg.parametric_probe)?;
            Scorer::Parametric(model, cfg.parametric_probe.clone())
        }
        Method::Kernel => {
            let reference = load_reference(&or_out(ctx, a.reference, "train.csv"), &doc.features)?;
            Scorer::Kernel(
                KernelReference::from_options(&reference, &cfg.kernel)?,
                cfg.kernel_probe.clone(),
            )
        }
        Method::Knn => {
            let reference = load_reference(&or_out(ctx, a.reference, "train.csv"), &doc.features)?;
            Scorer::Knn(reference, cfg.knn.clone())
        }
    };

    let alpha = a.alpha.or(cfg.score.alpha);
    let threshold = match (a.threshold.or(cfg.score.threshold), alpha) {
        (Some(t), _) => Some(t),
        (None, Some(alpha)) => {
            let path = a
                .calibration
                .as_ref()
                .context("threshold calibration needs --calibration")?;
            let calib = load_reference(path, &doc.features)?;
            let s: Vec<f64> = scorer.score(&calib)?.iter().map(|r| r.score).collect();
            Some(calibrate_threshold(&s, alpha)?)
        }
        (None, None) => None,
    };

    let mut reports = scorer.score(&ds)?;
    if let Some(t) = threshold {
        reports = reports.into_iter().map(|r| r.with_threshold(t)).collect();
    }
    let out = a
        .output
        .unwrap_or_else(|| ctx.out(&format!("scores_{}.csv", a.method.name())));
    let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    write_scores_csv(&reports, BufWriter::new(f))?;
    let mut paths = vec![out.clone()];
    if a.cells {
        let cells = out.with_extension("cells.jsonl");
        let mut w = BufWriter::new(File::create(&cells).with_context(|| format!("creating {}", cells.display()))?);
        for r in &reports {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        paths.push(cells);
    }
    let mean = reports.iter().map(|r| r.score).sum::<f64>() / reports.len().max(1) as f64;
    let mut summary = format!("score: {} rows with {}, mean score {mean:.6}", reports.len(), a.method.name());
    if let Some(t) = threshold {
        let flagged = reports.iter().filter(|r| r.decision == Some(1)).count();
        summary += &format!(", threshold {t:.6} flags {flagged}");
    }
    report(&summary, &paths);
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Method whose score file is evaluated; also names the report.
    #[arg(long, value_enum, default_value = "parametric")]
    pub method: Method,
    /// Score CSV [default: <out-dir>/scores_<method>.csv].
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// CSV with a `label` column, row i labelling sample id i [default: <out-dir>/test.csv].
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Dataset name for the report [default: labels file stem].
    #[arg(long)]
    pub dataset: Option<String>,
    /// Metrics JSON [default: <out-dir>/metrics_<method>.json].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading labels {}", path.display()))?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .with_context(|| format!("{} has no `{LABEL_COLUMN}` column", path.display()))?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            match rec.get(col).map(str::trim) {
                Some("0") => Ok(0),
                Some("1") => Ok(1),
                other => bail!("row {}: label {:?} is not 0 or 1", i + 1, other.unwrap_or("")),
            }
        })
        .collect()
}

pub fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let scores_path = a
        .scores
        .unwrap_or_else(|| ctx.out(&format!("scores_{}.csv", a.method.name())));
    let labels_path = or_out(ctx, a.labels, "test.csv");
    let f = File::open(&scores_path).with_context(|| format!("opening {}", scores_path.display()))?;
    let pairs = read_scores_csv(f)?;
    let labels = read_labels(&labels_path)?;
    let mut y = Vec::with_capacity(pairs.len());
    let mut s = Vec::with_capacity(pairs.len());
    for (id, score) in pairs {
        let l = *labels
            .get(id as usize)
            .with_context(|| format!("sample id {id} has no label ({} labels)", labels.len()))?;
        y.push(l);
        s.push(score);
    }
    let dataset = a.dataset.unwrap_or_else(|| {
        labels_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let ls = LabeledScores::new(s, y)?;
    let m = MetricsReport::compute(a.method.name(), &dataset, &ls, ctx.cfg.seed)?;
    let out = a
        .output
        .unwrap_or_else(|| ctx.out(&format!("metrics_{}.json", a.method.name())));
    m.save(&out)?;
    report(
        &format!(
            "eval: {} on {}: roc_auc {:.4}, pr_auc {:.4} ({} samples, {} anomalies)",
            m.method, m.dataset, m.roc_auc, m.pr_auc, m.n_test, m.n_anomaly
        ),
        &[out],
    );
    Ok(())
}
