//! Command-line front end: dataset generation, training, evaluation,
//! ablation and plot-data export.
//!
//! Exit codes: 0 success, 2 usage or config error, 1 runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::adaptive::ClassAdaptiveStats;
use crate::clusterer::dbscan;
use crate::encoder::{self, load_checkpoint, save_checkpoint};
use crate::error::{Error, Result};
use crate::evalkit::RetrievalMetrics;
use crate::memory::cluster_means;
use crate::numcore::EmbeddingMatrix;
use crate::synthgen::{generate, generate_holdout, read_features, write_features, SynthSpec};
use crate::trainer::{
    evaluate_encoder, run_ablation, run_training_with, EvalData, OutlierStrategy, TrainConfig, TrainData,
    UpdateStrategy, STATS_CSV_HEADER,
};

#[derive(Debug, Parser)]
#[command(
    name = "adaincv",
    version,
    about = "Adaptive intra-class variation contrastive learning on synthetic Re-ID features"
)]
pub struct Cli {
    /// Worker threads for data-parallel stages (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as an AICV file plus a label CSV.
    Generate(GenerateArgs),
    /// Train an encoder and write reports, stats and a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled feature file.
    Eval(EvalArgs),
    /// Run the six update/outlier strategy pairings and tabulate them.
    Ablate(AblateArgs),
    /// Cluster encoded features and export per-cluster statistics.
    DumpStats(DumpStatsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub ids: usize,
    #[arg(long, default_value_t = 20)]
    pub per_id: usize,
    #[arg(long, default_value_t = 64)]
    pub raw_dim: usize,
    #[arg(long, default_value_t = 32)]
    pub identity_dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub nuisance: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 6)]
    pub tags: usize,
}

impl SynthArgs {
    fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            n_identities: self.ids,
            samples_per_identity: self.per_id,
            raw_dim: self.raw_dim,
            identity_dim: self.identity_dim,
            nuisance_scale: self.nuisance,
            noise_scale: self.noise,
            n_tags: self.tags,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Emit the held-out identities instead of the training identities.
    #[arg(long)]
    pub holdout: bool,
    /// Output AICV path; labels go to `<stem>.labels.csv` beside it.
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Hyperparameter flags; each overrides the config file and the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// `key = value` config file applied before the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub ema_rate: Option<f64>,
    #[arg(long)]
    pub lambda_m: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub min_pts: Option<usize>,
    #[arg(long = "p")]
    pub p: Option<usize>,
    #[arg(long = "k")]
    pub k: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub iters_per_epoch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub f_min: Option<f64>,
    /// Enable the epoch-dependent γ scaling of diff.
    #[arg(long)]
    pub gamma: bool,
    #[arg(long)]
    pub strategy: Option<UpdateStrategy>,
    #[arg(long)]
    pub outliers: Option<OutlierStrategy>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub queries_per_id: Option<usize>,
    #[arg(long)]
    pub exclude_same_camera: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => TrainConfig::from_kv_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?,
            None => TrainConfig::default(),
        };
        macro_rules! apply {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        apply!(
            tau => tau, momentum => momentum_m, ema_rate => ema_rate, lambda_m => lambda_m,
            eps => eps, min_pts => min_pts,
            p => p, k => k, epochs => epochs, lr => lr, weight_decay => weight_decay,
            f_min => f_min, strategy => update_strategy, outliers => outlier_strategy,
            seed => seed, eval_interval => eval_interval, queries_per_id => queries_per_id,
        );
        if self.iters_per_epoch.is_some() {
            c.iters_per_epoch = self.iters_per_epoch;
        }
        if self.out_dim.is_some() {
            c.out_dim = self.out_dim;
        }
        if self.hidden_dim.is_some() {
            c.hidden_dim = self.hidden_dim;
        }
        c.gamma_enabled |= self.gamma;
        c.exclude_same_camera |= self.exclude_same_camera;
        c.validate()?;
        Ok(c)
    }
}

/// Where training and evaluation features come from.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Training features (AICV). Omit to synthesize them.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Labelled evaluation features (AICV). Omit to synthesize held-out identities.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Label CSV (`index,identity,tag`) supplying camera tags for `--eval`.
    #[arg(long)]
    pub eval_tags: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Seed of the synthesized dataset.
    #[arg(long, default_value_t = 7)]
    pub data_seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<(TrainData, EvalData, serde_json::Value)> {
        let spec = self.synth.spec(self.data_seed);
        let train = match &self.data {
            Some(path) => {
                let (raw, labels) = read_features(path)?;
                TrainData { raw, true_ids: labels }
            }
            None => (&generate(&spec)?).into(),
        };
        let eval = match &self.eval {
            Some(path) => {
                let (raw, labels) = read_features(path)?;
                let ids = labels.ok_or_else(|| Error::Config(format!("{} has no identity labels", path.display())))?;
                let cams = self.eval_tags.as_deref().map(read_tags).transpose()?;
                if let Some(c) = &cams {
                    if c.len() != ids.len() {
                        return Err(Error::Shape(format!("{} tags for {} eval rows", c.len(), ids.len())));
                    }
                }
                EvalData { raw, ids, cams }
            }
            None => (&generate_holdout(&spec)?).into(),
        };
        let source = json!({
            "data": self.data.as_ref().map(|p| p.display().to_string()),
            "eval": self.eval.as_ref().map(|p| p.display().to_string()),
            "synth": if self.data.is_none() || self.eval.is_none() { serde_json::to_value(&spec).ok() } else { None },
        });
        Ok((train, eval, source))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Output directory for reports, stats and the checkpoint.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled features (AICV).
    #[arg(long)]
    pub data: PathBuf,
    /// Label CSV (`index,identity,tag`) supplying camera tags.
    #[arg(long)]
    pub tags: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub queries_per_id: usize,
    #[arg(long)]
    pub exclude_same_camera: bool,
    /// Write the metrics JSON here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Output CSV path.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DumpStatsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Features to encode and cluster (AICV).
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParam(_) => 2,
                _ => 1,
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::DumpStats(a) => cmd_dump_stats(&a),
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serializes")
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// `# config {json}` comment line heading every CSV artifact.
fn csv_preamble(meta: &serde_json::Value) -> String {
    format!("# config {}\n", to_json(meta))
}

/// Reads `index,identity,tag` rows (comment and header lines skipped) and
/// returns the tags in index order.
pub fn read_tags(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tags = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("index") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let parse_err = || Error::Shape(format!("{}: bad tag row '{line}'", path.display()));
        if cols.len() != 3 {
            return Err(parse_err());
        }
        let idx: usize = cols[0].parse().map_err(|_| parse_err())?;
        if idx != tags.len() {
            return Err(parse_err());
        }
        tags.push(cols[2].parse().map_err(|_| parse_err())?);
    }
    Ok(tags)
}

fn label_csv_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    output.with_file_name(format!("{stem}.labels.csv"))
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let spec = a.synth.spec(a.seed);
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    let data = if a.holdout {
        generate_holdout(&spec)?
    } else {
        generate(&spec)?
    };
    let labels: Vec<i64> = data.true_ids.iter().map(|&i| i as i64).collect();
    ensure_parent(&a.output)?;
    write_features(&a.output, &data.features, Some(&labels))?;

    let meta = json!({ "command": "generate", "spec": spec, "holdout": a.holdout });
    let mut csv = csv_preamble(&meta);
    csv.push_str("index,identity,tag\n");
    for (i, (id, tag)) in data.true_ids.iter().zip(&data.nuisance_tag).enumerate() {
        csv.push_str(&format!("{i},{id},{tag}\n"));
    }
    write_file(&label_csv_path(&a.output), csv.as_bytes())?;
    eprintln!(
        "wrote {} rows x {} dims to {}",
        data.len(),
        spec.raw_dim,
        a.output.display()
    );
    Ok(())
}

fn stats_csv(meta: &serde_json::Value, rows: &[crate::trainer::ClassStatsRecord]) -> String {
    let mut csv = csv_preamble(meta);
    csv.push_str(STATS_CSV_HEADER);
    csv.push('\n');
    for r in rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    csv
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let (train, eval, source) = a.data.load()?;
    let meta = json!({ "command": "train", "config": cfg, "source": source });

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let jsonl_path = a.out.join("epochs.jsonl");
    let mut jsonl = fs::File::create(&jsonl_path).map_err(|e| Error::io(&jsonl_path, e))?;
    writeln!(jsonl, "{}", to_json(&meta)).map_err(|e| Error::io(&jsonl_path, e))?;

    let stats_dir = a.out.join("stats");
    fs::create_dir_all(&stats_dir).map_err(|e| Error::io(&stats_dir, e))?;

    let (student, report) = run_training_with(cfg.clone(), train, Some(eval), |r, state| {
        writeln!(jsonl, "{}", to_json(r)).map_err(|e| Error::io(&jsonl_path, e))?;
        let path = stats_dir.join(format!("epoch_{:03}.csv", r.epoch));
        write_file(&path, stats_csv(&meta, state.class_stats()).as_bytes())?;
        if let Some(labeling) = state.labeling() {
            let mut csv = csv_preamble(&meta);
            csv.push_str(&labeling.to_csv());
            write_file(&a.out.join("labels.csv"), csv.as_bytes())?;
        }
        if let Some(memory) = state.memory() {
            write_features(&a.out.join("centroids.aicv"), memory.centroids(), None)?;
        }
        eprintln!(
            "epoch {:>3}  clusters {:>4}  outliers {:>4}  admitted {:>4}  loss {:.4}  mAP {}  ({:.2}s)",
            r.epoch,
            r.n_clusters,
            r.n_outliers,
            r.n_admitted,
            r.loss_total,
            r.map.map_or("-".into(), |m| format!("{m:.4}")),
            r.wall_seconds
        );
        Ok(())
    })?;

    save_checkpoint(&a.out.join("encoder.aicp"), &student)?;
    let metrics = json!({
        "meta": meta,
        "baseline": report.baseline,
        "final": report.final_metrics,
        "epochs_run": report.epochs.len(),
        "artifacts": if report.epochs.is_empty() {
            json!(["epochs.jsonl", "metrics.json", "encoder.aicp"])
        } else {
            json!(["epochs.jsonl", "metrics.json", "stats/", "labels.csv", "centroids.aicv", "encoder.aicp"])
        },
    });
    write_file(&a.out.join("metrics.json"), to_json_pretty(&metrics).as_bytes())?;
    if let (Some(b), Some(f)) = (&report.baseline, &report.final_metrics) {
        eprintln!(
            "baseline mAP {:.4}  final mAP {:.4}  rank-1 {:.4}",
            b.map, f.map, f.rank1
        );
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let params = load_checkpoint(&a.checkpoint)?;
    let (raw, labels) = read_features(&a.data)?;
    let ids = labels.ok_or_else(|| Error::Config(format!("{} has no identity labels", a.data.display())))?;
    let cams = a.tags.as_deref().map(read_tags).transpose()?;
    let cfg = TrainConfig {
        queries_per_id: a.queries_per_id,
        exclude_same_camera: a.exclude_same_camera,
        ..TrainConfig::default()
    };
    let metrics: RetrievalMetrics = evaluate_encoder(&params, &EvalData { raw, ids, cams }, &cfg)?;
    let out = json!({
        "meta": {
            "command": "eval",
            "checkpoint": a.checkpoint.display().to_string(),
            "data": a.data.display().to_string(),
            "queries_per_id": a.queries_per_id,
            "exclude_same_camera": a.exclude_same_camera,
        },
        "metrics": metrics,
        "csv": format!("{}\n{}", RetrievalMetrics::csv_header(), metrics.csv_row()),
    });
    let text = to_json_pretty(&out);
    match &a.output {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let (train, eval, source) = a.data.load()?;
    let rows = run_ablation(&cfg, &train, &eval)?;
    let meta = json!({ "command": "ablate", "config": cfg, "source": source });
    let mut csv = csv_preamble(&meta);
    csv.push_str("strategy,outliers,mAP,rank1\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.strategy, r.outliers, r.map, r.rank1));
        eprintln!(
            "{:>9} / {:<9} mAP {:.4}  rank-1 {:.4}",
            r.strategy, r.outliers, r.map, r.rank1
        );
    }
    write_file(&a.output, csv.as_bytes())
}

fn cmd_dump_stats(a: &DumpStatsArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let params = load_checkpoint(&a.checkpoint)?;
    let (raw, _) = read_features(&a.data)?;
    let feats = encoder::forward(&params, &raw)?;
    let labeling = dbscan(&feats, cfg.eps, cfg.min_pts)?;
    let meta = json!({
        "command": "dump-stats",
        "config": cfg,
        "checkpoint": a.checkpoint.display().to_string(),
        "data": a.data.display().to_string(),
    });

    let mut csv = csv_preamble(&meta);
    csv.push_str(&labeling.to_csv());
    write_file(&a.out.join("labels.csv"), csv.as_bytes())?;

    let mut stats = csv_preamble(&meta);
    stats.push_str("class_id,size,sim_h,sim_lh,alpha,diff,beta\n");
    if labeling.n_clusters() > 0 {
        write_features(
            &a.out.join("centroids.aicv"),
            &EmbeddingMatrix::from_rows(feats.dim(), &cluster_means(&feats, &labeling)?)?,
            None,
        )?;
        for (class, members) in labeling.members().iter().enumerate() {
            let s = ClassAdaptiveStats::compute(&feats.select_rows(members), cfg.tau, None)?;
            stats.push_str(&format!(
                "{class},{},{},{},{},{},{}\n",
                members.len(),
                s.sim_h,
                s.sim_lh,
                s.alpha,
                s.diff,
                s.beta
            ));
        }
    }
    write_file(&a.out.join("cluster_stats.csv"), stats.as_bytes())?;
    eprintln!(
        "{} clusters, {} outliers -> {}",
        labeling.n_clusters(),
        labeling.outlier_indices().len(),
        a.out.display()
    );
    Ok(())
}
