//! Epoch orchestration: teacher features → DBSCAN → memory init → outlier
//! admission → PK mini-batches with loss, optimizer step, memory writes and
//! EMA teacher update.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{self, ClassAdaptiveStats};
use crate::clusterer::{dbscan, PseudoLabeling};
use crate::encoder::{self, AdamState, EncoderParams, TeacherState};
use crate::error::{Error, Result};
use crate::evalkit::{self, RetrievalMetrics, RetrievalSplit};
use crate::loss::{self, LossBreakdown};
use crate::memory::{init_memory, ClusterMemory};
use crate::numcore::{l2_normalize_in_place, EmbeddingMatrix};
use crate::synthgen::RawDataset;

/// How each represented class picks the feature written into its memory entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateStrategy {
    /// Batch-class mean.
    Cm,
    /// Least similar sample to the centroid.
    Hardest,
    /// Rank fraction grows linearly with the epoch.
    Linear,
    /// Rank fraction from the class's intra-class variation.
    Adaptive,
}

/// Which clustering outliers join the memory as negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierStrategy {
    None,
    All,
    Adaptive,
}

macro_rules! lowercase_enum_str {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),* })
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok(Self::$v),)*
                    other => Err(Error::Config(format!("unknown {} '{other}'", stringify!($t)))),
                }
            }
        }
    };
}

lowercase_enum_str!(UpdateStrategy { Cm => "cm", Hardest => "hardest", Linear => "linear", Adaptive => "adaptive" });
lowercase_enum_str!(OutlierStrategy { None => "none", All => "all", Adaptive => "adaptive" });

/// Every hyperparameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub tau: f64,
    pub momentum_m: f64,
    pub ema_rate: f64,
    pub lambda_m: f64,
    pub eps: f64,
    pub min_pts: usize,
    /// Pseudo-identities per batch.
    pub p: usize,
    /// Instances per pseudo-identity.
    pub k: usize,
    pub epochs: usize,
    /// Overrides `floor(n_clustered / (P·K))`.
    pub iters_per_epoch: Option<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub f_min: f64,
    pub gamma_enabled: bool,
    pub update_strategy: UpdateStrategy,
    pub outlier_strategy: OutlierStrategy,
    pub seed: u64,
    /// Embedding dimension; defaults to the raw dimension.
    pub out_dim: Option<usize>,
    /// Width of the optional tanh hidden layer.
    pub hidden_dim: Option<usize>,
    pub eval_interval: usize,
    pub queries_per_id: usize,
    pub exclude_same_camera: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            momentum_m: 0.2,
            ema_rate: 0.999,
            lambda_m: 1.0,
            eps: 0.5,
            min_pts: 4,
            p: 4,
            k: 4,
            epochs: 50,
            iters_per_epoch: None,
            lr: 3.5e-4,
            weight_decay: 5e-4,
            f_min: 0.1,
            gamma_enabled: false,
            update_strategy: UpdateStrategy::Adaptive,
            outlier_strategy: OutlierStrategy::Adaptive,
            seed: 7,
            out_dim: None,
            hidden_dim: None,
            eval_interval: 1,
            queries_per_id: 2,
            exclude_same_camera: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.momentum_m) {
            return bad(format!("momentum_m must be in [0, 1], got {}", self.momentum_m));
        }
        if !(0.0..1.0).contains(&self.ema_rate) {
            return bad(format!("ema_rate must be in [0, 1), got {}", self.ema_rate));
        }
        if !(self.lambda_m >= 0.0 && self.lambda_m.is_finite()) {
            return bad(format!("lambda_m must be >= 0, got {}", self.lambda_m));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        if self.min_pts == 0 || self.p == 0 || self.k == 0 {
            return bad("min_pts, p and k must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("lr and weight_decay must be finite and >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.f_min) {
            return bad(format!("f_min must be in [0, 1], got {}", self.f_min));
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be >= 1".into());
        }
        if self.out_dim == Some(0) || self.hidden_dim == Some(0) || self.iters_per_epoch == Some(0) {
            return bad("out_dim, hidden_dim and iters_per_epoch must be >= 1 when set".into());
        }
        Ok(())
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are ignored;
    /// unknown keys are rejected. Missing keys keep their defaults.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut obj = serde_json::Map::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let value = value.trim();
            let parsed = match value {
                "none" | "null" | "" => serde_json::Value::Null,
                v => serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string())),
            };
            // "none" is also a valid outlier strategy.
            let parsed = if key.trim() == "outlier_strategy" && value == "none" {
                serde_json::Value::String("none".into())
            } else {
                parsed
            };
            obj.insert(key.trim().to_string(), parsed);
        }
        let cfg: Self =
            serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// One `key = value` line per field, keys sorted.
    pub fn to_kv_string(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                let v = match v {
                    serde_json::Value::Null => "none".to_string(),
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

/// Training features plus optional ground truth (diagnostics only).
#[derive(Debug, Clone)]
pub struct TrainData {
    pub raw: EmbeddingMatrix,
    pub true_ids: Option<Vec<i64>>,
}

/// Labelled held-out features for retrieval evaluation.
#[derive(Debug, Clone)]
pub struct EvalData {
    pub raw: EmbeddingMatrix,
    pub ids: Vec<i64>,
    pub cams: Option<Vec<u32>>,
}

impl From<&RawDataset> for TrainData {
    fn from(d: &RawDataset) -> Self {
        Self {
            raw: d.features.clone(),
            true_ids: Some(d.true_ids.iter().map(|&i| i as i64).collect()),
        }
    }
}

impl From<&RawDataset> for EvalData {
    fn from(d: &RawDataset) -> Self {
        Self {
            raw: d.features.clone(),
            ids: d.true_ids.iter().map(|&i| i as i64).collect(),
            cams: Some(d.nuisance_tag.clone()),
        }
    }
}

/// Encodes the eval set with `params` and scores retrieval.
pub fn evaluate_encoder(params: &EncoderParams, eval: &EvalData, cfg: &TrainConfig) -> Result<RetrievalMetrics> {
    let feats = encoder::forward(params, &eval.raw)?;
    let mut split = RetrievalSplit::by_identity(&feats, &eval.ids, eval.cams.as_deref(), cfg.queries_per_id)?;
    split.exclude_same_camera = cfg.exclude_same_camera;
    evalkit::evaluate(&split)
}

/// One P x K mini-batch; sample `indices[i*K..(i+1)*K]` belong to `classes[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PkBatch {
    pub classes: Vec<usize>,
    pub indices: Vec<usize>,
    pub k: usize,
}

/// Draws `p` distinct clusters uniformly and `k` members from each, with
/// replacement only when a cluster has fewer than `k` members. Outliers are
/// never drawn.
pub fn pk_sample(members: &[Vec<usize>], p: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<PkBatch> {
    let usable = members.iter().filter(|m| !m.is_empty()).count();
    if usable < p {
        return Err(Error::NotEnoughClusters {
            needed: p,
            found: usable,
        });
    }
    if k == 0 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    let candidates: Vec<usize> = (0..members.len()).filter(|&c| !members[c].is_empty()).collect();
    let classes: Vec<usize> = index::sample(rng, candidates.len(), p)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    let mut indices = Vec::with_capacity(p * k);
    for &c in &classes {
        let m = &members[c];
        if m.len() >= k {
            indices.extend(index::sample(rng, m.len(), k).into_iter().map(|i| m[i]));
        } else {
            indices.extend((0..k).map(|_| m[rng.random_range(0..m.len())]));
        }
    }
    Ok(PkBatch { classes, indices, k })
}

/// Per-class statistics row for the plot-ready CSV dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStatsRecord {
    pub epoch: usize,
    pub batch: usize,
    pub class_id: usize,
    pub sim_h: f64,
    pub sim_lh: f64,
    pub alpha: f64,
    pub diff: f64,
    /// Rank fraction actually used for the memory write (NaN for CM).
    pub beta: f64,
    /// Batch position of the sample written to memory (None for CM).
    pub selected: Option<usize>,
}

pub const STATS_CSV_HEADER: &str = "class_id,sim_h,sim_lh,alpha,diff,beta";

impl ClassStatsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.class_id, self.sim_h, self.sim_lh, self.alpha, self.diff, self.beta
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub n_clusters: usize,
    pub n_outliers: usize,
    pub n_admitted: usize,
    /// Difficulty indicator used for this epoch's outlier admission.
    pub diff_global_used: f64,
    /// Mean of this epoch's per-class diffs; drives the next epoch.
    pub diff_global: f64,
    pub iters: usize,
    pub loss_hybrid: f64,
    pub loss_mse: f64,
    pub loss_total: f64,
    /// Agreement of the pseudo-labels with ground truth, when known.
    pub cluster_ari: Option<f64>,
    pub map: Option<f64>,
    pub rank1: Option<f64>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Mutable state carried across epochs.
pub struct TrainState {
    pub config: TrainConfig,
    pub student: EncoderParams,
    pub teacher: TeacherState,
    pub optimizer: AdamState,
    /// Previous epoch's mean diff; starts at 1 (weakest model).
    pub diff_global: f64,
    pub epoch: usize,
    rng: ChaCha8Rng,
    data: TrainData,
    eval: Option<EvalData>,
    memory: Option<ClusterMemory>,
    labeling: Option<PseudoLabeling>,
    class_stats: Vec<ClassStatsRecord>,
}

impl TrainState {
    pub fn new(config: TrainConfig, data: TrainData, eval: Option<EvalData>) -> Result<Self> {
        config.validate()?;
        if data.raw.is_empty() {
            return Err(Error::Empty("training data"));
        }
        if config.p * config.k > data.raw.rows() {
            return Err(Error::Config(format!(
                "P·K = {} exceeds dataset size {}",
                config.p * config.k,
                data.raw.rows()
            )));
        }
        if let Some(e) = &eval {
            if e.raw.dim() != data.raw.dim() {
                return Err(Error::DimMismatch {
                    expected: data.raw.dim(),
                    got: e.raw.dim(),
                });
            }
        }
        let raw_dim = data.raw.dim();
        let student = EncoderParams::init(
            raw_dim,
            config.out_dim.unwrap_or(raw_dim),
            config.hidden_dim,
            config.seed,
        )?;
        let teacher = TeacherState::new(&student, config.ema_rate)?;
        let optimizer = AdamState::new(&student, config.lr, config.weight_decay);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            student,
            teacher,
            optimizer,
            diff_global: 1.0,
            epoch: 0,
            rng,
            data,
            eval,
            memory: None,
            labeling: None,
            class_stats: Vec::new(),
        })
    }

    pub fn memory(&self) -> Option<&ClusterMemory> {
        self.memory.as_ref()
    }

    pub fn labeling(&self) -> Option<&PseudoLabeling> {
        self.labeling.as_ref()
    }

    /// Per-class statistics from the most recent epoch, in batch order.
    pub fn class_stats(&self) -> &[ClassStatsRecord] {
        &self.class_stats
    }

    pub fn evaluate(&self) -> Result<Option<RetrievalMetrics>> {
        self.eval
            .as_ref()
            .map(|e| evaluate_encoder(&self.student, e, &self.config))
            .transpose()
    }

    fn admitted_outliers(
        &self,
        feats: &EmbeddingMatrix,
        labeling: &PseudoLabeling,
        centroids: &EmbeddingMatrix,
    ) -> Result<EmbeddingMatrix> {
        let outliers = feats.select_rows(labeling.outlier_indices());
        match self.config.outlier_strategy {
            OutlierStrategy::None => EmbeddingMatrix::empty(feats.dim()),
            OutlierStrategy::All => Ok(outliers),
            OutlierStrategy::Adaptive => {
                let d = adaptive::adaof_admit(&outliers, centroids, self.diff_global, self.config.f_min)?;
                Ok(outliers.select_rows(&d.admitted_indices))
            }
        }
    }

    /// Feature written into a class's memory entry, with the β used and the
    /// batch-local index chosen.
    fn update_feature(
        &self,
        class_feats: &EmbeddingMatrix,
        centroid: &[f64],
        stats: &ClassAdaptiveStats,
    ) -> Result<(Vec<f64>, f64, Option<usize>)> {
        let cfg = &self.config;
        let beta = match cfg.update_strategy {
            UpdateStrategy::Cm => {
                let k = class_feats.rows() as f64;
                let mut mean = vec![0.0; class_feats.dim()];
                for r in class_feats.iter_rows() {
                    for (m, x) in mean.iter_mut().zip(r) {
                        *m += x / k;
                    }
                }
                if l2_normalize_in_place(&mut mean).is_err() {
                    return Ok((centroid.to_vec(), f64::NAN, None));
                }
                return Ok((mean, f64::NAN, None));
            }
            UpdateStrategy::Hardest => 1.0,
            UpdateStrategy::Linear => self.epoch as f64 / cfg.epochs.max(1) as f64,
            UpdateStrategy::Adaptive => stats.beta,
        };
        let pick = adaptive::select_update_sample(class_feats, centroid, beta)?;
        Ok((class_feats.row(pick).to_vec(), beta, Some(pick)))
    }

    /// Runs one full epoch.
    pub fn train_epoch(&mut self) -> Result<EpochReport> {
        let start = Instant::now();
        let cfg = self.config.clone();

        let feats = encoder::forward(&self.teacher.params, &self.data.raw)?;
        let labeling = dbscan(&feats, cfg.eps, cfg.min_pts)?;
        if labeling.n_clusters() == 0 {
            return Err(Error::NoClusters {
                eps: cfg.eps,
                min_pts: cfg.min_pts,
            });
        }
        let mut memory = init_memory(&feats, &labeling, cfg.momentum_m, cfg.tau)?;
        let admitted = self.admitted_outliers(&feats, &labeling, memory.centroids())?;
        let n_admitted = admitted.rows();
        memory.set_outlier_bank(admitted)?;

        let members = labeling.members();
        let p = cfg.p.min(labeling.n_clusters());
        let iters = cfg
            .iters_per_epoch
            .unwrap_or_else(|| (labeling.n_clustered() / (p * cfg.k)).max(1));
        let gamma = cfg.gamma_enabled.then(|| self.epoch as f64 / cfg.epochs.max(1) as f64);
        let labels = labeling.labels();

        let mut losses = Vec::with_capacity(iters * p * cfg.k);
        let mut diffs = Vec::with_capacity(iters * p);
        self.class_stats.clear();

        for batch in 0..iters {
            let pk = pk_sample(&members, p, cfg.k, &mut self.rng)?;
            let raw = self.data.raw.select_rows(&pk.indices);
            let cache = encoder::forward_cached(&self.student, &raw)?;
            let q_s = &cache.embeddings;
            let q_t = if cfg.lambda_m != 0.0 {
                encoder::forward(&self.teacher.params, &raw)?
            } else {
                q_s.clone()
            };

            let per_sample: Vec<(LossBreakdown, Vec<f64>)> = (0..pk.indices.len())
                .into_par_iter()
                .map(|i| {
                    let pos = labels[pk.indices[i]] as usize;
                    loss::sample_objective(q_s.row(i), q_t.row(i), &memory, pos, cfg.lambda_m)
                })
                .collect::<Result<_>>()?;
            let b = per_sample.len() as f64;
            let mut grad = Vec::with_capacity(q_s.data().len());
            for (l, g) in &per_sample {
                losses.push(*l);
                grad.extend(g.iter().map(|x| x / b));
            }
            let grad = EmbeddingMatrix::new(q_s.rows(), q_s.dim(), grad)?;
            let grads = encoder::backward(&self.student, &cache, &grad)?;
            self.optimizer.step(&mut self.student, &grads)?;

            // Stats use the features from this step's forward pass, detached.
            let class_feats: Vec<EmbeddingMatrix> = (0..pk.classes.len())
                .map(|i| q_s.select_rows(&((i * pk.k)..((i + 1) * pk.k)).collect::<Vec<_>>()))
                .collect();
            let stats: Vec<ClassAdaptiveStats> = class_feats
                .par_iter()
                .map(|f| ClassAdaptiveStats::compute(f, cfg.tau, gamma))
                .collect::<Result<_>>()?;
            for ((&class, f), s) in pk.classes.iter().zip(&class_feats).zip(&stats) {
                let centroid = memory.centroids().row(class).to_vec();
                let (feature, beta, selected) = self.update_feature(f, &centroid, s)?;
                memory.momentum_update(class, &feature)?;
                diffs.push(s.diff);
                self.class_stats.push(ClassStatsRecord {
                    epoch: self.epoch,
                    batch,
                    class_id: class,
                    sim_h: s.sim_h,
                    sim_lh: s.sim_lh,
                    alpha: s.alpha,
                    diff: s.diff,
                    beta,
                    selected,
                });
            }
            self.teacher.ema_update(&self.student)?;
        }

        let diff_global_used = self.diff_global;
        if !diffs.is_empty() {
            self.diff_global = adaptive::global_diff(&diffs)?;
        }
        let mean = LossBreakdown::mean(&losses, cfg.lambda_m);
        let cluster_ari = self
            .data
            .true_ids
            .as_ref()
            .map(|t| evalkit::ari(labeling.labels(), t))
            .transpose()?;

        let is_last = self.epoch + 1 == cfg.epochs;
        let metrics = if (self.epoch + 1).is_multiple_of(cfg.eval_interval) || is_last {
            self.evaluate()?
        } else {
            None
        };

        let report = EpochReport {
            epoch: self.epoch,
            n_clusters: labeling.n_clusters(),
            n_outliers: labeling.outlier_indices().len(),
            n_admitted,
            diff_global_used,
            diff_global: self.diff_global,
            iters,
            loss_hybrid: mean.hybrid,
            loss_mse: mean.mse,
            loss_total: mean.total,
            cluster_ari,
            map: metrics.as_ref().map(|m| m.map),
            rank1: metrics.as_ref().map(|m| m.rank1),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        self.memory = Some(memory);
        self.labeling = Some(labeling);
        self.epoch += 1;
        Ok(report)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingReport {
    pub config: TrainConfig,
    /// Retrieval of the untrained encoder.
    pub baseline: Option<RetrievalMetrics>,
    pub epochs: Vec<EpochReport>,
    /// Retrieval of the final student encoder.
    pub final_metrics: Option<RetrievalMetrics>,
}

/// Trains for `config.epochs` epochs. `on_epoch` sees each report and the
/// state as soon as the epoch finishes.
pub fn run_training_with(
    config: TrainConfig,
    data: TrainData,
    eval: Option<EvalData>,
    mut on_epoch: impl FnMut(&EpochReport, &TrainState) -> Result<()>,
) -> Result<(EncoderParams, TrainingReport)> {
    let mut state = TrainState::new(config, data, eval)?;
    let baseline = state.evaluate()?;
    let mut epochs = Vec::with_capacity(state.config.epochs);
    for _ in 0..state.config.epochs {
        let report = state.train_epoch()?;
        on_epoch(&report, &state)?;
        epochs.push(report);
    }
    let final_metrics = if state.config.epochs == 0 {
        baseline.clone()
    } else {
        state.evaluate()?
    };
    let report = TrainingReport {
        config: state.config.clone(),
        baseline,
        epochs,
        final_metrics,
    };
    Ok((state.student, report))
}

pub fn run_training(
    config: TrainConfig,
    data: TrainData,
    eval: Option<EvalData>,
) -> Result<(EncoderParams, TrainingReport)> {
    run_training_with(config, data, eval, |_, _| Ok(()))
}

/// The six update/outlier pairings compared in the ablation.
pub const ABLATION_GRID: [(UpdateStrategy, OutlierStrategy); 6] = [
    (UpdateStrategy::Cm, OutlierStrategy::None),
    (UpdateStrategy::Hardest, OutlierStrategy::None),
    (UpdateStrategy::Linear, OutlierStrategy::None),
    (UpdateStrategy::Adaptive, OutlierStrategy::None),
    (UpdateStrategy::Adaptive, OutlierStrategy::All),
    (UpdateStrategy::Adaptive, OutlierStrategy::Adaptive),
];

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub strategy: UpdateStrategy,
    pub outliers: OutlierStrategy,
    pub map: f64,
    pub rank1: f64,
}

/// Runs every pairing in [`ABLATION_GRID`] from the same base config.
pub fn run_ablation(base: &TrainConfig, data: &TrainData, eval: &EvalData) -> Result<Vec<AblationRow>> {
    ABLATION_GRID
        .iter()
        .map(|&(strategy, outliers)| {
            let cfg = TrainConfig {
                update_strategy: strategy,
                outlier_strategy: outliers,
                ..base.clone()
            };
            let (_, report) = run_training(cfg, data.clone(), Some(eval.clone()))?;
            let m = report.final_metrics.expect("eval data supplied");
            Ok(AblationRow {
                strategy,
                outliers,
                map: m.map,
                rank1: m.rank1,
            })
        })
        .collect()
}

/// Keyed view of the config, used when embedding it in report headers.
pub fn config_map(cfg: &TrainConfig) -> BTreeMap<String, serde_json::Value> {
    match serde_json::to_value(cfg).expect("config serializes") {
        serde_json::Value::Object(m) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}
