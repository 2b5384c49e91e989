//! Training loop, multi-round scoring, score normalization and fusion.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{self, DiffusionConfig, DiffusionMatrix};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::model::{forward, BatchInputs, ModelDims, ModelParams, Objective};
use crate::nn::{adam_step, AdamConfig, AdamState};
use crate::rng::{stream, Phase, StreamKey};
use crate::sampler::{make_batch, NegativeMode, SamplerConfig, DEFAULT_RESTART_PROB};
use crate::sparse::CsrMatrix;

/// Rounds below this count are flagged as a smoke run.
pub const REFERENCE_ROUNDS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    /// Reconstruction module removed.
    SubR,
    /// Contrastive module removed.
    SubC,
    /// `γ = 1`.
    SubWeight,
    /// Global view removed.
    SubGlobal,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Full, Variant::SubR, Variant::SubC, Variant::SubWeight, Variant::SubGlobal];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::SubR => "sub-r",
            Variant::SubC => "sub-c",
            Variant::SubWeight => "sub-weight",
            Variant::SubGlobal => "sub-global",
        }
    }

    pub fn effective_gamma(self, gamma: f64) -> f64 {
        match self {
            Variant::SubWeight => 1.0,
            _ => gamma,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown variant {s:?} (expected full, sub-r, sub-c, sub-weight or sub-global)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `(v − min)/(max − min)`; a zero range maps to all zeros.
    #[default]
    MinMax,
    /// `(v − mean)/std`; a zero spread maps to all zeros.
    ZScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub subgraph_size: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub restart_prob: f64,
    pub rounds: usize,
    pub seed: u64,
    pub variant: Variant,
    pub negatives: NegativeMode,
    pub share_views: bool,
    pub normalization: Normalization,
    /// Divide the cross-view term by the batch size.
    pub inter_per_node_mean: bool,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            subgraph_size: 4,
            hidden: 64,
            batch_size: 300,
            epochs: 100,
            lr: 0.001,
            gamma: 0.6,
            alpha: 0.15,
            restart_prob: DEFAULT_RESTART_PROB,
            rounds: REFERENCE_ROUNDS,
            seed: 0,
            variant: Variant::Full,
            negatives: NegativeMode::Rotate,
            share_views: false,
            normalization: Normalization::MinMax,
            inter_per_node_mean: false,
            weight_decay: 0.0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.subgraph_size == 0 {
            return fail("subgraph_size must be at least 1".into());
        }
        if self.objective().reconstruction && self.subgraph_size < 2 {
            return fail(format!("variant {} reconstructs attributes and needs subgraph_size >= 2", self.variant));
        }
        if self.hidden == 0 {
            return fail("hidden must be at least 1".into());
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size {} leaves no negative pair", self.batch_size));
        }
        if self.rounds == 0 {
            return fail("rounds must be at least 1".into());
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma {} must be finite and non-negative", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr {} must be positive", self.lr));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.restart_prob) {
            return fail(format!("restart_prob {} outside [0, 1]", self.restart_prob));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return fail(format!("clip_norm {c} must be positive"));
            }
        }
        Ok(())
    }

    pub fn effective_gamma(&self) -> f64 {
        self.variant.effective_gamma(self.gamma)
    }

    pub fn objective(&self) -> Objective {
        Objective {
            gamma: self.effective_gamma(),
            contrastive: self.variant != Variant::SubC,
            reconstruction: self.variant != Variant::SubR,
            global_view: self.variant != Variant::SubGlobal,
            inter_per_node_mean: self.inter_per_node_mean,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            subgraph_size: self.subgraph_size,
            restart_prob: self.restart_prob,
            negatives: self.negatives,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
            ..AdamConfig::default()
        }
    }

    pub fn diffusion(&self) -> DiffusionConfig {
        DiffusionConfig {
            alpha: self.alpha,
            ..DiffusionConfig::default()
        }
    }

    pub fn model_dims(&self, features: usize) -> ModelDims {
        ModelDims {
            features,
            hidden: self.hidden,
            subgraph_size: self.subgraph_size,
        }
    }

    /// Hex SHA-256 of the JSON serialization.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Splits `order` into consecutive chunks of `batch_size`; a trailing chunk of
/// one node joins the previous chunk.
pub fn partition(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut chunks: Vec<&[usize]> = order.chunks(batch_size.max(1)).collect();
    if chunks.len() >= 2 && chunks[chunks.len() - 1].len() == 1 {
        chunks.pop();
        let start = order.len() - 1 - chunks[chunks.len() - 1].len();
        *chunks.last_mut().expect("two chunks") = &order[start..];
    }
    chunks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_con: f64,
    pub loss_res: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLoss>,
}

fn check_inputs(g: &AttributedGraph, s: &DiffusionMatrix) -> Result<()> {
    if g.num_nodes() < 2 {
        return Err(Error::Config(format!("graph has {} node(s); at least 2 are needed", g.num_nodes())));
    }
    if s.num_nodes() != g.num_nodes() {
        return Err(Error::Dimension(format!(
            "diffusion matrix covers {} nodes, graph has {}",
            s.num_nodes(),
            g.num_nodes()
        )));
    }
    Ok(())
}

pub fn train(cfg: &TrainConfig, g: &AttributedGraph, s: &DiffusionMatrix) -> Result<TrainOutcome> {
    train_with(cfg, g, s, |_| {})
}

/// Each epoch shuffles all nodes, samples a fresh batch per chunk and takes
/// one Adam step per batch. `on_epoch` sees each epoch's mean losses.
pub fn train_with(cfg: &TrainConfig, g: &AttributedGraph, s: &DiffusionMatrix, mut on_epoch: impl FnMut(&EpochLoss)) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_inputs(g, s)?;
    let features = CsrMatrix::from_dense(g.attributes().view());
    let objective = cfg.objective();
    let sampler = cfg.sampler();
    let mut params = ModelParams::init(cfg.model_dims(g.num_features()), cfg.share_views, cfg.seed)?;
    let mut adam = AdamState::new(cfg.adam(), params.tensors().into_iter().map(|(_, t)| t));
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let round = u32::try_from(epoch).map_err(|_| Error::Config("too many epochs".into()))?;
        let mut order: Vec<usize> = (0..g.num_nodes()).collect();
        order.shuffle(&mut stream(cfg.seed, Phase::Shuffle, round, 0));
        let key = StreamKey::new(cfg.seed, Phase::Train, round);
        let (mut con, mut res, mut total) = (0.0, 0.0, 0.0);
        let chunks = partition(&order, cfg.batch_size);
        for (i, targets) in chunks.iter().enumerate() {
            let diagnose = |e: Error| match e {
                Error::Numerical(m) => Error::Numerical(format!(
                    "{m} (epoch {epoch}, batch {i}, seed {}, stream round {round}, first targets {:?})",
                    cfg.seed,
                    &targets[..targets.len().min(8)]
                )),
                other => other,
            };
            let batch = make_batch(g, s, targets, &sampler, key)?;
            let inputs = BatchInputs::new(&batch, &features)?;
            let pass = forward(&params, &inputs, &objective, true).map_err(diagnose)?;
            let grads = pass.tape.backward(pass.loss).map_err(diagnose)?;
            let grads = pass.param_gradients(&grads);
            if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(diagnose(Error::Numerical("non-finite gradient".into())));
            }
            let grad_refs: Vec<&Array2<f64>> = grads.iter().collect();
            adam_step(&mut params.tensors_mut(), &grad_refs, &mut adam)?;
            con += pass.value(pass.con).unwrap_or(0.0);
            res += pass.value(pass.res).unwrap_or(0.0);
            total += pass.loss_value();
        }
        let n = chunks.len() as f64;
        let entry = EpochLoss {
            epoch: epoch + 1,
            loss_con: con / n,
            loss_res: res / n,
            loss_total: total / n,
        };
        log::debug!("epoch {} loss {:.6}", entry.epoch, entry.loss_total);
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { params, log })
}

pub fn write_epoch_log(log: &[EpochLoss], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["epoch", "loss_con", "loss_res", "loss_total"])
        .map_err(|e| csv_error(path, e))?;
    for e in log {
        w.write_record([e.epoch.to_string(), e.loss_con.to_string(), e.loss_res.to_string(), e.loss_total.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.into(),
            message: format!("{other:?}"),
        },
    }
}

/// `mean over views of (s⁻ − s⁺)` per slot; in `(−1, 1)`, higher is more anomalous.
pub fn score_contrastive_round(views: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let Some(first) = views.first() else {
        return Vec::new();
    };
    (0..first.0.len())
        .map(|b| views.iter().map(|(pos, neg)| neg[b] - pos[b]).sum::<f64>() / views.len() as f64)
        .collect()
}

/// Mean over views of the per-slot squared reconstruction error.
pub fn score_reconstruction_round(errors: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = errors.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|b| errors.iter().map(|e| e[b]).sum::<f64>() / errors.len() as f64)
        .collect()
}

/// Per-slot scores of one batch under the active terms of `objective`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundScores {
    pub contrastive: Option<Vec<f64>>,
    pub reconstruction: Option<Vec<f64>>,
}

pub fn score_batch(params: &ModelParams, inputs: &BatchInputs, objective: &Objective) -> Result<RoundScores> {
    let pass = forward(params, inputs, objective, false)?;
    let kinds = objective.views();
    let contrastive = objective.contrastive.then(|| {
        let views: Vec<_> = kinds.iter().filter_map(|&k| pass.scores(k)).collect();
        score_contrastive_round(&views)
    });
    let reconstruction = objective.reconstruction.then(|| {
        let errors: Vec<_> = kinds.iter().filter_map(|&k| pass.reconstruction_errors(k)).collect();
        score_reconstruction_round(&errors)
    });
    Ok(RoundScores {
        contrastive,
        reconstruction,
    })
}

pub fn normalize(values: &[f64], method: Normalization) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    match method {
        Normalization::MinMax => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = max - min;
            if range > 0.0 {
                values.iter().map(|v| (v - min) / range).collect()
            } else {
                vec![0.0; values.len()]
            }
        }
        Normalization::ZScore => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            if std > 0.0 {
                values.iter().map(|v| (v - mean) / std).collect()
            } else {
                vec![0.0; values.len()]
            }
        }
    }
}

/// `con + γ·res` elementwise.
pub fn fuse(con: &[f64], res: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if con.len() != res.len() {
        return Err(Error::Shape {
            op: "fuse",
            left: (con.len(), 1),
            right: (res.len(), 1),
        });
    }
    Ok(con.iter().zip(res).map(|(c, r)| c + gamma * r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub seed: u64,
    pub rounds: usize,
    /// Fewer than [`REFERENCE_ROUNDS`] rounds.
    pub low_round: bool,
    pub variant: Variant,
    pub gamma: f64,
    pub normalization: Normalization,
    /// Effective configuration echoed into reports.
    pub config: serde_json::Value,
}

/// Per-node scores. `contrastive` and `reconstruction` are normalized;
/// the `_raw` vectors hold the round averages before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub contrastive: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub combined: Vec<f64>,
    pub contrastive_raw: Vec<f64>,
    pub reconstruction_raw: Vec<f64>,
    pub labels: Option<Vec<u8>>,
    pub meta: ReportMeta,
}

pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_META_FILE: &str = "report.json";

impl ScoreReport {
    pub fn num_nodes(&self) -> usize {
        self.combined.len()
    }

    /// Writes `node_id,contrastive,reconstruction,combined,label`; the label
    /// field is empty when the graph is unlabeled.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "node_id,contrastive,reconstruction,combined,label").map_err(io)?;
        for i in 0..self.num_nodes() {
            let label = self.labels.as_ref().map(|l| l[i].to_string()).unwrap_or_default();
            writeln!(
                out,
                "{i},{},{},{},{label}",
                self.contrastive[i], self.reconstruction[i], self.combined[i]
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// `scores.csv` and `report.json` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.write_csv(&dir.join(SCORES_FILE))?;
        let raw = serde_json::json!({
            "meta": self.meta,
            "contrastive_raw": self.contrastive_raw,
            "reconstruction_raw": self.reconstruction_raw,
        });
        let path = dir.join(REPORT_META_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&raw).expect("report serializes")).map_err(|e| Error::io(&path, e))
    }

    /// Reads a directory written by [`ScoreReport::write`].
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(REPORT_META_FILE);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        #[derive(Deserialize)]
        struct Sidecar {
            meta: ReportMeta,
            contrastive_raw: Vec<f64>,
            reconstruction_raw: Vec<f64>,
        }
        let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: meta_path.clone(),
            message: e.to_string(),
        })?;

        let csv_path = dir.join(SCORES_FILE);
        let mut reader = csv::Reader::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
        let (mut con, mut res, mut comb, mut labels) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(&csv_path, e))?;
            let field = |k: usize| -> Result<f64> {
                let v = record.get(k).unwrap_or("");
                v.trim().parse().map_err(|_| Error::Parse {
                    path: csv_path.clone(),
                    line: line + 2,
                    value: v.into(),
                })
            };
            con.push(field(1)?);
            res.push(field(2)?);
            comb.push(field(3)?);
            match record.get(4).map(str::trim) {
                Some("") | None => {}
                Some(l) => labels.push(l.parse::<u8>().map_err(|_| Error::Parse {
                    path: csv_path.clone(),
                    line: line + 2,
                    value: l.into(),
                })?),
            }
        }
        let labels = match labels.len() {
            0 => None,
            n if n == comb.len() => Some(labels),
            n => {
                return Err(Error::Format {
                    path: csv_path,
                    message: format!("{n} of {} rows carry a label", comb.len()),
                })
            }
        };
        Ok(Self {
            contrastive: con,
            reconstruction: res,
            combined: comb,
            contrastive_raw: side.contrastive_raw,
            reconstruction_raw: side.reconstruction_raw,
            labels,
            meta: side.meta,
        })
    }
}

/// Scores every node over `cfg.rounds` sampling rounds, averages per node,
/// normalizes each component over nodes and fuses them.
pub fn infer(params: &ModelParams, cfg: &TrainConfig, g: &AttributedGraph, s: &DiffusionMatrix) -> Result<ScoreReport> {
    cfg.validate()?;
    check_inputs(g, s)?;
    let n = g.num_nodes();
    let features = CsrMatrix::from_dense(g.attributes().view());
    let objective = cfg.objective();
    let sampler = cfg.sampler();
    let order: Vec<usize> = (0..n).collect();
    let chunks = partition(&order, cfg.batch_size);
    let mut con_sum = vec![0.0; n];
    let mut res_sum = vec![0.0; n];
    for round in 0..cfg.rounds {
        let key = StreamKey::new(cfg.seed, Phase::Infer, u32::try_from(round).map_err(|_| Error::Config("too many rounds".into()))?);
        for targets in &chunks {
            let batch = make_batch(g, s, targets, &sampler, key)?;
            let scores = score_batch(params, &BatchInputs::new(&batch, &features)?, &objective)?;
            for (slot, &t) in targets.iter().enumerate() {
                if let Some(c) = &scores.contrastive {
                    con_sum[t] += c[slot];
                }
                if let Some(r) = &scores.reconstruction {
                    res_sum[t] += r[slot];
                }
            }
        }
    }
    let r = cfg.rounds as f64;
    let contrastive_raw: Vec<f64> = con_sum.iter().map(|v| v / r).collect();
    let reconstruction_raw: Vec<f64> = res_sum.iter().map(|v| v / r).collect();
    let contrastive = normalize(&contrastive_raw, cfg.normalization);
    let reconstruction = normalize(&reconstruction_raw, cfg.normalization);
    let gamma = cfg.effective_gamma();
    let combined = match cfg.variant {
        Variant::SubR => contrastive.clone(),
        Variant::SubC => reconstruction.clone(),
        _ => fuse(&contrastive, &reconstruction, gamma)?,
    };
    Ok(ScoreReport {
        contrastive,
        reconstruction,
        combined,
        contrastive_raw,
        reconstruction_raw,
        labels: g.labels().map(<[u8]>::to_vec),
        meta: ReportMeta {
            config_hash: cfg.config_hash(),
            seed: cfg.seed,
            rounds: cfg.rounds,
            low_round: cfg.rounds < REFERENCE_ROUNDS,
            variant: cfg.variant,
            gamma,
            normalization: cfg.normalization,
            config: serde_json::to_value(cfg).expect("config serializes"),
        },
    })
}

/// Hex SHA-256 over the node count and sorted edge list.
pub fn graph_fingerprint(g: &AttributedGraph) -> String {
    let mut h = Sha256::new();
    h.update((g.num_nodes() as u64).to_le_bytes());
    for (a, b) in g.adjacency().edges() {
        h.update((a as u64).to_le_bytes());
        h.update((b as u64).to_le_bytes());
    }
    hex(&h.finalize())
}

/// Cache file for `(graph, config)` inside `dir`.
pub fn diffusion_cache_path(dir: &Path, g: &AttributedGraph, cfg: &DiffusionConfig) -> PathBuf {
    let transition = match cfg.transition {
        diffusion::TransitionNorm::Symmetric => "sym",
        diffusion::TransitionNorm::RowStochastic => "row",
    };
    let trunc = cfg
        .effective_truncation(g.num_nodes())
        .map_or_else(|| "full".to_string(), |k| format!("top{k}"));
    dir.join(format!(
        "ppr-{}-a{}-{transition}-{trunc}.bin",
        &graph_fingerprint(g)[..16],
        cfg.alpha
    ))
}

/// Reads the diffusion matrix from `cache_dir` when a matching file exists,
/// otherwise computes it and stores it there.
pub fn diffusion_with_cache(g: &AttributedGraph, cfg: &DiffusionConfig, cache_dir: Option<&Path>) -> Result<DiffusionMatrix> {
    let Some(dir) = cache_dir else {
        return diffusion::diffuse(g, cfg);
    };
    let path = diffusion_cache_path(dir, g, cfg);
    if path.exists() {
        let s = diffusion::read_cache(&path)?;
        if s.num_nodes() == g.num_nodes() && s.alpha() == cfg.alpha && s.transition() == cfg.transition {
            log::info!("diffusion loaded from {}", path.display());
            return Ok(s);
        }
        log::warn!("ignoring stale diffusion cache {}", path.display());
    }
    let s = diffusion::diffuse(g, cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    diffusion::write_cache(&s, &path)?;
    Ok(s)
}

/// Everything one end-to-end run produces.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub outcome: TrainOutcome,
    pub report: ScoreReport,
    /// Present when the graph carries labels.
    pub roc: Option<crate::eval::RocResult>,
}

impl Experiment {
    pub fn auc(&self) -> Option<f64> {
        self.roc.as_ref().map(|r| r.auc)
    }
}

/// Diffusion (cached when `cache_dir` is set), training, scoring and, for
/// labeled graphs, ROC.
pub fn run_experiment(cfg: &TrainConfig, g: &AttributedGraph, cache_dir: Option<&Path>) -> Result<Experiment> {
    cfg.validate()?;
    let s = diffusion_with_cache(g, &cfg.diffusion(), cache_dir)?;
    run_with_diffusion(cfg, g, &s)
}

/// [`run_experiment`] with a precomputed diffusion matrix.
pub fn run_with_diffusion(cfg: &TrainConfig, g: &AttributedGraph, s: &DiffusionMatrix) -> Result<Experiment> {
    if s.num_nodes() != g.num_nodes() || s.alpha() != cfg.alpha {
        return Err(Error::Dimension(format!(
            "diffusion over {} nodes with alpha {} does not match graph of {} nodes with alpha {}",
            s.num_nodes(),
            s.alpha(),
            g.num_nodes(),
            cfg.alpha
        )));
    }
    let outcome = train(cfg, g, s)?;
    let report = infer(&outcome.params, cfg, g, s)?;
    let roc = match &report.labels {
        Some(labels) => Some(crate::eval::compute_roc(&report.combined, labels)?),
        None => None,
    };
    Ok(Experiment { outcome, report, roc })
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EPOCH_LOG_FILE: &str = "epoch_log.csv";

/// Writes the checkpoint, epoch log, score report and, when present, ROC artifacts.
pub fn write_experiment(exp: &Experiment, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ckpt = exp.outcome.params.to_checkpoint(exp.report.meta.config.clone());
    crate::nn::write_checkpoint(&ckpt, &dir.join(CHECKPOINT_FILE))?;
    write_epoch_log(&exp.outcome.log, &dir.join(EPOCH_LOG_FILE))?;
    exp.report.write(dir)?;
    if let Some(roc) = &exp.roc {
        crate::eval::emit_report(roc, &exp.report, dir)?;
    }
    Ok(())
}
