//! The network: a one-layer GCN encoder, target mapper, mean readout, bilinear
//! discriminator and attribute decoder per view, plus every loss term.
//!
//! The free functions ([`encode_subgraph`], [`discriminate`], ...) operate on a
//! single subgraph. [`forward`] evaluates a whole [`ViewPairBatch`] on a
//! [`Tape`] so the same pass serves training and scoring.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{uniform_init, Checkpoint, Gradients, Tape, Var};
use crate::rng::{stream, Phase};
use crate::sampler::{NegativeMode, SubgraphView, ViewPairBatch};
use crate::sparse::CsrMatrix;

/// Scores are clamped to `[LOG_FLOOR, 1]` before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub features: usize,
    pub hidden: usize,
    pub subgraph_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    Local,
    Global,
}

impl ViewKind {
    pub fn name(self) -> &'static str {
        match self {
            ViewKind::Local => "local",
            ViewKind::Global => "global",
        }
    }
}

/// Two-layer perceptron `relu(z·W1 + b1)·W2 + b2` from `(P−1)·d` to `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewParams {
    /// `F × d`, shared by the subgraph encoder and the target mapper.
    pub gcn: Array2<f64>,
    /// `d × d`.
    pub discriminator: Array2<f64>,
    /// Absent when `P < 2`.
    pub decoder: Option<Decoder>,
}

impl ViewParams {
    fn init(dims: &ModelDims, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let (f, d, p) = (dims.features, dims.hidden, dims.subgraph_size);
        let gcn = uniform_init(f, d, rng);
        let discriminator = uniform_init(d, d, rng);
        let decoder = (p >= 2).then(|| Decoder {
            w1: uniform_init((p - 1) * d, d, rng),
            b1: Array2::zeros((1, d)),
            w2: uniform_init(d, f, rng),
            b2: Array2::zeros((1, f)),
        });
        Self {
            gcn,
            discriminator,
            decoder,
        }
    }

    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        let mut out = vec![("gcn", &self.gcn), ("discriminator", &self.discriminator)];
        if let Some(dec) = &self.decoder {
            out.extend([("decoder.w1", &dec.w1), ("decoder.b1", &dec.b1), ("decoder.w2", &dec.w2), ("decoder.b2", &dec.b2)]);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.gcn, &mut self.discriminator];
        if let Some(dec) = &mut self.decoder {
            out.extend([&mut dec.w1, &mut dec.b1, &mut dec.w2, &mut dec.b2]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct ModelMeta {
    dims: ModelDims,
    shared_views: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    local: ViewParams,
    /// `None` when both views share the local parameters.
    global: Option<ViewParams>,
}

impl ModelParams {
    /// Uniform `±1/√fan_in` weights and zero biases drawn from the `Init` stream of `seed`.
    pub fn init(dims: ModelDims, shared_views: bool, seed: u64) -> Result<Self> {
        if dims.features == 0 || dims.hidden == 0 || dims.subgraph_size == 0 {
            return Err(Error::Config(format!("degenerate model dimensions {dims:?}")));
        }
        let mut rng = stream(seed, Phase::Init, 0, 0);
        let local = ViewParams::init(&dims, &mut rng);
        let global = (!shared_views).then(|| ViewParams::init(&dims, &mut rng));
        Ok(Self { dims, local, global })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn shares_views(&self) -> bool {
        self.global.is_none()
    }

    pub fn view(&self, kind: ViewKind) -> &ViewParams {
        match (kind, &self.global) {
            (ViewKind::Global, Some(g)) => g,
            _ => &self.local,
        }
    }

    pub fn view_mut(&mut self, kind: ViewKind) -> &mut ViewParams {
        match (kind, &mut self.global) {
            (ViewKind::Global, Some(g)) => g,
            _ => &mut self.local,
        }
    }

    /// Named tensors in a fixed order: local view first, then global unless shared.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<_> = self.local.tensors().into_iter().map(|(n, t)| (format!("local.{n}"), t)).collect();
        if let Some(g) = &self.global {
            out.extend(g.tensors().into_iter().map(|(n, t)| (format!("global.{n}"), t)));
        }
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = self.local.tensors_mut();
        if let Some(g) = &mut self.global {
            out.extend(g.tensors_mut());
        }
        out
    }

    /// Checkpoint whose metadata JSON is `{"model": ..., "run": extra}`.
    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let meta = ModelMeta {
            dims: self.dims,
            shared_views: self.shares_views(),
        };
        let metadata = serde_json::json!({ "model": meta, "run": extra }).to_string();
        let params = self.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        Checkpoint { metadata, params }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: "<checkpoint>".into(),
            message,
        };
        let json: serde_json::Value = serde_json::from_str(&ckpt.metadata).map_err(|e| bad(e.to_string()))?;
        let meta: ModelMeta =
            serde_json::from_value(json.get("model").cloned().unwrap_or_default()).map_err(|e| bad(format!("model metadata: {e}")))?;
        let mut params = Self::init(meta.dims, meta.shared_views, 0)?;
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != ckpt.params.len() {
            return Err(bad(format!("expected {} tensors, found {}", names.len(), ckpt.params.len())));
        }
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let value = ckpt.get(name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
            if value.dim() != slot.dim() {
                return Err(Error::Shape {
                    op: "checkpoint",
                    left: slot.dim(),
                    right: value.dim(),
                });
            }
            if value.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("tensor {name} holds a non-finite value")));
            }
            slot.assign(value);
        }
        Ok(params)
    }
}

fn check_dot(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left.1 == right.0 {
        Ok(())
    } else {
        Err(Error::Shape { op, left, right })
    }
}

/// `relu(Â · X · W)` for one subgraph.
pub fn encode_subgraph(adjacency: &Array2<f64>, attributes: &Array2<f64>, weight: &Array2<f64>) -> Result<Array2<f64>> {
    check_dot("encode_subgraph", adjacency.dim(), attributes.dim())?;
    check_dot("encode_subgraph", attributes.dim(), weight.dim())?;
    Ok(adjacency.dot(&attributes.dot(weight)).mapv(|v| v.max(0.0)))
}

/// `relu(x · W)` with the encoder weight of the same view.
pub fn map_target(x: ArrayView1<'_, f64>, weight: &Array2<f64>) -> Result<Array1<f64>> {
    check_dot("map_target", (1, x.len()), weight.dim())?;
    Ok(x.dot(weight).mapv(|v| v.max(0.0)))
}

/// Column mean of the subgraph embeddings, padding and masked rows included.
pub fn readout(h: &Array2<f64>) -> Result<Array1<f64>> {
    h.mean_axis(ndarray::Axis(0))
        .ok_or_else(|| Error::Dimension("readout of an empty subgraph".into()))
}

/// `σ(h · W_s · eᵀ)`.
pub fn discriminate(h: ArrayView1<'_, f64>, e: ArrayView1<'_, f64>, ws: &Array2<f64>) -> Result<f64> {
    check_dot("discriminate", (1, h.len()), ws.dim())?;
    check_dot("discriminate", ws.dim(), (e.len(), 1))?;
    Ok(crate::nn::tape::sigmoid(h.dot(ws).dot(&e)))
}

/// Decoder output from rows `1..P` of `h` concatenated in order. `None` when
/// the subgraph has no neighbor rows.
pub fn decode_attributes(h: &Array2<f64>, decoder: Option<&Decoder>) -> Result<Option<Array1<f64>>> {
    let (Some(dec), true) = (decoder, h.nrows() >= 2) else {
        return Ok(None);
    };
    let z: Array1<f64> = h.slice(ndarray::s![1.., ..]).iter().copied().collect();
    check_dot("decode_attributes", (1, z.len()), dec.w1.dim())?;
    let hidden = (z.dot(&dec.w1) + dec.b1.row(0)).mapv(|v| v.max(0.0));
    check_dot("decode_attributes", (1, hidden.len()), dec.w2.dim())?;
    Ok(Some(hidden.dot(&dec.w2) + dec.b2.row(0)))
}

fn same_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            left: (a.len(), 1),
            right: (b.len(), 1),
        })
    }
}

/// Mean over slots of `−½(ln s + ln(1 − s̃))` for one view.
pub fn intra_loss(pos: &[f64], neg: &[f64]) -> Result<f64> {
    same_len("intra_loss", pos, neg)?;
    if pos.is_empty() {
        return Err(Error::Dimension("intra_loss of an empty batch".into()));
    }
    let total: f64 = pos
        .iter()
        .zip(neg)
        .map(|(&s, &n)| -0.5 * (s.max(LOG_FLOOR).ln() + (1.0 - n).max(LOG_FLOOR).ln()))
        .sum();
    Ok(total / pos.len() as f64)
}

/// `Σ (s1 − s2)²`, divided by the batch size when `per_node_mean`.
pub fn inter_loss(s1: &[f64], s2: &[f64], per_node_mean: bool) -> Result<f64> {
    same_len("inter_loss", s1, s2)?;
    let total: f64 = s1.iter().zip(s2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(if per_node_mean && !s1.is_empty() {
        total / s1.len() as f64
    } else {
        total
    })
}

/// `1/(V·B) · Σ_views Σ_slots ‖x̂ − x‖²`; with both views this is the `1/2B` form.
pub fn recon_loss(reconstructions: &[&Array2<f64>], targets: &Array2<f64>) -> Result<f64> {
    if reconstructions.is_empty() || targets.nrows() == 0 {
        return Err(Error::Dimension("recon_loss needs at least one view and one slot".into()));
    }
    let mut total = 0.0;
    for r in reconstructions {
        if r.dim() != targets.dim() {
            return Err(Error::Shape {
                op: "recon_loss",
                left: r.dim(),
                right: targets.dim(),
            });
        }
        total += r.iter().zip(targets).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / (reconstructions.len() * targets.nrows()) as f64)
}

pub fn total_loss(con: f64, res: f64, gamma: f64) -> f64 {
    con + gamma * res
}

/// Which terms enter the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub gamma: f64,
    pub contrastive: bool,
    pub reconstruction: bool,
    pub global_view: bool,
    pub inter_per_node_mean: bool,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            gamma: 0.6,
            contrastive: true,
            reconstruction: true,
            global_view: true,
            inter_per_node_mean: false,
        }
    }
}

impl Objective {
    pub fn views(&self) -> Vec<ViewKind> {
        if self.global_view {
            vec![ViewKind::Local, ViewKind::Global]
        } else {
            vec![ViewKind::Local]
        }
    }
}

/// Sparse operands for one batch, built once and shared by both views.
#[derive(Debug, Clone)]
pub struct BatchInputs {
    batch_size: usize,
    subgraph_size: usize,
    features: usize,
    /// `(B·P) × F` masked subgraph attributes.
    x_pos: CsrMatrix,
    /// `B × F` unmasked target attributes.
    x_target: CsrMatrix,
    targets: Array2<f64>,
    /// Block-diagonal adjacency per view, indexed by `ViewKind as usize`.
    adj_pos: [CsrMatrix; 2],
    /// Present for freshly sampled negatives.
    negatives: Option<(CsrMatrix, [CsrMatrix; 2])>,
    /// `B × (B·P)` averaging matrix.
    readout: CsrMatrix,
    rotation: Vec<usize>,
    neighbor_rows: Vec<usize>,
}

fn stacked_attributes(views: &[SubgraphView], features: &CsrMatrix) -> Result<CsrMatrix> {
    let picks: Vec<Option<usize>> = views
        .iter()
        .flat_map(|v| (0..v.size()).map(move |i| (i >= 1 && i < v.real_len).then(|| v.node_ids[i])))
        .collect();
    features.select_rows(&picks)
}

fn block_diagonal(views: &[SubgraphView]) -> Result<CsrMatrix> {
    let p = views[0].size();
    let mut triplets = Vec::with_capacity(views.len() * p * p);
    for (b, v) in views.iter().enumerate() {
        for ((i, j), &w) in v.adjacency.indexed_iter() {
            if w != 0.0 {
                triplets.push((b * p + i, b * p + j, w));
            }
        }
    }
    CsrMatrix::from_triplets(views.len() * p, views.len() * p, &triplets)
}

impl BatchInputs {
    /// `features` is the full `N × F` attribute matrix in sparse form.
    pub fn new(batch: &ViewPairBatch, features: &CsrMatrix) -> Result<Self> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::Config("empty batch".into()));
        }
        let p = batch.local_pos[0].size();
        let all_views = [&batch.local_pos, &batch.global_pos, &batch.local_neg, &batch.global_neg];
        if all_views.iter().any(|vs| vs.len() != b || vs.iter().any(|v| v.size() != p)) {
            return Err(Error::Dimension(format!("batch views must hold {b} subgraphs of {p} nodes")));
        }
        if batch.target_attributes.dim() != (b, features.cols()) {
            return Err(Error::Shape {
                op: "batch_inputs",
                left: batch.target_attributes.dim(),
                right: (b, features.cols()),
            });
        }
        let negatives = match batch.negatives {
            NegativeMode::Rotate => None,
            NegativeMode::Fresh => Some((
                stacked_attributes(&batch.local_neg, features)?,
                [block_diagonal(&batch.local_neg)?, block_diagonal(&batch.global_neg)?],
            )),
        };
        let readout_triplets: Vec<_> = (0..b).flat_map(|s| (0..p).map(move |i| (s, s * p + i, 1.0 / p as f64))).collect();
        Ok(Self {
            batch_size: b,
            subgraph_size: p,
            features: features.cols(),
            x_pos: stacked_attributes(&batch.local_pos, features)?,
            x_target: features.select_rows(&batch.targets.iter().map(|&t| Some(t)).collect::<Vec<_>>())?,
            targets: batch.target_attributes.clone(),
            adj_pos: [block_diagonal(&batch.local_pos)?, block_diagonal(&batch.global_pos)?],
            negatives,
            readout: CsrMatrix::from_triplets(b, b * p, &readout_triplets)?,
            rotation: (0..b).map(|s| (s + 1) % b).collect(),
            neighbor_rows: (0..b).flat_map(|s| (1..p).map(move |i| s * p + i)).collect(),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}

#[derive(Debug, Clone, Copy)]
struct ViewVars {
    gcn: Var,
    discriminator: Var,
    decoder: Option<[Var; 4]>,
}

/// Tape handles produced for one view.
#[derive(Debug, Clone, Copy)]
pub struct ViewOutputs {
    pub kind: ViewKind,
    /// `B × 1` positive-pair scores.
    pub pos: Option<Var>,
    /// `B × 1` negative-pair scores.
    pub neg: Option<Var>,
    /// `B × F` decoder outputs.
    pub reconstruction: Option<Var>,
}

/// One evaluated batch.
pub struct ForwardPass {
    pub tape: Tape,
    pub loss: Var,
    pub intra: Option<Var>,
    pub inter: Option<Var>,
    pub con: Option<Var>,
    pub res: Option<Var>,
    pub views: Vec<ViewOutputs>,
    params: Vec<Var>,
    targets: Array2<f64>,
}

fn column(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).iter().copied().collect()
}

impl ForwardPass {
    pub fn loss_value(&self) -> f64 {
        self.tape.scalar(self.loss)
    }

    pub fn value(&self, v: Option<Var>) -> Option<f64> {
        v.map(|v| self.tape.scalar(v))
    }

    pub fn view(&self, kind: ViewKind) -> Option<&ViewOutputs> {
        self.views.iter().find(|v| v.kind == kind)
    }

    /// Positive and negative scores of one view.
    pub fn scores(&self, kind: ViewKind) -> Option<(Vec<f64>, Vec<f64>)> {
        let v = self.view(kind)?;
        Some((column(&self.tape, v.pos?), column(&self.tape, v.neg?)))
    }

    /// Per-slot `‖x̂ − x‖²` of one view.
    pub fn reconstruction_errors(&self, kind: ViewKind) -> Option<Vec<f64>> {
        let out = self.tape.value(self.view(kind)?.reconstruction?);
        Some(
            out.rows()
                .into_iter()
                .zip(self.targets.rows())
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
                .collect(),
        )
    }

    /// Gradients of `of` for every parameter in [`ModelParams::tensors`] order;
    /// unused parameters get zeros.
    pub fn param_gradients(&self, grads: &Gradients) -> Vec<Array2<f64>> {
        self.params
            .iter()
            .map(|&p| grads.get(p).cloned().unwrap_or_else(|| Array2::zeros(self.tape.value(p).dim())))
            .collect()
    }
}

fn score(tape: &mut Tape, hw: Var, e: Var) -> Result<Var> {
    let prod = tape.mul(hw, e)?;
    let logits = tape.row_sum(prod)?;
    tape.sigmoid(logits)
}

fn subgraph_embeddings(tape: &mut Tape, x: &CsrMatrix, adj: &CsrMatrix, gcn: Var) -> Result<Var> {
    let m = tape.spmm(x.clone(), gcn)?;
    let h = tape.spmm(adj.clone(), m)?;
    tape.relu(h)
}

fn view_forward(tape: &mut Tape, vars: &ViewVars, inputs: &BatchInputs, kind: ViewKind, objective: &Objective) -> Result<ViewOutputs> {
    let idx = kind as usize;
    let h_sub = subgraph_embeddings(tape, &inputs.x_pos, &inputs.adj_pos[idx], vars.gcn)?;
    let (mut pos, mut neg, mut reconstruction) = (None, None, None);

    if objective.contrastive {
        let e = tape.spmm(inputs.readout.clone(), h_sub)?;
        let h = tape.spmm(inputs.x_target.clone(), vars.gcn)?;
        let h = tape.relu(h)?;
        let hw = tape.matmul(h, vars.discriminator)?;
        let e_neg = match &inputs.negatives {
            None => tape.gather_rows(e, inputs.rotation.clone())?,
            Some((x_neg, adj_neg)) => {
                let h_neg = subgraph_embeddings(tape, x_neg, &adj_neg[idx], vars.gcn)?;
                tape.spmm(inputs.readout.clone(), h_neg)?
            }
        };
        pos = Some(score(tape, hw, e)?);
        neg = Some(score(tape, hw, e_neg)?);
    }

    if objective.reconstruction {
        let [w1, b1, w2, b2] = vars
            .decoder
            .ok_or_else(|| Error::Config("reconstruction needs subgraphs of at least 2 nodes".into()))?;
        let width = tape.value(vars.gcn).ncols() * (inputs.subgraph_size - 1);
        let z = tape.gather_rows(h_sub, inputs.neighbor_rows.clone())?;
        let z = tape.reshape(z, inputs.batch_size, width)?;
        let hidden = tape.matmul(z, w1)?;
        let hidden = tape.add_row(hidden, b1)?;
        let hidden = tape.relu(hidden)?;
        let out = tape.matmul(hidden, w2)?;
        reconstruction = Some(tape.add_row(out, b2)?);
    }

    Ok(ViewOutputs {
        kind,
        pos,
        neg,
        reconstruction,
    })
}

fn sum_scaled(tape: &mut Tape, terms: &[Var], scale: f64) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    tape.affine(acc, scale, 0.0)
}

/// Evaluates `objective` on one batch. With `trainable`, parameters are tape
/// leaves with gradients; otherwise they enter as constants.
pub fn forward(params: &ModelParams, inputs: &BatchInputs, objective: &Objective, trainable: bool) -> Result<ForwardPass> {
    let dims = params.dims();
    if dims.features != inputs.features || dims.subgraph_size != inputs.subgraph_size {
        return Err(Error::Dimension(format!(
            "model expects F={} P={}, batch has F={} P={}",
            dims.features, dims.subgraph_size, inputs.features, inputs.subgraph_size
        )));
    }
    if !objective.contrastive && !objective.reconstruction {
        return Err(Error::Config("objective has no active term".into()));
    }
    if !(objective.gamma >= 0.0 && objective.gamma.is_finite()) {
        return Err(Error::Config(format!("gamma {} must be finite and non-negative", objective.gamma)));
    }

    let mut tape = Tape::new();
    let mut param_vars = Vec::new();
    let mut leaf = |tape: &mut Tape, t: &Array2<f64>| -> Result<Var> {
        let v = if trainable { tape.param(t.clone())? } else { tape.constant(t.clone())? };
        param_vars.push(v);
        Ok(v)
    };
    let mut view_vars = Vec::new();
    for kind in [ViewKind::Local, ViewKind::Global] {
        if kind == ViewKind::Global && params.shares_views() {
            let local = view_vars[0];
            view_vars.push(local);
            continue;
        }
        let p = params.view(kind);
        let gcn = leaf(&mut tape, &p.gcn)?;
        let discriminator = leaf(&mut tape, &p.discriminator)?;
        let decoder = match &p.decoder {
            Some(d) => Some([leaf(&mut tape, &d.w1)?, leaf(&mut tape, &d.b1)?, leaf(&mut tape, &d.w2)?, leaf(&mut tape, &d.b2)?]),
            None => None,
        };
        view_vars.push(ViewVars {
            gcn,
            discriminator,
            decoder,
        });
    }

    let kinds = objective.views();
    let mut views = Vec::with_capacity(kinds.len());
    for &kind in &kinds {
        views.push(view_forward(&mut tape, &view_vars[kind as usize], inputs, kind, objective)?);
    }

    let b = inputs.batch_size as f64;
    let (mut intra, mut inter, mut con, mut res) = (None, None, None, None);
    if objective.contrastive {
        let mut per_view = Vec::new();
        for v in &views {
            let (pos, neg) = (v.pos.expect("contrastive pass"), v.neg.expect("contrastive pass"));
            let ln_pos = tape.ln(pos, LOG_FLOOR)?;
            let one_minus = tape.affine(neg, -1.0, 1.0)?;
            let ln_neg = tape.ln(one_minus, LOG_FLOOR)?;
            let both = tape.add(ln_pos, ln_neg)?;
            let total = tape.sum(both)?;
            per_view.push(tape.affine(total, -0.5 / b, 0.0)?);
        }
        let intra_v = sum_scaled(&mut tape, &per_view, 1.0 / per_view.len() as f64)?;
        intra = Some(intra_v);
        let mut con_v = intra_v;
        if let [a, g] = views.as_slice() {
            let diff = tape.sub(a.pos.expect("contrastive pass"), g.pos.expect("contrastive pass"))?;
            let sq = tape.mul(diff, diff)?;
            let total = tape.sum(sq)?;
            let inter_v = tape.affine(total, if objective.inter_per_node_mean { 1.0 / b } else { 1.0 }, 0.0)?;
            inter = Some(inter_v);
            con_v = tape.add(intra_v, inter_v)?;
        }
        con = Some(con_v);
    }
    if objective.reconstruction {
        let target = tape.constant(inputs.targets.clone())?;
        let mut per_view = Vec::new();
        for v in &views {
            per_view.push(tape.squared_error(v.reconstruction.expect("reconstruction pass"), target)?);
        }
        res = Some(sum_scaled(&mut tape, &per_view, 1.0 / (per_view.len() as f64 * b))?);
    }
    let loss = match (con, res) {
        (Some(c), Some(r)) => {
            let weighted = tape.affine(r, objective.gamma, 0.0)?;
            tape.add(c, weighted)?
        }
        (Some(c), None) => c,
        (None, Some(r)) => r,
        (None, None) => unreachable!("validated above"),
    };

    Ok(ForwardPass {
        tape,
        loss,
        intra,
        inter,
        con,
        res,
        views,
        params: param_vars,
        targets: inputs.targets.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::compute_ppr;
    use crate::graph::AttributedGraph;
    use crate::rng::StreamKey;
    use crate::sampler::{make_batch, SamplerConfig};
    use ndarray::array;

    #[test]
    fn single_node_encoding_is_relu_of_projection() {
        let w = array![[1.0, 0.0, -1.0], [0.0, 1.0, 2.0]];
        let h = encode_subgraph(&array![[1.0]], &array![[1.0, 0.0]], &w).unwrap();
        assert_eq!(h, array![[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn two_node_block_encoding() {
        let h = encode_subgraph(&Array2::from_elem((2, 2), 0.5), &array![[0.0, 0.0], [2.0, 4.0]], &Array2::eye(2)).unwrap();
        assert_eq!(h, array![[1.0, 2.0], [1.0, 2.0]]);
    }

    #[test]
    fn masked_row_contributes_nothing() {
        let adj = array![[1.0, 0.0], [0.0, 1.0]];
        let h = encode_subgraph(&adj, &array![[0.0, 0.0], [2.0, 4.0]], &Array2::eye(2)).unwrap();
        assert_eq!(h.row(0).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn encode_rejects_mismatched_shapes() {
        assert!(matches!(
            encode_subgraph(&Array2::eye(2), &Array2::zeros((3, 2)), &Array2::eye(2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn target_mapping() {
        let w = Array2::eye(2);
        assert_eq!(map_target(array![0.0, 0.0].view(), &w).unwrap().to_vec(), vec![0.0, 0.0]);
        assert_eq!(map_target(array![-1.0, 2.0].view(), &w).unwrap().to_vec(), vec![0.0, 2.0]);
        let w2 = array![[2.0, 0.0], [0.0, 3.0]];
        let x = array![1.0, 1.0];
        let sub = encode_subgraph(&array![[1.0]], &array![[1.0, 1.0]], &w2).unwrap();
        assert_eq!(map_target(x.view(), &w2).unwrap(), sub.row(0));
    }

    #[test]
    fn readout_is_column_mean() {
        assert_eq!(readout(&array![[1.0, 2.0], [3.0, 4.0]]).unwrap().to_vec(), vec![2.0, 3.0]);
        assert_eq!(readout(&array![[5.0, -1.0]]).unwrap().to_vec(), vec![5.0, -1.0]);
        assert_eq!(readout(&Array2::zeros((3, 2))).unwrap().to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn discriminator_closed_forms() {
        let eye = Array2::eye(2);
        let unit = array![1.0, 0.0];
        assert!((discriminate(unit.view(), unit.view(), &eye).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert_eq!(discriminate(array![0.0, 0.0].view(), unit.view(), &eye).unwrap(), 0.5);
        let h = array![0.6, -0.8];
        let flipped = discriminate((-&h).view(), h.view(), &eye).unwrap();
        assert!((flipped - (1.0 - discriminate(h.view(), h.view(), &eye).unwrap())).abs() < 1e-15);
    }

    fn decoder(p: usize, d: usize, f: usize, fill: f64) -> Decoder {
        Decoder {
            w1: Array2::from_elem(((p - 1) * d, d), fill),
            b1: Array2::zeros((1, d)),
            w2: Array2::from_elem((d, f), fill),
            b2: Array2::zeros((1, f)),
        }
    }

    #[test]
    fn decoder_contracts() {
        let h = array![[9.0, 9.0], [1.0, 2.0], [3.0, 4.0]];
        assert_eq!(decode_attributes(&h, Some(&decoder(3, 2, 5, 0.0))).unwrap().unwrap().to_vec(), vec![0.0; 5]);
        assert_eq!(decode_attributes(&h, Some(&decoder(3, 2, 7, 0.1))).unwrap().unwrap().len(), 7);
        assert_eq!(decode_attributes(&array![[1.0, 2.0]], Some(&decoder(2, 2, 3, 1.0))).unwrap(), None);

        // one neighbor, identity first layer: output is the neighbor row times W2
        let mut dec = decoder(2, 2, 3, 0.0);
        dec.w1 = Array2::eye(2);
        dec.w2 = array![[1.0, 0.0, 2.0], [0.0, 1.0, 3.0]];
        let out = decode_attributes(&array![[7.0, 7.0], [1.0, 2.0]], Some(&dec)).unwrap().unwrap();
        assert_eq!(out.to_vec(), vec![1.0, 2.0, 8.0]);
    }

    #[test]
    fn decoder_ignores_target_row() {
        let mut dec = decoder(3, 2, 4, 0.3);
        dec.b2.fill(0.1);
        let a = decode_attributes(&array![[0.0, 0.0], [1.0, 2.0], [3.0, 4.0]], Some(&dec)).unwrap();
        let b = decode_attributes(&array![[5.0, -5.0], [1.0, 2.0], [3.0, 4.0]], Some(&dec)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn intra_loss_values() {
        assert_eq!(intra_loss(&[1.0], &[0.0]).unwrap(), 0.0);
        assert!((intra_loss(&[0.5], &[0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(intra_loss(&[0.5; 7], &[0.5; 7]).unwrap(), intra_loss(&[0.5], &[0.5]).unwrap());
        let clamped = intra_loss(&[0.0], &[1.0]).unwrap();
        assert!((clamped - (-LOG_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn intra_loss_is_monotone() {
        let base = intra_loss(&[0.6, 0.7], &[0.3, 0.2]).unwrap();
        assert!(intra_loss(&[0.8, 0.7], &[0.3, 0.2]).unwrap() < base);
        assert!(intra_loss(&[0.6, 0.7], &[0.1, 0.2]).unwrap() < base);
    }

    #[test]
    fn inter_loss_values() {
        assert_eq!(inter_loss(&[0.3, 0.9], &[0.3, 0.9], false).unwrap(), 0.0);
        assert_eq!(inter_loss(&[1.0, 0.0], &[0.0, 1.0], false).unwrap(), 2.0);
        assert_eq!(inter_loss(&[1.0, 0.0], &[0.0, 1.0], true).unwrap(), 1.0);
        let (a, b) = ([0.1, 0.4, 0.8], [0.7, 0.2, 0.5]);
        assert_eq!(inter_loss(&a, &b, false).unwrap(), inter_loss(&b, &a, false).unwrap());
        assert!(inter_loss(&a, &b[..2], false).is_err());
    }

    #[test]
    fn recon_loss_values() {
        let x = array![[1.0, 2.0]];
        assert_eq!(recon_loss(&[&x, &x], &x).unwrap(), 0.0);
        assert_eq!(recon_loss(&[&array![[1.0]], &array![[-1.0]]], &array![[0.0]]).unwrap(), 1.0);
        let (r, t) = (array![[1.0, -2.0], [0.5, 3.0]], array![[0.0, 1.0], [2.0, 2.0]]);
        let base = recon_loss(&[&r, &r], &t).unwrap();
        let doubled = recon_loss(&[&(&r * 2.0), &(&r * 2.0)], &(&t * 2.0)).unwrap();
        assert!((doubled - 4.0 * base).abs() < 1e-12);
    }

    #[test]
    fn total_loss_values() {
        assert_eq!(total_loss(0.5, 0.25, 0.0), 0.5);
        assert_eq!(total_loss(0.5, 0.25, 1.0), 0.75);
        assert!((total_loss(0.5, 0.25, 0.6) - 0.65).abs() < 1e-15);
    }

    fn fixture(seed: u64, negatives: NegativeMode) -> (AttributedGraph, ViewPairBatch, ModelParams, CsrMatrix) {
        let g = crate::synth::citation_like(&crate::synth::SynthConfig::small(), seed).unwrap();
        let s = compute_ppr(&g, 0.15).unwrap();
        let cfg = SamplerConfig {
            negatives,
            ..SamplerConfig::default()
        };
        let batch = make_batch(&g, &s, &[0, 17, 33, 61, 90], &cfg, StreamKey::new(seed, Phase::Train, 0)).unwrap();
        let dims = ModelDims {
            features: g.num_features(),
            hidden: 6,
            subgraph_size: 4,
        };
        let params = ModelParams::init(dims, false, seed).unwrap();
        let features = CsrMatrix::from_dense(g.attributes().view());
        (g, batch, params, features)
    }

    /// Per-slot evaluation through the free functions.
    fn reference(g: &AttributedGraph, batch: &ViewPairBatch, params: &ModelParams, kind: ViewKind) -> (Vec<f64>, Vec<f64>, Array2<f64>) {
        let p = params.view(kind);
        let (pos_views, neg_views) = match kind {
            ViewKind::Local => (&batch.local_pos, &batch.local_neg),
            ViewKind::Global => (&batch.global_pos, &batch.global_neg),
        };
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut recon = Array2::zeros(batch.target_attributes.dim());
        for b in 0..batch.len() {
            let h = map_target(batch.target_attributes.row(b), &p.gcn).unwrap();
            let hp = encode_subgraph(&pos_views[b].adjacency, &pos_views[b].attributes(g), &p.gcn).unwrap();
            let hn = encode_subgraph(&neg_views[b].adjacency, &neg_views[b].attributes(g), &p.gcn).unwrap();
            pos.push(discriminate(h.view(), readout(&hp).unwrap().view(), &p.discriminator).unwrap());
            neg.push(discriminate(h.view(), readout(&hn).unwrap().view(), &p.discriminator).unwrap());
            recon.row_mut(b).assign(&decode_attributes(&hp, p.decoder.as_ref()).unwrap().unwrap());
        }
        (pos, neg, recon)
    }

    #[test]
    fn batched_pass_matches_per_slot_functions() {
        for negatives in [NegativeMode::Rotate, NegativeMode::Fresh] {
            let (g, batch, params, features) = fixture(3, negatives);
            let inputs = BatchInputs::new(&batch, &features).unwrap();
            let objective = Objective::default();
            let pass = forward(&params, &inputs, &objective, false).unwrap();
            let mut recons = Vec::new();
            let mut intra = 0.0;
            let mut pos_scores = Vec::new();
            for kind in [ViewKind::Local, ViewKind::Global] {
                let (pos, neg, recon) = reference(&g, &batch, &params, kind);
                let (bp, bn) = pass.scores(kind).unwrap();
                for (a, b) in pos.iter().chain(&neg).zip(bp.iter().chain(&bn)) {
                    assert!((a - b).abs() < 1e-12);
                }
                intra += 0.5 * intra_loss(&pos, &neg).unwrap();
                pos_scores.push(pos);
                recons.push(recon);
            }
            let res = recon_loss(&[&recons[0], &recons[1]], &batch.target_attributes).unwrap();
            let con = intra + inter_loss(&pos_scores[0], &pos_scores[1], false).unwrap();
            assert!((pass.value(pass.res).unwrap() - res).abs() < 1e-10);
            assert!((pass.value(pass.con).unwrap() - con).abs() < 1e-12);
            assert!((pass.loss_value() - total_loss(con, res, 0.6)).abs() < 1e-10);
        }
    }

    #[test]
    fn swapping_pos_and_neg_swaps_scores() {
        let (_, batch, params, features) = fixture(5, NegativeMode::Fresh);
        let mut swapped = batch.clone();
        std::mem::swap(&mut swapped.local_pos, &mut swapped.local_neg);
        std::mem::swap(&mut swapped.global_pos, &mut swapped.global_neg);
        let objective = Objective {
            reconstruction: false,
            ..Objective::default()
        };
        let a = forward(&params, &BatchInputs::new(&batch, &features).unwrap(), &objective, false).unwrap();
        let b = forward(&params, &BatchInputs::new(&swapped, &features).unwrap(), &objective, false).unwrap();
        for kind in [ViewKind::Local, ViewKind::Global] {
            let (ap, an) = a.scores(kind).unwrap();
            let (bp, bn) = b.scores(kind).unwrap();
            assert_eq!(ap, bn);
            assert_eq!(an, bp);
        }
    }

    #[test]
    fn single_view_objective_has_no_inter_term() {
        let (_, batch, params, features) = fixture(6, NegativeMode::Rotate);
        let objective = Objective {
            global_view: false,
            ..Objective::default()
        };
        let pass = forward(&params, &BatchInputs::new(&batch, &features).unwrap(), &objective, false).unwrap();
        assert!(pass.inter.is_none());
        assert!(pass.view(ViewKind::Global).is_none());
        assert_eq!(pass.value(pass.con), pass.value(pass.intra));
    }

    #[test]
    fn checkpoint_round_trip_preserves_parameters() {
        let (_, _, params, _) = fixture(8, NegativeMode::Rotate);
        let ckpt = params.to_checkpoint(serde_json::json!({"seed": 8}));
        assert_eq!(ModelParams::from_checkpoint(&ckpt).unwrap(), params);
        let shared = ModelParams::init(params.dims(), true, 1).unwrap();
        assert_eq!(ModelParams::from_checkpoint(&shared.to_checkpoint(serde_json::Value::Null)).unwrap(), shared);
    }

    #[test]
    fn shared_views_accumulate_into_one_parameter_set() {
        let (_, batch, _, features) = fixture(9, NegativeMode::Rotate);
        let dims = ModelDims {
            features: features.cols(),
            hidden: 4,
            subgraph_size: 4,
        };
        let params = ModelParams::init(dims, true, 2).unwrap();
        let pass = forward(&params, &BatchInputs::new(&batch, &features).unwrap(), &Objective::default(), true).unwrap();
        let grads = pass.tape.backward(pass.loss).unwrap();
        assert_eq!(pass.param_gradients(&grads).len(), params.tensors().len());
        assert_eq!(params.tensors().len(), 6);
    }

    #[test]
    fn single_node_subgraphs_disable_reconstruction() {
        let g = crate::synth::citation_like(&crate::synth::SynthConfig::small(), 4).unwrap();
        let s = compute_ppr(&g, 0.15).unwrap();
        let cfg = SamplerConfig {
            subgraph_size: 1,
            ..SamplerConfig::default()
        };
        let batch = make_batch(&g, &s, &[1, 2, 3], &cfg, StreamKey::new(0, Phase::Train, 0)).unwrap();
        let features = CsrMatrix::from_dense(g.attributes().view());
        let dims = ModelDims {
            features: g.num_features(),
            hidden: 4,
            subgraph_size: 1,
        };
        let params = ModelParams::init(dims, false, 0).unwrap();
        assert!(params.view(ViewKind::Local).decoder.is_none());
        let inputs = BatchInputs::new(&batch, &features).unwrap();
        assert!(matches!(forward(&params, &inputs, &Objective::default(), false), Err(Error::Config(_))));
        let contrastive_only = Objective {
            reconstruction: false,
            ..Objective::default()
        };
        assert!(forward(&params, &inputs, &contrastive_only, false).is_ok());
    }
}
