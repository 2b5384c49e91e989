//! Paired local/global subgraph sampling by random walk with restart.

use std::collections::HashSet;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionMatrix;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::rng::StreamKey;

pub const DEFAULT_RESTART_PROB: f64 = 0.1;

/// How each slot's negative subgraph is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    /// `neg[b] = pos[(b + 1) mod B]`.
    #[default]
    Rotate,
    /// Subgraph of a uniformly drawn node other than the target.
    Fresh,
}

/// One sampled subgraph.
///
/// Positions `real_len..P` are padding: they repeat the target id, carry zero
/// attributes and connect only to themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphView {
    pub node_ids: Vec<usize>,
    pub adjacency: Array2<f64>,
    pub real_len: usize,
}

impl SubgraphView {
    pub fn target(&self) -> usize {
        self.node_ids[0]
    }

    pub fn size(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_padding(&self, pos: usize) -> bool {
        pos >= self.real_len
    }

    /// Rows of the graph attributes for `node_ids`, with the target row and
    /// padding rows zeroed.
    pub fn attributes(&self, g: &AttributedGraph) -> Array2<f64> {
        let mut out = Array2::zeros((self.size(), g.num_features()));
        for pos in 1..self.real_len {
            out.row_mut(pos).assign(&g.attributes().row(self.node_ids[pos]));
        }
        out
    }
}

/// Walks from `target` on the binary graph, restarting with probability
/// `restart_prob`, until `p` distinct nodes are collected or
/// `10·p·max(1, average degree)` steps are spent. Returns the visited nodes in
/// first-visit order (target first) padded with the target id to length `p`.
pub fn rwr_sample<R: Rng>(g: &AttributedGraph, target: usize, p: usize, restart_prob: f64, rng: &mut R) -> Vec<usize> {
    let mut nodes = Vec::with_capacity(p);
    nodes.push(target);
    if p > 1 && g.degree(target) > 0 {
        let budget = (10.0 * p as f64 * g.adjacency().average_degree().max(1.0)).ceil() as usize;
        let mut current = target;
        for _ in 0..budget {
            if rng.random::<f64>() < restart_prob {
                current = target;
                continue;
            }
            let nbrs = g.neighbors(current);
            current = nbrs[rng.random_range(0..nbrs.len() as u32) as usize] as usize;
            if !nodes.contains(&current) {
                nodes.push(current);
                if nodes.len() == p {
                    break;
                }
            }
        }
    }
    nodes.resize(p.max(1), target);
    nodes
}

fn real_prefix(node_ids: &[usize]) -> usize {
    let target = node_ids[0];
    1 + node_ids[1..].iter().take_while(|&&v| v != target).count()
}

/// Local view: induced binary adjacency over the real nodes plus self-loops,
/// normalized as `D̂^{-1/2}(A+I)D̂^{-1/2}`. Global view: the induced diffusion
/// block, diagonal included, symmetrized as `(S_ij + S_ji)/2`. Padding
/// positions keep only their self-loop (`1` locally, `S_tt` globally).
pub fn build_view_pair(g: &AttributedGraph, s: &DiffusionMatrix, node_ids: &[usize]) -> Result<(SubgraphView, SubgraphView)> {
    let p = node_ids.len();
    if p == 0 {
        return Err(Error::Usage("empty subgraph".into()));
    }
    if let Some(&v) = node_ids.iter().find(|&&v| v >= g.num_nodes()) {
        return Err(Error::Usage(format!("subgraph node {v} out of range")));
    }
    if s.num_nodes() != g.num_nodes() {
        return Err(Error::Dimension(format!(
            "diffusion matrix covers {} nodes, graph has {}",
            s.num_nodes(),
            g.num_nodes()
        )));
    }
    let real_len = real_prefix(node_ids);
    let real = &node_ids[..real_len];
    if real.iter().collect::<HashSet<_>>().len() != real_len {
        return Err(Error::Usage("subgraph repeats a node before padding".into()));
    }

    let mut local = Array2::zeros((p, p));
    let mut global = Array2::zeros((p, p));
    let degree: Vec<f64> = real
        .iter()
        .map(|&u| 1.0 + real.iter().filter(|&&v| g.adjacency().has_edge(u, v)).count() as f64)
        .collect();
    for i in 0..real_len {
        for j in 0..real_len {
            if i == j || g.adjacency().has_edge(real[i], real[j]) {
                local[[i, j]] = 1.0 / (degree[i] * degree[j]).sqrt();
            }
            // truncated rows are not mutually symmetric
            global[[i, j]] = 0.5 * (s.get(real[i], real[j]) + s.get(real[j], real[i]));
        }
    }
    let self_weight = s.get(node_ids[0], node_ids[0]);
    for i in real_len..p {
        local[[i, i]] = 1.0;
        global[[i, i]] = self_weight;
    }
    let view = |adjacency| SubgraphView {
        node_ids: node_ids.to_vec(),
        adjacency,
        real_len,
    };
    Ok((view(local), view(global)))
}

/// Sampling parameters shared by training and inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub subgraph_size: usize,
    pub restart_prob: f64,
    pub negatives: NegativeMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            subgraph_size: 4,
            restart_prob: DEFAULT_RESTART_PROB,
            negatives: NegativeMode::Rotate,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subgraph_size == 0 {
            return Err(Error::Config("subgraph size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.restart_prob) {
            return Err(Error::Config(format!("restart_prob {} outside [0, 1]", self.restart_prob)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewPairBatch {
    pub targets: Vec<usize>,
    pub local_pos: Vec<SubgraphView>,
    pub global_pos: Vec<SubgraphView>,
    pub local_neg: Vec<SubgraphView>,
    pub global_neg: Vec<SubgraphView>,
    /// Unmasked attribute rows of the targets, `B × F`.
    pub target_attributes: Array2<f64>,
    pub negatives: NegativeMode,
    pub key: StreamKey,
}

impl ViewPairBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Samples one subgraph pair per target. Target `t` draws from lane `t` of
/// `key`, so a slot's sample does not depend on the rest of the batch.
pub fn make_batch(g: &AttributedGraph, s: &DiffusionMatrix, targets: &[usize], cfg: &SamplerConfig, key: StreamKey) -> Result<ViewPairBatch> {
    cfg.validate()?;
    if targets.len() < 2 {
        return Err(Error::Config(format!(
            "batch of {} target(s): at least 2 are needed to form negatives",
            targets.len()
        )));
    }
    if targets.iter().collect::<HashSet<_>>().len() != targets.len() {
        return Err(Error::Config("batch targets must be distinct".into()));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= g.num_nodes()) {
        return Err(Error::Usage(format!("target {t} out of range")));
    }

    let b = targets.len();
    let p = cfg.subgraph_size;
    let mut local_pos = Vec::with_capacity(b);
    let mut global_pos = Vec::with_capacity(b);
    let mut fresh = Vec::new();
    let mut target_attributes = Array2::zeros((b, g.num_features()));
    for (slot, &t) in targets.iter().enumerate() {
        let mut rng = key.lane(t as u32);
        let ids = rwr_sample(g, t, p, cfg.restart_prob, &mut rng);
        let (l, gl) = build_view_pair(g, s, &ids)?;
        local_pos.push(l);
        global_pos.push(gl);
        target_attributes.row_mut(slot).assign(&g.attributes().row(t));
        if cfg.negatives == NegativeMode::Fresh {
            let other = rng.random_range(0..g.num_nodes() as u32 - 1) as usize;
            let other = if other >= t { other + 1 } else { other };
            let ids = rwr_sample(g, other, p, cfg.restart_prob, &mut rng);
            fresh.push(build_view_pair(g, s, &ids)?);
        }
    }
    let (local_neg, global_neg) = match cfg.negatives {
        NegativeMode::Rotate => (
            (0..b).map(|i| local_pos[(i + 1) % b].clone()).collect(),
            (0..b).map(|i| global_pos[(i + 1) % b].clone()).collect(),
        ),
        NegativeMode::Fresh => fresh.into_iter().unzip(),
    };
    Ok(ViewPairBatch {
        targets: targets.to_vec(),
        local_pos,
        global_pos,
        local_neg,
        global_neg,
        target_attributes,
        negatives: cfg.negatives,
        key,
    })
}
