//! Synthetic anomaly injection: dense cliques (structural) and far-away
//! attribute copies (contextual).

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{export_graph, AttributedGraph, DatasetFiles};
use crate::rng::{self, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPlan {
    /// Nodes per injected clique.
    pub clique_size: usize,
    pub num_cliques: usize,
    pub num_attribute_anomalies: usize,
    /// Candidates drawn per attribute anomaly; the farthest one is copied.
    pub candidate_pool: usize,
    pub seed: u64,
}

impl InjectionPlan {
    pub const DEFAULT_CLIQUE_SIZE: usize = 15;
    pub const DEFAULT_CANDIDATE_POOL: usize = 50;

    /// Splits `total` evenly between cliques of 15 and attribute anomalies.
    pub fn even_split(total: usize, seed: u64) -> Result<Self> {
        let m = Self::DEFAULT_CLIQUE_SIZE;
        if total % (2 * m) != 0 {
            return Err(Error::Config(format!(
                "{total} anomalies cannot be split evenly into cliques of {m}"
            )));
        }
        Ok(Self {
            clique_size: m,
            num_cliques: total / (2 * m),
            num_attribute_anomalies: total / 2,
            candidate_pool: Self::DEFAULT_CANDIDATE_POOL,
            seed,
        })
    }

    /// Anomaly totals of the standard benchmark datasets.
    pub fn for_dataset(name: &str, seed: u64) -> Option<Self> {
        let total = match name.to_ascii_lowercase().as_str() {
            "cora" | "citeseer" => 150,
            "blogcatalog" => 300,
            "flickr" => 450,
            "pubmed" => 600,
            _ => return None,
        };
        Self::even_split(total, seed).ok()
    }

    pub fn total(&self) -> usize {
        self.clique_size * self.num_cliques + self.num_attribute_anomalies
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSwap {
    pub node: usize,
    /// Node whose original attributes were copied into `node`.
    pub source: usize,
    pub candidates: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Injection {
    pub graph: AttributedGraph,
    pub cliques: Vec<Vec<usize>>,
    pub swaps: Vec<AttributeSwap>,
}

fn current_labels(g: &AttributedGraph) -> Vec<u8> {
    g.labels().map(<[u8]>::to_vec).unwrap_or_else(|| vec![0; g.num_nodes()])
}

fn unlabeled(labels: &[u8]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 0)
        .map(|(i, _)| i)
        .collect()
}

/// Turns `num_cliques` disjoint random groups of `clique_size` unlabeled nodes
/// into cliques. Existing edges are kept.
pub fn inject_structural<R: Rng>(
    g: &AttributedGraph,
    clique_size: usize,
    num_cliques: usize,
    rng: &mut R,
) -> Result<(AttributedGraph, Vec<Vec<usize>>)> {
    let mut labels = current_labels(g);
    let pool = unlabeled(&labels);
    let needed = clique_size * num_cliques;
    if needed > pool.len() {
        return Err(Error::Capacity(format!(
            "{num_cliques} cliques of {clique_size} need {needed} unlabeled nodes, only {} available",
            pool.len()
        )));
    }
    if needed == 0 {
        return Ok((g.clone(), Vec::new()));
    }
    let chosen: Vec<usize> = index::sample(rng, pool.len(), needed)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let cliques: Vec<Vec<usize>> = chosen.chunks(clique_size).map(<[usize]>::to_vec).collect();

    let mut edges: Vec<(usize, usize)> = g.adjacency().edges().collect();
    for clique in &cliques {
        for (i, &a) in clique.iter().enumerate() {
            labels[a] = 1;
            for &b in &clique[i + 1..] {
                edges.push((a, b));
            }
        }
    }
    let graph = AttributedGraph::from_edges(&edges, g.attributes().clone(), Some(labels))?;
    Ok((graph, cliques))
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For `count` random unlabeled nodes, draws `k` other nodes and copies the
/// original attributes of whichever is farthest (Euclidean) from the target.
pub fn inject_attribute<R: Rng>(
    g: &AttributedGraph,
    count: usize,
    k: usize,
    rng: &mut R,
) -> Result<(AttributedGraph, Vec<AttributeSwap>)> {
    if k == 0 {
        return Err(Error::Config("candidate pool size must be at least 1".into()));
    }
    let mut labels = current_labels(g);
    let pool = unlabeled(&labels);
    if count > pool.len() {
        return Err(Error::Capacity(format!(
            "{count} attribute anomalies requested, only {} unlabeled nodes",
            pool.len()
        )));
    }
    if count == 0 {
        return Ok((g.clone(), Vec::new()));
    }
    let n = g.num_nodes();
    if n < 2 {
        return Err(Error::Capacity("attribute injection needs at least two nodes".into()));
    }
    let original = g.attributes();
    let mut attributes: Array2<f64> = original.clone();
    let targets: Vec<usize> = index::sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let mut swaps = Vec::with_capacity(count);
    for node in targets {
        let draw = k.min(n - 1);
        // Sample from the other n-1 nodes by skipping over `node`.
        let candidates: Vec<usize> = index::sample(rng, n - 1, draw)
            .into_iter()
            .map(|c| if c >= node { c + 1 } else { c })
            .collect();
        let mut source = candidates[0];
        let mut best = f64::NEG_INFINITY;
        for &c in &candidates {
            let d = squared_distance(original.row(node), original.row(c));
            if d > best {
                best = d;
                source = c;
            }
        }
        attributes.row_mut(node).assign(&original.row(source));
        labels[node] = 1;
        swaps.push(AttributeSwap {
            node,
            source,
            candidates,
        });
    }
    let graph = AttributedGraph::new(g.adjacency().clone(), attributes, Some(labels))?;
    Ok((graph, swaps))
}

/// Structural injection followed by attribute injection on the remaining nodes.
pub fn inject(g: &AttributedGraph, plan: &InjectionPlan) -> Result<Injection> {
    if g.labels().is_some_and(|l| l.contains(&1)) {
        return Err(Error::Usage("graph already carries anomaly labels".into()));
    }
    let mut rng = rng::stream(plan.seed, Phase::Inject, 0, 0);
    let (graph, cliques) = inject_structural(g, plan.clique_size, plan.num_cliques, &mut rng)?;
    let (graph, swaps) = inject_attribute(&graph, plan.num_attribute_anomalies, plan.candidate_pool, &mut rng)?;
    let graph = if graph.labels().is_none() {
        let n = graph.num_nodes();
        graph.with_labels(vec![0; n])?
    } else {
        graph
    };
    Ok(Injection {
        graph,
        cliques,
        swaps,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionManifest {
    pub plan: InjectionPlan,
    pub num_nodes: usize,
    pub num_edges_before: usize,
    pub num_edges_after: usize,
    pub num_labeled: usize,
    /// The clique size and candidate pool are conventions rather than measured
    /// constants; sweep them by editing the plan.
    pub assumed_constants: Vec<String>,
    pub cliques: Vec<Vec<usize>>,
    pub swaps: Vec<AttributeSwap>,
}

/// Writes the perturbed dataset and `manifest.json` into `dir`.
pub fn write_injection(original: &AttributedGraph, injection: &Injection, plan: &InjectionPlan, dir: &Path) -> Result<DatasetFiles> {
    let files = export_graph(&injection.graph, dir)?;
    let manifest = InjectionManifest {
        plan: *plan,
        num_nodes: original.num_nodes(),
        num_edges_before: original.num_edges(),
        num_edges_after: injection.graph.num_edges(),
        num_labeled: injection
            .graph
            .labels()
            .map_or(0, |l| l.iter().filter(|&&v| v == 1).count()),
        assumed_constants: vec!["clique_size".into(), "candidate_pool".into()],
        cliques: injection.cliques.clone(),
        swaps: injection.swaps.clone(),
    };
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    std::fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(files)
}
