//! Attributed graphs: loading, validation, export and symmetric normalization.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Undirected simple graph in CSR form. Neighbor lists are sorted, deduplicated
/// and contain no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Adjacency {
    /// Symmetrizes and deduplicates `edges`; self-loops are dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); num_nodes];
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::Dimension(format!(
                    "edge ({a}, {b}) references a node outside 0..{num_nodes}"
                )));
            }
            if a == b {
                continue;
            }
            lists[a].push(b as u32);
            lists[b].push(a as u32);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in lists {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    /// Undirected edges with `a < b`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |a| {
            self.neighbors(a)
                .iter()
                .map(|&b| b as usize)
                .filter(move |&b| a < b)
                .map(move |b| (a, b))
        })
    }

    pub fn average_degree(&self) -> f64 {
        if self.num_nodes() == 0 {
            0.0
        } else {
            self.neighbors.len() as f64 / self.num_nodes() as f64
        }
    }
}

/// A graph with a dense `N × F` attribute matrix and optional binary anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    adjacency: Adjacency,
    attributes: Array2<f64>,
    labels: Option<Vec<u8>>,
}

impl AttributedGraph {
    pub fn new(adjacency: Adjacency, attributes: Array2<f64>, labels: Option<Vec<u8>>) -> Result<Self> {
        let n = adjacency.num_nodes();
        if attributes.nrows() != n {
            return Err(Error::Dimension(format!(
                "attribute matrix has {} rows but the graph has {n} nodes",
                attributes.nrows()
            )));
        }
        if let Some(pos) = attributes.iter().position(|v| !v.is_finite()) {
            let f = attributes.ncols().max(1);
            return Err(Error::Numerical(format!(
                "attribute ({}, {}) is not finite",
                pos / f,
                pos % f
            )));
        }
        if let Some(labels) = &labels {
            check_labels(labels, n)?;
        }
        Ok(Self {
            adjacency,
            attributes,
            labels,
        })
    }

    pub fn from_edges(edges: &[(usize, usize)], attributes: Array2<f64>, labels: Option<Vec<u8>>) -> Result<Self> {
        let adjacency = Adjacency::from_edges(attributes.nrows(), edges)?;
        Self::new(adjacency, attributes, labels)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.num_nodes()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.num_edges()
    }

    pub fn num_features(&self) -> usize {
        self.attributes.ncols()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        self.adjacency.neighbors(node)
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency.degree(node)
    }

    pub fn attributes(&self) -> &Array2<f64> {
        &self.attributes
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn with_labels(self, labels: Vec<u8>) -> Result<Self> {
        Self::new(self.adjacency, self.attributes, Some(labels))
    }

    pub fn into_parts(self) -> (Adjacency, Array2<f64>, Option<Vec<u8>>) {
        (self.adjacency, self.attributes, self.labels)
    }

    /// Replaces every nonzero attribute with 1.
    pub fn binarize_attributes(mut self) -> Self {
        self.attributes.mapv_inplace(|v| if v != 0.0 { 1.0 } else { 0.0 });
        self
    }

    /// Graph with node `i` renamed to `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Usage("permutation must be a bijection on 0..N".into()));
        }
        let edges: Vec<_> = self.adjacency.edges().map(|(a, b)| (perm[a], perm[b])).collect();
        let mut attributes = Array2::zeros(self.attributes.dim());
        for (i, row) in self.attributes.rows().into_iter().enumerate() {
            attributes.row_mut(perm[i]).assign(&row);
        }
        let labels = self.labels.as_ref().map(|l| {
            let mut out = vec![0; n];
            for (i, &v) in l.iter().enumerate() {
                out[perm[i]] = v;
            }
            out
        });
        Self::from_edges(&edges, attributes, labels)
    }
}

fn check_labels(labels: &[u8], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} nodes",
            labels.len()
        )));
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(Error::Dimension(format!("label {} of node {i} is not 0 or 1", labels[i])));
    }
    Ok(())
}

/// File locations of one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub edges: PathBuf,
    pub attributes: PathBuf,
    pub labels: Option<PathBuf>,
}

impl DatasetFiles {
    pub const EDGES: &'static str = "edges.txt";
    pub const ATTRIBUTES: &'static str = "attributes.csv";
    pub const LABELS: &'static str = "labels.txt";

    /// Standard layout inside `dir`; the label file is included only if it exists.
    pub fn in_dir(dir: &Path) -> Self {
        let labels = dir.join(Self::LABELS);
        Self {
            edges: dir.join(Self::EDGES),
            attributes: dir.join(Self::ATTRIBUTES),
            labels: labels.exists().then_some(labels),
        }
    }

    pub fn load(&self) -> Result<AttributedGraph> {
        load_graph(&self.edges, &self.attributes, self.labels.as_deref())
    }
}

pub fn load_graph(edges_path: &Path, attributes_path: &Path, labels_path: Option<&Path>) -> Result<AttributedGraph> {
    let attributes = read_attributes(attributes_path)?;
    let n = attributes.nrows();
    let edges = read_edge_list(edges_path, Some(n))?;
    let labels = labels_path.map(read_labels).transpose()?;
    if let Some(labels) = &labels {
        check_labels(labels, n)?;
    }
    AttributedGraph::from_edges(&edges, attributes, labels)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads `src dst` pairs. Blank lines and lines starting with `#` are skipped.
/// With `num_nodes` set, ids at or above it are rejected.
pub fn read_edge_list(path: &Path, num_nodes: Option<usize>) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Malformed {
                path: path.into(),
                line: lineno,
                message: format!("expected two node ids, found {trimmed:?}"),
            });
        };
        let parse = |s: &str| -> Result<usize> {
            let id: usize = s.parse().map_err(|_| Error::Malformed {
                path: path.into(),
                line: lineno,
                message: format!("{s:?} is not a non-negative integer node id"),
            })?;
            match num_nodes {
                Some(n) if id >= n => Err(Error::Malformed {
                    path: path.into(),
                    line: lineno,
                    message: format!("node id {id} out of range for {n} nodes"),
                }),
                _ => Ok(id),
            }
        };
        edges.push((parse(a)?, parse(b)?));
    }
    Ok(edges)
}

pub fn read_attributes(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let lineno = idx + 1;
        let record = record.map_err(|e| Error::Malformed {
            path: path.into(),
            line: lineno,
            message: e.to_string(),
        })?;
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Dimension(format!(
                    "{}:{lineno}: row has {} columns, expected {w}",
                    path.display(),
                    record.len()
                )))
            }
            _ => {}
        }
        for cell in record.iter() {
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line: lineno,
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: lineno,
                    value: cell.to_string(),
                });
            }
            data.push(value);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, width.unwrap_or(0)), data)
        .map_err(|e| Error::Dimension(e.to_string()))
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut labels = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match trimmed {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => {
                return Err(Error::Malformed {
                    path: path.into(),
                    line: idx + 1,
                    message: format!("label {other:?} is not 0 or 1"),
                })
            }
        }
    }
    Ok(labels)
}

/// Writes the dataset in the loader's formats, ascending by node then neighbor id.
pub fn export_graph(g: &AttributedGraph, dir: &Path) -> Result<DatasetFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = DatasetFiles {
        edges: dir.join(DatasetFiles::EDGES),
        attributes: dir.join(DatasetFiles::ATTRIBUTES),
        labels: g.labels().map(|_| dir.join(DatasetFiles::LABELS)),
    };

    let mut out = create(&files.edges)?;
    for (a, b) in g.adjacency().edges() {
        writeln!(out, "{a}\t{b}").map_err(|e| Error::io(&files.edges, e))?;
    }
    out.flush().map_err(|e| Error::io(&files.edges, e))?;

    let mut out = create(&files.attributes)?;
    for row in g.attributes().rows() {
        let line = row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        writeln!(out, "{line}").map_err(|e| Error::io(&files.attributes, e))?;
    }
    out.flush().map_err(|e| Error::io(&files.attributes, e))?;

    if let (Some(labels), Some(path)) = (g.labels(), &files.labels) {
        let mut out = create(path)?;
        for l in labels {
            writeln!(out, "{l}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(files)
}

/// Rewrites an edge list with arbitrary integer ids onto dense ids `0..N-1`,
/// assigned in ascending order of the original id. Writes the remapped list to
/// `out_edges` and `original dense` pairs to `out_map`; returns the original ids
/// indexed by dense id.
pub fn remap_edge_list(input: &Path, out_edges: &Path, out_map: &Path) -> Result<Vec<u64>> {
    let mut raw = Vec::new();
    for (idx, line) in open(input)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(input, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let ids: Vec<u64> = trimmed
            .split_whitespace()
            .map(|s| s.parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Malformed {
                path: input.into(),
                line: idx + 1,
                message: format!("expected two integer ids, found {trimmed:?}"),
            })?;
        if ids.len() != 2 {
            return Err(Error::Malformed {
                path: input.into(),
                line: idx + 1,
                message: format!("expected two integer ids, found {trimmed:?}"),
            });
        }
        raw.push((ids[0], ids[1]));
    }
    let mut dense: BTreeMap<u64, usize> = raw.iter().flat_map(|&(a, b)| [(a, 0), (b, 0)]).collect();
    for (i, slot) in dense.values_mut().enumerate() {
        *slot = i;
    }

    let mut out = create(out_edges)?;
    for (a, b) in &raw {
        writeln!(out, "{}\t{}", dense[a], dense[b]).map_err(|e| Error::io(out_edges, e))?;
    }
    out.flush().map_err(|e| Error::io(out_edges, e))?;

    let mut out = create(out_map)?;
    for (orig, id) in &dense {
        writeln!(out, "{orig}\t{id}").map_err(|e| Error::io(out_map, e))?;
    }
    out.flush().map_err(|e| Error::io(out_map, e))?;
    Ok(dense.into_keys().collect())
}

/// `D̂^{-1/2} Â D̂^{-1/2}` over the whole graph or an induced subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: CsrMatrix,
    pub self_loops_added: bool,
    /// Rows that ended up with zero degree (possible only without self-loops).
    pub zero_degree_rows: Vec<usize>,
}

pub fn sym_norm_adjacency(g: &AttributedGraph, node_subset: Option<&[usize]>, add_self_loops: bool) -> Result<NormalizedAdjacency> {
    let all: Vec<usize>;
    let nodes = match node_subset {
        Some(s) => s,
        None => {
            all = (0..g.num_nodes()).collect();
            &all
        }
    };
    let mut local = std::collections::HashMap::with_capacity(nodes.len());
    for (pos, &v) in nodes.iter().enumerate() {
        if v >= g.num_nodes() {
            return Err(Error::Usage(format!("subset node {v} out of range")));
        }
        if local.insert(v, pos).is_some() {
            return Err(Error::Usage(format!("subset node {v} listed twice")));
        }
    }

    let mut links: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&v| {
            let mut row: Vec<usize> = g
                .neighbors(v)
                .iter()
                .filter_map(|&u| local.get(&(u as usize)).copied())
                .collect();
            row.sort_unstable();
            row
        })
        .collect();
    if add_self_loops {
        for (i, row) in links.iter_mut().enumerate() {
            let at = row.partition_point(|&j| j < i);
            row.insert(at, i);
        }
    }

    let degree: Vec<f64> = links.iter().map(|r| r.len() as f64).collect();
    let zero_degree_rows = degree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0.0)
        .map(|(i, _)| i)
        .collect();
    let mut triplets = Vec::new();
    for (i, row) in links.iter().enumerate() {
        for &j in row {
            triplets.push((i, j, 1.0 / (degree[i] * degree[j]).sqrt()));
        }
    }
    Ok(NormalizedAdjacency {
        matrix: CsrMatrix::from_triplets(nodes.len(), nodes.len(), &triplets)?,
        self_loops_added: add_self_loops,
        zero_degree_rows,
    })
}
