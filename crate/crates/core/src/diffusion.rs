//! Personalized PageRank diffusion `S = α (I − (1−α) T)^{-1}`, the global view.
//!
//! `T` is `D^{-1/2} A D^{-1/2}` by default. Nodes without neighbors receive a
//! self-loop first so that `T` is defined everywhere.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionNorm {
    /// `D^{-1/2} A D^{-1/2}`; gives a symmetric `S`.
    #[default]
    Symmetric,
    /// `D^{-1} A`; rows of `S` sum to one.
    RowStochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionMethod {
    /// Dense solve up to [`DiffusionConfig::AUTO_DENSE_LIMIT`] nodes, truncated iteration beyond.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionConfig {
    pub alpha: f64,
    pub transition: TransitionNorm,
    pub method: DiffusionMethod,
    /// Largest graph the dense solve accepts.
    pub dense_cap: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Per-row top-k truncation; `None` picks the default for the graph size.
    pub truncation: Option<usize>,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            transition: TransitionNorm::Symmetric,
            method: DiffusionMethod::Auto,
            dense_cap: 25_000,
            tol: 1e-8,
            max_iter: 10_000,
            truncation: None,
        }
    }
}

impl DiffusionConfig {
    pub const AUTO_DENSE_LIMIT: usize = 5000;
    pub const LARGE_GRAPH_TOPK: usize = 128;

    pub fn effective_truncation(&self, num_nodes: usize) -> Option<usize> {
        match self.truncation {
            Some(k) if k >= num_nodes => None,
            Some(k) => Some(k),
            None if num_nodes > Self::AUTO_DENSE_LIMIT => Some(Self::LARGE_GRAPH_TOPK),
            None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(Array2<f64>),
    /// Per row, `(column, value)` sorted by column.
    Sparse(Vec<Vec<(u32, f64)>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix {
    alpha: f64,
    truncation: Option<usize>,
    transition: TransitionNorm,
    storage: Storage,
}

impl DiffusionMatrix {
    pub fn from_dense(matrix: Array2<f64>, alpha: f64, transition: TransitionNorm) -> Self {
        Self {
            alpha,
            truncation: None,
            transition,
            storage: Storage::Dense(matrix),
        }
    }

    pub fn num_nodes(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.nrows(),
            Storage::Sparse(rows) => rows.len(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn truncation(&self) -> Option<usize> {
        self.truncation
    }

    pub fn transition(&self) -> TransitionNorm {
        self.transition
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[[i, j]],
            Storage::Sparse(rows) => {
                let row = &rows[i];
                match row.binary_search_by_key(&(j as u32), |&(c, _)| c) {
                    Ok(pos) => row[pos].1,
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Stored entries of row `i` as `(column, value)`; dense rows yield every column.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        match &self.storage {
            Storage::Dense(m) => m.row(i).iter().copied().enumerate().collect(),
            Storage::Sparse(rows) => rows[i].iter().map(|&(c, v)| (c as usize, v)).collect(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(rows) => {
                let n = rows.len();
                let mut out = Array2::zeros((n, n));
                for (i, row) in rows.iter().enumerate() {
                    for &(c, v) in row {
                        out[[i, c as usize]] = v;
                    }
                }
                out
            }
        }
    }

    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.len(),
            Storage::Sparse(rows) => rows.iter().map(Vec::len).sum(),
        }
    }

    /// `|S|×|S|` block of the entries at `nodes` (repeats allowed).
    pub fn block(&self, nodes: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((nodes.len(), nodes.len()));
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                out[[a, b]] = self.get(i, j);
            }
        }
        out
    }
}

/// Transition matrix with a self-loop added to every isolated node.
pub fn transition_matrix(g: &AttributedGraph, norm: TransitionNorm) -> Result<CsrMatrix> {
    let n = g.num_nodes();
    let mut triplets = Vec::with_capacity(2 * g.num_edges() + n);
    let degree = |i: usize| g.degree(i).max(1) as f64;
    for i in 0..n {
        let neighbors = g.neighbors(i);
        if neighbors.is_empty() {
            triplets.push((i, i, 1.0));
            continue;
        }
        for &j in neighbors {
            let j = j as usize;
            let w = match norm {
                TransitionNorm::Symmetric => 1.0 / (degree(i).sqrt() * degree(j).sqrt()),
                TransitionNorm::RowStochastic => 1.0 / degree(i),
            };
            triplets.push((i, j, w));
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("teleport probability {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// Closed-form diffusion with the default settings and the given teleport probability.
pub fn compute_ppr(g: &AttributedGraph, alpha: f64) -> Result<DiffusionMatrix> {
    compute_ppr_dense(
        g,
        &DiffusionConfig {
            alpha,
            ..DiffusionConfig::default()
        },
    )
}

/// Exact diffusion via a dense factorization of `I − (1−α)T`.
pub fn compute_ppr_dense(g: &AttributedGraph, cfg: &DiffusionConfig) -> Result<DiffusionMatrix> {
    check_alpha(cfg.alpha)?;
    let n = g.num_nodes();
    if n > cfg.dense_cap {
        return Err(Error::Capacity(format!(
            "{n} nodes exceeds the dense diffusion cap of {}; use the iterative method",
            cfg.dense_cap
        )));
    }
    let t = transition_matrix(g, cfg.transition)?;
    let decay = 1.0 - cfg.alpha;
    let mut system = Mat::<f64>::identity(n, n);
    for i in 0..n {
        for (j, v) in t.row(i) {
            system[(i, j)] -= decay * v;
        }
    }
    let inverse = match cfg.transition {
        TransitionNorm::Symmetric => system
            .llt(Side::Lower)
            .map_err(|e| Error::Numerical(format!("diffusion system is not positive definite: {e:?}")))?
            .inverse(),
        TransitionNorm::RowStochastic => system.partial_piv_lu().inverse(),
    };
    let mut s = Array2::from_shape_fn((n, n), |(i, j)| cfg.alpha * inverse[(i, j)]);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("diffusion solve produced non-finite entries".into()));
    }
    if cfg.transition == TransitionNorm::Symmetric {
        // The inverse of a symmetric matrix is symmetric; remove round-off asymmetry.
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (s[[i, j]] + s[[j, i]]);
                s[[i, j]] = avg;
                s[[j, i]] = avg;
            }
        }
    }
    Ok(DiffusionMatrix::from_dense(s, cfg.alpha, cfg.transition))
}

/// Row `i` of `S` by the fixed-point iteration `x ← α e_i + (1−α) Tᵀ x`.
/// With `tol = None` exactly `max_iter` steps are taken; otherwise iteration
/// stops once the largest change drops below `tol`.
fn ppr_row(tt: &CsrMatrix, alpha: f64, i: usize, tol: Option<f64>, max_iter: usize, x: &mut [f64], next: &mut [f64]) -> Result<usize> {
    x.fill(0.0);
    x[i] = alpha;
    let decay = 1.0 - alpha;
    let mut change = f64::INFINITY;
    for iter in 0..max_iter {
        tt.mul_vec(x, next);
        change = 0.0;
        for (j, (nv, xv)) in next.iter_mut().zip(x.iter()).enumerate() {
            *nv *= decay;
            if j == i {
                *nv += alpha;
            }
            change = change.max((*nv - xv).abs());
        }
        x.copy_from_slice(next);
        if tol.is_some_and(|tol| change < tol) {
            return Ok(iter + 1);
        }
    }
    match tol {
        Some(_) => Err(Error::Convergence {
            iterations: max_iter,
            residual: change,
        }),
        None => Ok(max_iter),
    }
}

fn iterate_rows(
    g: &AttributedGraph,
    alpha: f64,
    transition: TransitionNorm,
    tol: Option<f64>,
    max_iter: usize,
    mut emit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    check_alpha(alpha)?;
    let n = g.num_nodes();
    let tt = transition_matrix(g, transition)?.transpose();
    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    for i in 0..n {
        ppr_row(&tt, alpha, i, tol, max_iter, &mut x, &mut next)?;
        emit(i, &x);
    }
    Ok(())
}

/// Diffusion by power iteration; agrees with the closed form to about `10·tol`.
pub fn compute_ppr_iterative(g: &AttributedGraph, alpha: f64, tol: f64, max_iter: usize) -> Result<DiffusionMatrix> {
    compute_ppr_iterative_with(g, alpha, TransitionNorm::Symmetric, tol, max_iter)
}

pub fn compute_ppr_iterative_with(
    g: &AttributedGraph,
    alpha: f64,
    transition: TransitionNorm,
    tol: f64,
    max_iter: usize,
) -> Result<DiffusionMatrix> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    let n = g.num_nodes();
    let mut s = Array2::zeros((n, n));
    iterate_rows(g, alpha, transition, Some(tol), max_iter, |i, row| {
        s.row_mut(i).assign(&ndarray::ArrayView1::from(row));
    })?;
    Ok(DiffusionMatrix::from_dense(s, alpha, transition))
}

/// Power iteration that truncates each row to its top `k` entries as soon as
/// it is computed, so memory stays at `O(N·k)`.
pub fn compute_ppr_iterative_topk(
    g: &AttributedGraph,
    alpha: f64,
    transition: TransitionNorm,
    tol: f64,
    max_iter: usize,
    k: usize,
) -> Result<DiffusionMatrix> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    if k == 0 {
        return Err(Error::Config("top-k truncation needs k >= 1".into()));
    }
    let n = g.num_nodes();
    let mut rows = Vec::with_capacity(n);
    iterate_rows(g, alpha, transition, Some(tol), max_iter, |i, row| {
        rows.push(top_k_row(row.iter().copied().enumerate(), i, k));
    })?;
    Ok(DiffusionMatrix {
        alpha,
        truncation: Some(k),
        transition,
        storage: Storage::Sparse(rows),
    })
}

/// Partial sums `Σ_{k=0..steps} α(1−α)^k T^k`, one row at a time.
pub fn ppr_partial_sums(g: &AttributedGraph, alpha: f64, steps: usize) -> Result<DiffusionMatrix> {
    let n = g.num_nodes();
    let mut s = Array2::zeros((n, n));
    iterate_rows(g, alpha, TransitionNorm::Symmetric, None, steps, |i, row| {
        s.row_mut(i).assign(&ndarray::ArrayView1::from(row));
    })?;
    Ok(DiffusionMatrix::from_dense(s, alpha, TransitionNorm::Symmetric))
}

fn top_k_row(entries: impl Iterator<Item = (usize, f64)>, diagonal: usize, k: usize) -> Vec<(u32, f64)> {
    let mut all: Vec<(usize, f64)> = entries.filter(|&(_, v)| v != 0.0).collect();
    // Largest value first, lower column wins ties.
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let diag = all.iter().find(|&&(c, _)| c == diagonal).copied();
    let mut kept: Vec<(u32, f64)> = all.iter().take(k).map(|&(c, v)| (c as u32, v)).collect();
    if let Some((c, v)) = diag {
        if !kept.iter().any(|&(kc, _)| kc as usize == c) {
            kept.push((c as u32, v));
        }
    }
    kept.sort_by_key(|&(c, _)| c);
    kept
}

/// Keeps the `k` largest entries of every row plus the diagonal.
pub fn sparsify_topk(s: &DiffusionMatrix, k: usize) -> Result<DiffusionMatrix> {
    if k == 0 {
        return Err(Error::Config("top-k truncation needs k >= 1".into()));
    }
    let n = s.num_nodes();
    if k >= n {
        return Ok(s.clone());
    }
    let rows = (0..n).map(|i| top_k_row(s.row(i).into_iter(), i, k)).collect();
    Ok(DiffusionMatrix {
        alpha: s.alpha,
        truncation: Some(k),
        transition: s.transition,
        storage: Storage::Sparse(rows),
    })
}

/// Picks the method and truncation from the config and graph size.
pub fn diffuse(g: &AttributedGraph, cfg: &DiffusionConfig) -> Result<DiffusionMatrix> {
    let n = g.num_nodes();
    let truncation = cfg.effective_truncation(n);
    let dense = match cfg.method {
        DiffusionMethod::Dense => true,
        DiffusionMethod::Iterative => false,
        DiffusionMethod::Auto => n <= DiffusionConfig::AUTO_DENSE_LIMIT,
    };
    if dense {
        let s = compute_ppr_dense(g, cfg)?;
        match truncation {
            Some(k) => sparsify_topk(&s, k),
            None => Ok(s),
        }
    } else {
        match truncation {
            Some(k) => compute_ppr_iterative_topk(g, cfg.alpha, cfg.transition, cfg.tol, cfg.max_iter, k),
            None => compute_ppr_iterative_with(g, cfg.alpha, cfg.transition, cfg.tol, cfg.max_iter),
        }
    }
}

const CACHE_MAGIC: &[u8; 8] = b"SUBCRDIF";
const CACHE_VERSION: u32 = 1;

/// Header fields of a diffusion cache file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheHeader {
    pub version: u32,
    pub num_nodes: usize,
    pub alpha: f64,
    pub truncation: Option<usize>,
    pub transition: TransitionNorm,
    pub dense: bool,
}

/// Binary layout, little endian:
/// `"SUBCRDIF"`, version `u32`, storage `u8` (0 dense, 1 sparse), transition `u8`
/// (0 symmetric, 1 row-stochastic), N `u64`, alpha `f64`, truncation `u64` (0 = none);
/// then either N·N row-major `f64`, or per row a `u32` count followed by
/// `(u32 column, f64 value)` pairs.
pub fn write_cache(s: &DiffusionMatrix, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    out.write_all(CACHE_MAGIC).map_err(io)?;
    out.write_all(&CACHE_VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&[u8::from(!s.is_dense()), u8::from(s.transition == TransitionNorm::RowStochastic)])
        .map_err(io)?;
    out.write_all(&(s.num_nodes() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&s.alpha.to_le_bytes()).map_err(io)?;
    out.write_all(&(s.truncation.unwrap_or(0) as u64).to_le_bytes()).map_err(io)?;
    match &s.storage {
        Storage::Dense(m) => {
            for v in m.iter() {
                out.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        Storage::Sparse(rows) => {
            for row in rows {
                out.write_all(&(row.len() as u32).to_le_bytes()).map_err(io)?;
                for &(c, v) in row {
                    out.write_all(&c.to_le_bytes()).map_err(io)?;
                    out.write_all(&v.to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    out.flush().map_err(io)
}

fn read_array<const K: usize>(r: &mut impl Read, path: &Path) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf).map_err(|e| Error::Format {
        path: path.into(),
        message: format!("truncated diffusion cache: {e}"),
    })?;
    Ok(buf)
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<CacheHeader> {
    if &read_array::<8>(r, path)? != CACHE_MAGIC {
        return Err(Error::Format {
            path: path.into(),
            message: "not a diffusion cache".into(),
        });
    }
    let version = u32::from_le_bytes(read_array(r, path)?);
    if version != CACHE_VERSION {
        return Err(Error::Format {
            path: path.into(),
            message: format!("unsupported diffusion cache version {version}"),
        });
    }
    let [storage, transition] = read_array::<2>(r, path)?;
    let num_nodes = u64::from_le_bytes(read_array(r, path)?) as usize;
    let alpha = f64::from_le_bytes(read_array(r, path)?);
    let truncation = u64::from_le_bytes(read_array(r, path)?) as usize;
    Ok(CacheHeader {
        version,
        num_nodes,
        alpha,
        truncation: (truncation > 0).then_some(truncation),
        transition: if transition == 1 {
            TransitionNorm::RowStochastic
        } else {
            TransitionNorm::Symmetric
        },
        dense: storage == 0,
    })
}

pub fn read_cache_header(path: &Path) -> Result<CacheHeader> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    read_header(&mut r, path)
}

pub fn read_cache(path: &Path) -> Result<DiffusionMatrix> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let h = read_header(&mut r, path)?;
    let n = h.num_nodes;
    let storage = if h.dense {
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            data.push(f64::from_le_bytes(read_array(&mut r, path)?));
        }
        Storage::Dense(Array2::from_shape_vec((n, n), data).map_err(|e| Error::Dimension(e.to_string()))?)
    } else {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let count = u32::from_le_bytes(read_array(&mut r, path)?) as usize;
            let mut row = Vec::with_capacity(count);
            for _ in 0..count {
                let c = u32::from_le_bytes(read_array(&mut r, path)?);
                let v = f64::from_le_bytes(read_array(&mut r, path)?);
                row.push((c, v));
            }
            rows.push(row);
        }
        Storage::Sparse(rows)
    };
    Ok(DiffusionMatrix {
        alpha: h.alpha,
        truncation: h.truncation,
        transition: h.transition,
        storage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_node() -> AttributedGraph {
        AttributedGraph::from_edges(&[(0, 1)], Array2::zeros((2, 1)), None).unwrap()
    }

    // closed form of α(I − (1−α)[[0,1],[1,0]])^{-1}
    fn two_node_expected(alpha: f64) -> Array2<f64> {
        let c = 1.0 - alpha;
        let det = 1.0 - c * c;
        array![[alpha / det, alpha * c / det], [alpha * c / det, alpha / det]]
    }

    #[test]
    fn single_isolated_node_is_one() {
        let g = AttributedGraph::from_edges(&[], Array2::zeros((1, 1)), None).unwrap();
        let s = compute_ppr(&g, 0.15).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_node_closed_form() {
        let s = compute_ppr(&two_node(), 0.15).unwrap();
        let expect = two_node_expected(0.15);
        assert!((expect[[0, 0]] - 0.540_540_540_540_540_5).abs() < 1e-15);
        assert!((expect[[0, 1]] - 0.459_459_459_459_459_4).abs() < 1e-15);
        for ((i, j), v) in expect.indexed_iter() {
            assert!((s.get(i, j) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn two_node_iterative() {
        let s = compute_ppr_iterative(&two_node(), 0.15, 1e-10, 10_000).unwrap();
        let expect = two_node_expected(0.15);
        for ((i, j), v) in expect.indexed_iter() {
            assert!((s.get(i, j) - v).abs() < 1e-8);
        }
    }

    #[test]
    fn near_pure_teleport_is_identity() {
        let g = crate::synth::citation_like(&crate::synth::SynthConfig::small(), 1).unwrap();
        let s = compute_ppr_iterative(&g, 1.0 - 1e-9, 1e-10, 100).unwrap();
        let eye = Array2::<f64>::eye(g.num_nodes());
        let err = (&s.to_dense() - &eye).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-8);
    }

    #[test]
    fn zeroth_partial_sum_is_scaled_identity() {
        let g = crate::synth::citation_like(&crate::synth::SynthConfig::small(), 1).unwrap();
        let s = ppr_partial_sums(&g, 0.15, 0).unwrap();
        assert_eq!(s.to_dense(), Array2::<f64>::eye(g.num_nodes()) * 0.15);
    }

    #[test]
    fn non_convergence_reports_residual() {
        let g = crate::synth::citation_like(&crate::synth::SynthConfig::small(), 1).unwrap();
        match compute_ppr_iterative(&g, 0.15, 1e-12, 3) {
            Err(Error::Convergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_alpha_and_oversized_graphs() {
        assert!(compute_ppr(&two_node(), 0.0).is_err());
        assert!(compute_ppr(&two_node(), 1.0).is_err());
        let cfg = DiffusionConfig {
            dense_cap: 1,
            ..DiffusionConfig::default()
        };
        assert!(matches!(compute_ppr_dense(&two_node(), &cfg), Err(Error::Capacity(_))));
    }

    #[test]
    fn topk_examples() {
        let s = compute_ppr(&two_node(), 0.15).unwrap();
        assert_eq!(sparsify_topk(&s, 2).unwrap(), s);
        let t = sparsify_topk(&s, 1).unwrap();
        assert_eq!(t.get(0, 1), 0.0);
        assert_eq!(t.get(1, 0), 0.0);
        assert_eq!(t.get(0, 0), s.get(0, 0));
        assert_eq!(t.truncation(), Some(1));

        let flat = DiffusionMatrix::from_dense(Array2::from_elem((4, 4), 0.25), 0.15, TransitionNorm::Symmetric);
        let t = sparsify_topk(&flat, 2).unwrap();
        assert_eq!(t.row(0), vec![(0, 0.25), (1, 0.25)]);
        // diagonal retained on top of the two lowest columns
        assert_eq!(t.row(3), vec![(0, 0.25), (1, 0.25), (3, 0.25)]);
    }

    #[test]
    fn row_stochastic_rows_sum_to_one() {
        let g = crate::synth::citation_like(&crate::synth::SynthConfig::small(), 4).unwrap();
        let cfg = DiffusionConfig {
            transition: TransitionNorm::RowStochastic,
            ..DiffusionConfig::default()
        };
        let s = compute_ppr_dense(&g, &cfg).unwrap();
        for i in 0..g.num_nodes() {
            let sum: f64 = s.row(i).iter().map(|&(_, v)| v).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn iterative_topk_matches_sparsified_dense() {
        let g = crate::synth::citation_like(&crate::synth::SynthConfig::small(), 4).unwrap();
        let exact = compute_ppr(&g, 0.15).unwrap();
        let direct = compute_ppr_iterative_topk(&g, 0.15, TransitionNorm::Symmetric, 1e-12, 10_000, 8).unwrap();
        for i in 0..g.num_nodes() {
            for (c, v) in direct.row(i) {
                assert!((exact.get(i, c) - v).abs() < 1e-9);
            }
            assert!(direct.row(i).len() <= 9);
        }
    }

    #[test]
    fn auto_method_truncates_large_graphs_only() {
        let cfg = DiffusionConfig::default();
        assert_eq!(cfg.effective_truncation(2708), None);
        assert_eq!(cfg.effective_truncation(19_717), Some(128));
        let small = diffuse(&two_node(), &cfg).unwrap();
        assert!(small.is_dense());
    }

    #[test]
    fn cache_round_trip() {
        let g = crate::synth::citation_like(&crate::synth::SynthConfig::small(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let dense = compute_ppr(&g, 0.2).unwrap();
        let sparse = sparsify_topk(&dense, 5).unwrap();
        for (name, s) in [("dense.bin", &dense), ("sparse.bin", &sparse)] {
            let path = dir.path().join(name);
            write_cache(s, &path).unwrap();
            assert_eq!(&read_cache(&path).unwrap(), s);
            let h = read_cache_header(&path).unwrap();
            assert_eq!(h.num_nodes, g.num_nodes());
            assert_eq!(h.alpha, 0.2);
            assert_eq!(h.truncation, s.truncation());
        }
        std::fs::write(dir.path().join("junk.bin"), b"nope").unwrap();
        assert!(matches!(read_cache(&dir.path().join("junk.bin")), Err(Error::Format { .. })));
    }
}
