//! Undirected graphs in CSR form, normalized adjacency, the enhanced
//! low/high-pass filter pair and label homophily.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dense::Matrix;
use crate::error::{Error, Result};

/// Immutable undirected, unweighted graph without self-loops.
///
/// Each row lists its neighbors in ascending order with no duplicates, and
/// every edge is stored in both orientations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseGraph {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    degrees: Vec<usize>,
    dropped_self_loops: usize,
}

impl SparseGraph {
    /// Builds the graph from an edge list that may contain duplicates and
    /// both orientations. Self-loop pairs are dropped and counted.
    pub fn from_edges(edges: &[(usize, usize)], n: usize) -> Result<Self> {
        let mut dropped_self_loops = 0;
        let mut directed = Vec::with_capacity(edges.len() * 2);
        for (line, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::input(format!(
                    "edge {line} ({u}, {v}) has a node id outside [0, {n})"
                )));
            }
            if u == v {
                dropped_self_loops += 1;
                continue;
            }
            directed.push((u, v));
            directed.push((v, u));
        }
        directed.sort_unstable();
        directed.dedup();

        let mut row_offsets = vec![0usize; n + 1];
        for &(u, _) in &directed {
            row_offsets[u + 1] += 1;
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices: Vec<usize> = directed.iter().map(|&(_, v)| v).collect();
        let degrees = (0..n)
            .map(|i| row_offsets[i + 1] - row_offsets[i])
            .collect();
        if dropped_self_loops > 0 {
            log::warn!("dropped {dropped_self_loops} self-loop pair(s) from edge list");
        }
        Ok(Self {
            n,
            row_offsets,
            col_indices,
            degrees,
            dropped_self_loops,
        })
    }

    /// Parses the whitespace-separated `i j` edge-list format. Lines starting
    /// with `#` and blank lines are ignored.
    pub fn parse_edge_list(text: &str, n: usize) -> Result<Self> {
        let edges = parse_edge_pairs(text)?;
        Self::from_edges(&edges, n)
    }

    pub fn read_edge_list(path: &Path, n: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text, n)
    }

    /// Serializes each undirected edge once as `i j` with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v) in self.undirected_edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Start and end of node `i`'s entries in the directed entry arrays.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Number of stored (directed) entries, `2 |E|`.
    pub fn directed_entry_count(&self) -> usize {
        self.col_indices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn dropped_self_loops(&self) -> usize {
        self.dropped_self_loops
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in row order.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Relabels nodes so that new node `i` is old node `order[i]`.
    pub fn permute(&self, order: &[usize]) -> Result<SparseGraph> {
        let mut inverse = vec![usize::MAX; self.n];
        if order.len() != self.n {
            return Err(Error::input("permutation length differs from node count"));
        }
        for (new, &old) in order.iter().enumerate() {
            if old >= self.n || inverse[old] != usize::MAX {
                return Err(Error::input("order is not a permutation"));
            }
            inverse[old] = new;
        }
        let edges: Vec<_> = self
            .undirected_edges()
            .map(|(u, v)| (inverse[u], inverse[v]))
            .collect();
        SparseGraph::from_edges(&edges, self.n)
    }

    /// SHA-256 over the CSR arrays.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        for &o in &self.row_offsets {
            h.update((o as u64).to_le_bytes());
        }
        for &c in &self.col_indices {
            h.update((c as u64).to_le_bytes());
        }
        h.finalize().into()
    }
}

pub(crate) fn parse_edge_pairs(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            tok.ok_or_else(|| Error::format(format!("line {}: expected two node ids", lineno + 1)))?
                .parse::<usize>()
                .map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))
        };
        let u = parse(it.next())?;
        let v = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::format(format!(
                "line {}: expected exactly two node ids",
                lineno + 1
            )));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Real-valued sparse matrix in CSR layout, columns ascending within a row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 || row_offsets[0] != 0 {
            return Err(Error::input("row_offsets must have n_rows + 1 entries starting at 0"));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::input("row_offsets must be monotone"));
        }
        let nnz = *row_offsets.last().unwrap();
        if col_indices.len() != nnz || values.len() != nnz {
            return Err(Error::input("col_indices/values length must equal the last offset"));
        }
        for r in 0..n_rows {
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(Error::input(format!("row {r} has a column index out of range")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::input(format!("row {r} columns are not strictly ascending")));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// `scale * I` (n x n).
    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![scale; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |p| vals[p])
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `a * I + b * self`, keeping the CSR layout sorted.
    pub fn affine_with_identity(&self, a: f64, b: f64) -> Result<SparseMatrix> {
        if self.n_rows != self.n_cols {
            return Err(Error::input("identity shift needs a square matrix"));
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz() + self.n_rows);
        let mut values = Vec::with_capacity(self.nnz() + self.n_rows);
        row_offsets.push(0);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut diag_done = false;
            for (&j, &v) in cols.iter().zip(vals) {
                if !diag_done && j >= i {
                    if j == i {
                        col_indices.push(i);
                        values.push(a + b * v);
                        diag_done = true;
                        continue;
                    }
                    col_indices.push(i);
                    values.push(a);
                    diag_done = true;
                }
                col_indices.push(j);
                values.push(b * v);
            }
            if !diag_done {
                col_indices.push(i);
                values.push(a);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Sparse-dense product `self * x`. Each output entry accumulates over
    /// the row's stored columns in ascending order.
    pub fn mul_dense(&self, x: &Matrix) -> Result<Matrix> {
        if self.n_cols != x.rows() {
            return Err(Error::input(format!(
                "sparse product shape mismatch: {}x{} * {}x{}",
                self.n_rows,
                self.n_cols,
                x.rows(),
                x.cols()
            )));
        }
        let d = x.cols();
        let mut out = Matrix::zeros(self.n_rows, d);
        if d == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, &xv) in out_row.iter_mut().zip(x.row(j)) {
                    *o += v * xv;
                }
            }
        };
        if self.n_rows >= 256 {
            out.as_mut_slice()
                .par_chunks_mut(d)
                .enumerate()
                .for_each(kernel);
        } else {
            out.as_mut_slice().chunks_mut(d).enumerate().for_each(kernel);
        }
        Ok(out)
    }
}

/// Enhanced low/high-pass filters with `low + high = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterPair {
    pub beta: f64,
    pub low: SparseMatrix,
    pub high: SparseMatrix,
}

impl FilterPair {
    /// Pairs an arbitrary low-pass matrix with its complement `I - low`.
    pub fn complement_of(low: SparseMatrix, beta: f64) -> Result<Self> {
        let high = low.affine_with_identity(1.0, -1.0)?;
        Ok(Self { beta, low, high })
    }
}

/// `D^{-1/2} A D^{-1/2}` with degrees taken without self-loops. Isolated
/// nodes get an empty row.
pub fn sym_norm_adj(g: &SparseGraph) -> SparseMatrix {
    let deg = g.degrees();
    let mut values = Vec::with_capacity(g.directed_entry_count());
    for i in 0..g.n() {
        for &j in g.neighbors(i) {
            values.push(1.0 / ((deg[i] * deg[j]) as f64).sqrt());
        }
    }
    SparseMatrix {
        n_rows: g.n(),
        n_cols: g.n(),
        row_offsets: g.row_offsets().to_vec(),
        col_indices: g.col_indices().to_vec(),
        values,
    }
}

/// `D~^{-1/2} (A + I) D~^{-1/2}`, the self-looped filter of vanilla SGC/GCN.
pub fn gcn_norm_adj(g: &SparseGraph) -> SparseMatrix {
    let deg = g.degrees();
    let looped = self_loop_adj(g);
    let mut values = looped.values.clone();
    for i in 0..g.n() {
        for p in looped.row_offsets[i]..looped.row_offsets[i + 1] {
            values[p] /= (((deg[i] + 1) * (deg[looped.col_indices[p]] + 1)) as f64).sqrt();
        }
    }
    SparseMatrix { values, ..looped }
}

/// Unnormalized `A + I`.
pub fn self_loop_adj(g: &SparseGraph) -> SparseMatrix {
    let adj = SparseMatrix {
        n_rows: g.n(),
        n_cols: g.n(),
        row_offsets: g.row_offsets().to_vec(),
        col_indices: g.col_indices().to_vec(),
        values: vec![1.0; g.directed_entry_count()],
    };
    adj.affine_with_identity(1.0, 1.0)
        .expect("adjacency is square")
}

/// `F_L = beta I + normA`, `F_H = (1 - beta) I - normA`.
pub fn enhanced_filters(g: &SparseGraph, beta: f64) -> Result<FilterPair> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::input(format!("beta must lie in [0, 1], got {beta}")));
    }
    let norm = sym_norm_adj(g);
    let low = norm.affine_with_identity(beta, 1.0)?;
    let high = norm.affine_with_identity(1.0 - beta, -1.0)?;
    Ok(FilterPair { beta, low, high })
}

/// Per-node and graph-level label homophily.
#[derive(Clone, Debug, PartialEq)]
pub struct HomophilyReport {
    /// Fraction of same-label neighbors; 0 for isolated nodes.
    pub per_node: Vec<f64>,
    /// Mean of `per_node` over nodes with at least one neighbor.
    pub graph_level: f64,
}

pub fn node_homophily(g: &SparseGraph, labels: &[usize]) -> Result<HomophilyReport> {
    if labels.len() != g.n() {
        return Err(Error::input(format!(
            "label vector has length {}, graph has {} nodes",
            labels.len(),
            g.n()
        )));
    }
    let per_node: Vec<f64> = (0..g.n())
        .map(|i| {
            let nb = g.neighbors(i);
            if nb.is_empty() {
                return 0.0;
            }
            let same = nb.iter().filter(|&&j| labels[j] == labels[i]).count();
            same as f64 / nb.len() as f64
        })
        .collect();
    let (sum, count) = (0..g.n())
        .filter(|&i| g.degree(i) > 0)
        .fold((0.0, 0usize), |(s, c), i| (s + per_node[i], c + 1));
    let graph_level = if count > 0 { sum / count as f64 } else { 0.0 };
    Ok(HomophilyReport {
        per_node,
        graph_level,
    })
}
