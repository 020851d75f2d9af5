//! Hypergraph random-walk transition matrix and author-mediated multistep
//! transition probabilities.
//!
//! One step from node `i`: pick an incident hyperedge uniformly, then a
//! member of it uniformly. Entry-wise that is
//! `P(i, j) = 1/d(i) * sum over e containing i and j of 1/d(e)`, i.e. the
//! matrix `D_V^-1 R^T D_E^-1 R` for the edge-by-node incidence `R`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, NodeId};

/// Row-compressed sparse matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists. Duplicate columns are summed.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            for (c, v) in row {
                debug_assert!((c as usize) < n_cols);
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { n_rows: indptr.len() - 1, n_cols, indptr, indices, values }
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().map(|&c| c as usize).zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    /// `x^T A` for a dense row vector `x`.
    pub fn left_multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += xi * v;
                }
            }
        }
        out
    }

    /// Coordinate text: a `rows cols nnz` header, then one `row col value`
    /// triplet per line (0-based, shortest round-trip float formatting).
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                writeln!(out, "{i} {j} {v}")?;
            }
        }
        Ok(())
    }

    pub fn read_coordinate<R: std::io::BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (n_rows, n_cols, nnz) = match lines.next() {
            Some((_, line)) => {
                let line = line?;
                let f: Vec<usize> = line
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| Error::parse(1, "bad coordinate header")))
                    .collect::<Result<_>>()?;
                match f[..] {
                    [r, c, n] => (r, c, n),
                    _ => return Err(Error::parse(1, "header must be `rows cols nnz`")),
                }
            }
            None => return Err(Error::parse(1, "empty coordinate file")),
        };
        let mut rows = vec![Vec::new(); n_rows];
        let mut seen = 0;
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::parse(idx + 1, "expected `row col value`");
            let mut it = line.split_whitespace();
            let r: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let c: u32 = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let v: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            if r >= n_rows || c as usize >= n_cols {
                return Err(Error::parse(idx + 1, "index outside declared dimensions"));
            }
            rows[r].push((c, v));
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::parse(1, format!("header declares {nnz} entries, found {seen}")));
        }
        Ok(CsrMatrix::from_rows(n_cols, rows))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransitionOptions {
    /// Choose among the other members of the hyperedge (`1/(d(e)-1)`)
    /// instead of all members. A size-1 edge then keeps the walker in place.
    pub exclude_self: bool,
}

#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    matrix: CsrMatrix,
    author: Vec<bool>,
    dead_rows: Vec<NodeId>,
}

impl TransitionMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn node_count(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Zero-degree nodes whose rows are all zero.
    pub fn dead_rows(&self) -> &[NodeId] {
        &self.dead_rows
    }

    pub fn is_author(&self, v: NodeId) -> bool {
        self.author[v.index()]
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> f64 {
        self.matrix.get(from.index(), to.index())
    }

    fn check_endpoint(&self, v: NodeId) -> Result<()> {
        match self.author.get(v.index()) {
            None => Err(Error::Lookup(format!("no node with id {v}"))),
            Some(true) => Err(Error::Domain(format!(
                "node {v} is an author; author-mediated transitions need concept endpoints"
            ))),
            Some(false) => Ok(()),
        }
    }

    /// Probability mass over all nodes after `steps` steps from `source`
    /// where every intermediate node is an author.
    pub fn author_mediated_row(&self, source: NodeId, steps: usize) -> Result<Vec<f64>> {
        self.check_endpoint(source)?;
        if steps < 2 {
            return Err(Error::Domain(format!("author-mediated walks need at least 2 steps, got {steps}")));
        }
        let n = self.node_count();
        let mut mass = vec![0.0; n];
        for (j, v) in self.matrix.row(source.index()) {
            if self.author[j] {
                mass[j] = v;
            }
        }
        for _ in 0..steps - 2 {
            mass = self.matrix.left_multiply(&mass);
            for (m, &is_author) in mass.iter_mut().zip(&self.author) {
                if !is_author {
                    *m = 0.0;
                }
            }
        }
        Ok(self.matrix.left_multiply(&mass))
    }

    /// P(n_steps = target, n_1..n_{steps-1} all authors | n_0 = source).
    pub fn author_mediated_transition(&self, source: NodeId, target: NodeId, steps: usize) -> Result<f64> {
        self.check_endpoint(target)?;
        Ok(self.author_mediated_row(source, steps)?[target.index()])
    }

    /// Average of the two-step author-mediated probabilities in both directions.
    pub fn symmetric_length2_score(&self, w1: NodeId, w2: NodeId) -> Result<f64> {
        let forward = self.author_mediated_transition(w1, w2, 2)?;
        let backward = self.author_mediated_transition(w2, w1, 2)?;
        Ok(0.5 * (forward + backward))
    }
}

pub fn transition_matrix(h: &Hypergraph, opts: TransitionOptions) -> TransitionMatrix {
    let n = h.node_count();
    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let v = NodeId::from(i);
            let edges = h.incident_edges(v);
            if edges.is_empty() {
                return Vec::new();
            }
            let pick_edge = 1.0 / edges.len() as f64;
            let mut row = Vec::new();
            for &e in edges {
                let members = h.members(e);
                if opts.exclude_self {
                    if members.len() == 1 {
                        row.push((v.0, pick_edge));
                        continue;
                    }
                    let w = pick_edge / (members.len() - 1) as f64;
                    row.extend(members.iter().filter(|&&u| u != v).map(|&u| (u.0, w)));
                } else {
                    let w = pick_edge / members.len() as f64;
                    row.extend(members.iter().map(|&u| (u.0, w)));
                }
            }
            row
        })
        .collect();
    let dead_rows = h.node_ids().filter(|&v| h.node_degree(v) == 0).collect();
    TransitionMatrix { matrix: CsrMatrix::from_rows(n, rows), author: h.author_mask(), dead_rows }
}
