//! Personalized-PageRank graph diffusion as a similarity index.
//!
//! `S = sum_{k=0..K} alpha (1 - alpha)^k T^k` with the self-loop–augmented
//! symmetric transition matrix
//! `T = (w I + D)^{-1/2} (w I + A) (w I + D)^{-1/2}`.
//!
//! Each row of `S` is advanced independently as a sparse vector
//! (`v_{k+1} = v_k T`), with entries of magnitude below `prune_eps` dropped
//! after every step. Within a row, contributions to an entry are summed in
//! ascending source order and ascending power, so the result does not depend
//! on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::similarity::{top_k, Metric, SimilarityIndex, DEFAULT_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionConfig {
    /// Teleport probability.
    pub alpha: f64,
    pub w_loop: f64,
    /// Highest power of `T` included.
    pub truncation: usize,
    pub topk: usize,
    pub prune_eps: f64,
    /// Upper bound on stored entries of a row accumulator; `None` is unbounded.
    pub max_row_nnz: Option<usize>,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            alpha: 0.1,
            w_loop: 1.0,
            truncation: 30,
            topk: DEFAULT_K,
            prune_eps: 1e-7,
            max_row_nnz: None,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.w_loop >= 0.0 && self.w_loop.is_finite()) {
            return Err(Error::domain("w_loop must be >= 0"));
        }
        if self.topk == 0 {
            return Err(Error::domain("topk must be at least 1"));
        }
        if self.prune_eps.is_nan() || self.prune_eps < 0.0 {
            return Err(Error::domain("prune_eps must be >= 0"));
        }
        Ok(())
    }
}

/// `theta_k = alpha (1 - alpha)^k` for `k = 0..=truncation`.
pub fn ppr_coefficients(alpha: f64, truncation: usize) -> Vec<f64> {
    (0..=truncation).map(|k| alpha * (1.0 - alpha).powi(k as i32)).collect()
}

/// Square CSR matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        SparseMatrix { n, offsets, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.offsets[i]..self.offsets[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut out = ndarray::Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }
}

/// Symmetric normalized transition matrix with self-loop weight `w_loop`.
pub fn transition_matrix(g: &Graph, w_loop: f64) -> Result<SparseMatrix> {
    let n = g.n_nodes();
    let mut inv_sqrt = Vec::with_capacity(n);
    for u in 0..n {
        let mass = w_loop + g.degree(u) as f64;
        if mass == 0.0 {
            return Err(Error::domain(format!(
                "node {u} is isolated and w_loop = 0; transition matrix undefined"
            )));
        }
        inv_sqrt.push(1.0 / mass.sqrt());
    }
    let rows = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(g.degree(i) + 1);
            let mut diag_done = w_loop == 0.0;
            for &j in g.neighbors(i) {
                if !diag_done && j > i {
                    row.push((i, inv_sqrt[i] * w_loop * inv_sqrt[i]));
                    diag_done = true;
                }
                row.push((j, inv_sqrt[i] * 1.0 * inv_sqrt[j]));
            }
            if !diag_done {
                row.push((i, inv_sqrt[i] * w_loop * inv_sqrt[i]));
            }
            row
        })
        .collect();
    Ok(SparseMatrix::from_rows(rows))
}

struct Scratch {
    next: Vec<f64>,
    acc: Vec<f64>,
    in_next: Vec<bool>,
    in_acc: Vec<bool>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            next: vec![0.0; n],
            acc: vec![0.0; n],
            in_next: vec![false; n],
            in_acc: vec![false; n],
        }
    }
}

fn diffusion_row(
    t: &SparseMatrix,
    theta: &[f64],
    cfg: &DiffusionConfig,
    i: usize,
    s: &mut Scratch,
) -> Result<Vec<(usize, f64)>> {
    let mut acc_touched = vec![i];
    s.in_acc[i] = true;
    s.acc[i] += theta[0] * 1.0;
    let mut current: Vec<(usize, f64)> = vec![(i, 1.0)];
    let mut touched = Vec::new();
    for (step, &weight) in theta.iter().enumerate().skip(1) {
        touched.clear();
        for &(m, vm) in &current {
            for (j, tmj) in t.row(m) {
                if !s.in_next[j] {
                    s.in_next[j] = true;
                    touched.push(j);
                }
                s.next[j] += vm * tmj;
            }
        }
        touched.sort_unstable();
        current.clear();
        for &j in &touched {
            let v = s.next[j];
            s.next[j] = 0.0;
            s.in_next[j] = false;
            if v.abs() < cfg.prune_eps {
                continue;
            }
            current.push((j, v));
            if !s.in_acc[j] {
                s.in_acc[j] = true;
                acc_touched.push(j);
            }
            s.acc[j] += weight * v;
        }
        if let Some(limit) = cfg.max_row_nnz {
            if acc_touched.len() > limit {
                for &j in &acc_touched {
                    s.acc[j] = 0.0;
                    s.in_acc[j] = false;
                }
                return Err(Error::Resource(format!(
                    "row {i} accumulator reached {} entries at power {step} (limit {limit}); \
                     increase prune_eps",
                    acc_touched.len()
                )));
            }
        }
        if current.is_empty() {
            break;
        }
    }
    acc_touched.sort_unstable();
    let row = acc_touched
        .iter()
        .map(|&j| {
            let v = s.acc[j];
            s.acc[j] = 0.0;
            s.in_acc[j] = false;
            (j, v)
        })
        .collect();
    Ok(row)
}

/// The truncated diffusion matrix, row by row.
pub fn diffusion_matrix(g: &Graph, cfg: &DiffusionConfig) -> Result<SparseMatrix> {
    cfg.validate()?;
    let t = transition_matrix(g, cfg.w_loop)?;
    let theta = ppr_coefficients(cfg.alpha, cfg.truncation);
    let n = g.n_nodes();
    let rows = (0..n)
        .into_par_iter()
        .map_init(|| Scratch::new(n), |s, i| diffusion_row(&t, &theta, cfg, i, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseMatrix::from_rows(rows))
}

/// Top-`cfg.topk` entries of every diffusion row, excluding the node itself
/// and zero entries.
pub fn diffusion_index(g: &Graph, cfg: &DiffusionConfig) -> Result<SimilarityIndex> {
    let s = diffusion_matrix(g, cfg)?;
    let lists = (0..s.n())
        .into_par_iter()
        .map(|i| {
            let cands = s.row(i).filter(|&(j, v)| j != i && v > 0.0).collect();
            top_k(cands, cfg.topk)
        })
        .collect();
    SimilarityIndex::from_lists(Metric::Diffusion, cfg.topk, lists)
}
