//! Per-node top-k similarity indices over raw features.
//!
//! Scores are computed pairwise in `f64` over a sparse copy of the feature
//! rows. The sparse kernels visit nonzero coordinates in ascending order, so
//! every score is bit-identical to [`score`] on the dense rows; ranking is by
//! descending score with ties broken by ascending node id.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::{self, Reader};

pub const INDEX_MAGIC: &[u8; 4] = b"NAQS";

/// Neighbors kept per node when nothing else is configured.
pub const DEFAULT_K: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Jaccard,
    NegEuclidean,
    /// Rows of a graph diffusion matrix; see [`crate::diffusion`].
    Diffusion,
}

impl Metric {
    pub fn tag(self) -> u8 {
        match self {
            Metric::Cosine => 0,
            Metric::Jaccard => 1,
            Metric::NegEuclidean => 2,
            Metric::Diffusion => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Metric> {
        Some(match tag {
            0 => Metric::Cosine,
            1 => Metric::Jaccard,
            2 => Metric::NegEuclidean,
            3 => Metric::Diffusion,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Jaccard => "jaccard",
            Metric::NegEuclidean => "neg_euclidean",
            Metric::Diffusion => "diffusion",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Metric::Cosine, Metric::Jaccard, Metric::NegEuclidean, Metric::Diffusion]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// Similarity of two feature vectors.
///
/// Cosine is 0 when either vector is zero. Jaccard treats entries as set
/// membership and is 0 for two empty sets. Negative Euclidean is `-||x - y||`.
pub fn score(metric: Metric, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("vector lengths {} and {}", x.len(), y.len())));
    }
    match metric {
        Metric::Cosine => {
            let mut dot = 0.0;
            for (a, b) in x.iter().zip(y.iter()) {
                dot += a * b;
            }
            Ok(cosine_from_parts(dot, l2_norm(x.iter()), l2_norm(y.iter())))
        }
        Metric::Jaccard => {
            if !is_binary(x.iter()) || !is_binary(y.iter()) {
                return Err(Error::domain("jaccard requires binary features"));
            }
            let inter = x.iter().zip(y.iter()).filter(|(a, b)| **a == 1.0 && **b == 1.0).count();
            let union = x.iter().zip(y.iter()).filter(|(a, b)| **a == 1.0 || **b == 1.0).count();
            Ok(jaccard_from_counts(inter, union))
        }
        Metric::NegEuclidean => {
            let mut sq = 0.0;
            for (a, b) in x.iter().zip(y.iter()) {
                let diff = a - b;
                sq += diff * diff;
            }
            Ok(-sq.sqrt())
        }
        Metric::Diffusion => Err(Error::domain(
            "diffusion scores come from the graph, not from feature pairs",
        )),
    }
}

fn l2_norm<'a>(it: impl Iterator<Item = &'a f64>) -> f64 {
    let mut s = 0.0;
    for v in it {
        s += v * v;
    }
    s.sqrt()
}

fn cosine_from_parts(dot: f64, nx: f64, ny: f64) -> f64 {
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot / (nx * ny)
    }
}

fn jaccard_from_counts(inter: usize, union: usize) -> f64 {
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn is_binary<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
    it.all(|&v| v == 0.0 || v == 1.0)
}

/// Ranking order: higher score first, then lower node id.
pub fn rank_cmp(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Selects the `k` best candidates under [`rank_cmp`], sorted.
pub fn top_k(mut candidates: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    if candidates.len() > k {
        if k == 0 {
            return Vec::new();
        }
        candidates.select_nth_unstable_by(k - 1, rank_cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_cmp);
    candidates
}

/// Top-k neighbor lists for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityIndex {
    metric: Metric,
    k: usize,
    lists: Vec<Vec<(usize, f64)>>,
}

impl SimilarityIndex {
    /// Wraps precomputed lists, checking the index invariants.
    pub fn from_lists(metric: Metric, k: usize, lists: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = lists.len();
        for (u, list) in lists.iter().enumerate() {
            if list.len() > k {
                return Err(Error::domain(format!("list of node {u} longer than k = {k}")));
            }
            for (pos, &(v, s)) in list.iter().enumerate() {
                if v >= n {
                    return Err(Error::Bounds { what: "neighbor id", index: v, len: n });
                }
                if v == u {
                    return Err(Error::domain(format!("node {u} lists itself")));
                }
                if !s.is_finite() {
                    return Err(Error::numeric(format!("non-finite score in list of node {u}")));
                }
                if pos > 0 && rank_cmp(&list[pos - 1], &(v, s)) != Ordering::Less {
                    return Err(Error::domain(format!("list of node {u} is not strictly ranked")));
                }
            }
        }
        Ok(SimilarityIndex { metric, k, lists })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_nodes(&self) -> usize {
        self.lists.len()
    }

    /// Ranked `(node, score)` neighbors of `u`.
    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.lists[u]
    }

    pub fn lists(&self) -> &[Vec<(usize, f64)>] {
        &self.lists
    }

    /// Copy with every score rounded to `f32`, i.e. what a cache file
    /// round-trip yields.
    pub fn to_f32_precision(&self) -> SimilarityIndex {
        let lists = self
            .lists
            .iter()
            .map(|l| l.iter().map(|&(v, s)| (v, s as f32 as f64)).collect())
            .collect();
        SimilarityIndex { metric: self.metric, k: self.k, lists }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&io::usize_to_u32(self.n_nodes(), "n_nodes")?.to_le_bytes());
        out.extend_from_slice(&io::usize_to_u32(self.k, "k")?.to_le_bytes());
        out.push(self.metric.tag());
        for list in &self.lists {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for &(v, s) in list {
                out.extend_from_slice(&(v as u32).to_le_bytes());
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.magic(INDEX_MAGIC)?;
        let n = r.u32()? as usize;
        let k = r.u32()? as usize;
        let tag = r.u8()?;
        let metric = Metric::from_tag(tag).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("unknown metric tag {tag}"),
        })?;
        let mut lists = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let v = r.u32()? as usize;
                let s = r.f32()? as f64;
                list.push((v, s));
            }
            lists.push(list);
        }
        r.finish()?;
        SimilarityIndex::from_lists(metric, k, lists)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_bytes(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&io::read_bytes(path)?, path)
    }
}

/// Nonzero entries of each feature row, in ascending column order.
struct SparseRows {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    norms: Vec<f64>,
}

impl SparseRows {
    fn new(x: &Array2<f64>) -> Self {
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut norms = Vec::with_capacity(x.nrows());
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j as u32);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
            norms.push(l2_norm(vals[offsets[offsets.len() - 2]..].iter()));
        }
        SparseRows { offsets, cols, vals, norms }
    }

    fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    fn dot(&self, i: usize, j: usize) -> f64 {
        let ((ci, vi), (cj, vj)) = (self.row(i), self.row(j));
        let (mut a, mut b, mut s) = (0, 0, 0.0);
        while a < ci.len() && b < cj.len() {
            match ci[a].cmp(&cj[b]) {
                Ordering::Less => a += 1,
                Ordering::Greater => b += 1,
                Ordering::Equal => {
                    s += vi[a] * vj[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        s
    }

    fn intersection(&self, i: usize, j: usize) -> usize {
        let (ci, cj) = (self.row(i).0, self.row(j).0);
        let (mut a, mut b, mut n) = (0, 0, 0);
        while a < ci.len() && b < cj.len() {
            match ci[a].cmp(&cj[b]) {
                Ordering::Less => a += 1,
                Ordering::Greater => b += 1,
                Ordering::Equal => {
                    n += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        n
    }

    fn sq_distance(&self, i: usize, j: usize) -> f64 {
        let ((ci, vi), (cj, vj)) = (self.row(i), self.row(j));
        let (mut a, mut b, mut s) = (0, 0, 0.0);
        loop {
            let diff = match (ci.get(a), cj.get(b)) {
                (None, None) => break,
                (Some(_), None) => {
                    a += 1;
                    vi[a - 1]
                }
                (None, Some(_)) => {
                    b += 1;
                    -vj[b - 1]
                }
                (Some(x), Some(y)) => match x.cmp(y) {
                    Ordering::Less => {
                        a += 1;
                        vi[a - 1]
                    }
                    Ordering::Greater => {
                        b += 1;
                        -vj[b - 1]
                    }
                    Ordering::Equal => {
                        a += 1;
                        b += 1;
                        vi[a - 1] - vj[b - 1]
                    }
                },
            };
            s += diff * diff;
        }
        s
    }

    fn score(&self, metric: Metric, i: usize, j: usize) -> f64 {
        match metric {
            Metric::Cosine => cosine_from_parts(self.dot(i, j), self.norms[i], self.norms[j]),
            Metric::Jaccard => {
                let inter = self.intersection(i, j);
                let union = self.row(i).0.len() + self.row(j).0.len() - inter;
                jaccard_from_counts(inter, union)
            }
            Metric::NegEuclidean => -self.sq_distance(i, j).sqrt(),
            Metric::Diffusion => unreachable!("rejected by build_index"),
        }
    }
}

/// Builds the top-`k` index of `g`'s features under a feature metric,
/// processing `batch` rows per parallel work item. The result does not
/// depend on `batch`.
pub fn build_index(g: &Graph, metric: Metric, k: usize, batch: usize) -> Result<SimilarityIndex> {
    build_index_from_features(g.features(), metric, k, batch)
}

pub fn build_index_from_features(
    x: &Array2<f64>,
    metric: Metric,
    k: usize,
    batch: usize,
) -> Result<SimilarityIndex> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if batch == 0 {
        return Err(Error::domain("batch must be at least 1"));
    }
    match metric {
        Metric::Diffusion => {
            return Err(Error::domain("use diffusion::diffusion_index for the diffusion metric"))
        }
        Metric::Jaccard if !is_binary(x.iter()) => {
            return Err(Error::domain("jaccard requires binary features"))
        }
        _ => {}
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("features contain non-finite values"));
    }
    let n = x.nrows();
    let rows = SparseRows::new(x);
    let starts: Vec<usize> = (0..n).step_by(batch).collect();
    let lists: Vec<Vec<(usize, f64)>> = starts
        .par_iter()
        .flat_map_iter(|&start| {
            let rows = &rows;
            (start..(start + batch).min(n)).map(move |i| {
                let candidates = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (j, rows.score(metric, i, j)))
                    .collect();
                top_k(candidates, k)
            })
        })
        .collect();
    Ok(SimilarityIndex { metric, k, lists })
}
