//! Diagnostics: how class-consistent an index's neighbors are, and
//! embedding dumps for external plotting.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::graph::{write_labels, Graph, LabelSet};
use crate::io;
use crate::similarity::SimilarityIndex;

/// Raw-feature centroid of each class; `None` for classes without nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    by_class: Vec<Option<Array1<f64>>>,
}

impl Centroids {
    pub fn get(&self, class: usize) -> Option<&Array1<f64>> {
        self.by_class.get(class)?.as_ref()
    }

    pub fn n_classes(&self) -> usize {
        self.by_class.len()
    }

    /// Cosine similarity between two class centroids (0 if either is zero).
    pub fn cosine(&self, a: usize, b: usize) -> Option<f64> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        let (nx, ny) = (x.dot(x).sqrt(), y.dot(y).sqrt());
        Some(if nx == 0.0 || ny == 0.0 { 0.0 } else { x.dot(y) / (nx * ny) })
    }
}

pub fn class_centroids(g: &Graph, ls: &LabelSet) -> Result<Centroids> {
    if g.n_nodes() != ls.n_nodes() {
        return Err(Error::shape(format!("{} nodes but {} labels", g.n_nodes(), ls.n_nodes())));
    }
    let by_class = ls
        .members_by_class()
        .into_iter()
        .enumerate()
        .map(|(c, nodes)| {
            if nodes.is_empty() {
                log::warn!("class {c} has no nodes; no centroid");
                return None;
            }
            let mut sum = Array1::<f64>::zeros(g.dim());
            for &v in &nodes {
                sum += &g.features().row(v);
            }
            Some(sum / nodes.len() as f64)
        })
        .collect();
    Ok(Centroids { by_class })
}

/// The `ceil(pct * C)` least populous non-empty classes (at least one),
/// ranked by node count ascending, ties by class id.
pub fn tail_classes(ls: &LabelSet, pct: f64) -> Vec<usize> {
    let sizes = ls.class_sizes();
    let mut classes: Vec<usize> = (0..ls.n_classes()).filter(|&c| sizes[c] > 0).collect();
    classes.sort_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(a.cmp(&b)));
    let take = ((pct * classes.len() as f64).ceil() as usize).clamp(1, classes.len().max(1));
    classes.truncate(take);
    classes
}

/// Average, over eligible nodes, of the mean centroid cosine between a node's
/// class and the classes of its first `top` index neighbors. With
/// `restrict_tail_pct = Some(p)` only nodes of the `p` tail classes count.
/// Nodes without neighbors are skipped.
pub fn class_level_similarity(
    index: &SimilarityIndex,
    ls: &LabelSet,
    centroids: &Centroids,
    top: usize,
    restrict_tail_pct: Option<f64>,
) -> Result<f64> {
    if top == 0 || top > index.k() {
        return Err(Error::domain(format!("top = {top} must be in 1..={}", index.k())));
    }
    if index.n_nodes() != ls.n_nodes() {
        return Err(Error::shape("index and labels cover different node counts"));
    }
    let eligible: Vec<bool> = match restrict_tail_pct {
        None => vec![true; ls.n_classes()],
        Some(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::domain(format!("tail fraction {p} not in (0, 1]")));
            }
            let mut e = vec![false; ls.n_classes()];
            for c in tail_classes(ls, p) {
                e[c] = true;
            }
            e
        }
    };
    let (mut total, mut count) = (0.0, 0usize);
    for v in 0..index.n_nodes() {
        let cv = ls.label(v);
        if !eligible[cv] {
            continue;
        }
        let neigh = &index.neighbors(v)[..index.neighbors(v).len().min(top)];
        let sims: Vec<f64> = neigh.iter().filter_map(|&(u, _)| centroids.cosine(cv, ls.label(u))).collect();
        if sims.is_empty() {
            continue;
        }
        total += sims.iter().sum::<f64>() / sims.len() as f64;
        count += 1;
    }
    if count == 0 {
        return Err(Error::domain("no eligible node has neighbors"));
    }
    Ok(total / count as f64)
}

/// Writes embeddings as an `NAQF` matrix plus a `node<TAB>class` sidecar at
/// `<path>.labels.tsv`. Returns the sidecar path.
pub fn dump_embeddings(path: &Path, emb: &Array2<f64>, labels: &[usize]) -> Result<PathBuf> {
    if emb.nrows() != labels.len() {
        return Err(Error::shape(format!("{} embedding rows, {} labels", emb.nrows(), labels.len())));
    }
    io::write_matrix(path, emb)?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".labels.tsv");
    let sidecar = PathBuf::from(sidecar);
    write_labels(&sidecar, labels)?;
    Ok(sidecar)
}
