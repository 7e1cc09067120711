//! Undirected attributed graphs, labels and class splits.

mod bias;
mod load;
mod sbm;

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bias::{
    inject_feature_noise, inject_label_noise, inject_structure_noise, simulate_imbalance,
    ImbalanceMode, Imbalanced,
};
pub use load::{load_graph, parse_edges, parse_labels, parse_split, write_edges, write_labels};
pub use sbm::{default_split, generate_sbm, SbmSpec};

/// Immutable undirected graph in compressed sparse row form with dense
/// node features.
///
/// Every undirected edge is stored in both endpoint rows; rows are sorted,
/// contain no duplicates and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    features: Array2<f64>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Edges are symmetrized,
    /// deduplicated and self-loops dropped. `n_nodes` is taken from the
    /// feature matrix row count.
    pub fn from_edges<I>(edges: I, features: Array2<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let n = features.nrows();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::Bounds {
                        what: "node id",
                        index: x,
                        len: n,
                    });
                }
            }
            if u == v {
                continue;
            }
            rows[u].push(v);
            rows[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }
        Ok(Graph {
            offsets,
            targets,
            features,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n_nodes()).map(|u| self.degree(u)).collect()
    }

    /// Sorted neighbor ids of `u`.
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n_nodes() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// Same topology, new features.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Graph> {
        if features.nrows() != self.n_nodes() {
            return Err(Error::shape(format!(
                "feature rows {} != n_nodes {}",
                features.nrows(),
                self.n_nodes()
            )));
        }
        Ok(Graph {
            offsets: self.offsets.clone(),
            targets: self.targets.clone(),
            features,
        })
    }

    /// Same features, new edge set.
    pub fn with_edges<I>(&self, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Graph::from_edges(edges, self.features.clone())
    }

    /// True when every feature entry is exactly 0 or 1.
    pub fn has_binary_features(&self) -> bool {
        self.features.iter().all(|&x| x == 0.0 || x == 1.0)
    }

    /// Subgraph induced by nodes with `keep[u] == true`. Node ids are
    /// compacted in ascending order; the returned map sends old ids to new.
    pub fn induced_subgraph(&self, keep: &[bool]) -> (Graph, Vec<Option<usize>>) {
        assert_eq!(keep.len(), self.n_nodes());
        let mut id_map = vec![None; keep.len()];
        let mut next = 0;
        for (u, &k) in keep.iter().enumerate() {
            if k {
                id_map[u] = Some(next);
                next += 1;
            }
        }
        let rows: Vec<usize> = (0..keep.len()).filter(|&u| keep[u]).collect();
        let features = self.features.select(ndarray::Axis(0), &rows);
        let edges = self.edges().filter_map(|(u, v)| Some((id_map[u]?, id_map[v]?)));
        let g = Graph::from_edges(edges, features).expect("compacted ids are in range");
        (g, id_map)
    }
}

/// Class-id sets for meta-training (`base`), validation and downstream
/// evaluation (`target`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub base: Vec<usize>,
    pub val: Vec<usize>,
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Base,
    Val,
    Target,
}

impl Split {
    pub fn classes(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Base => &self.base,
            SplitKind::Val => &self.val,
            SplitKind::Target => &self.target,
        }
    }
}

/// Node labels plus the class split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    labels: Vec<usize>,
    n_classes: usize,
    split: Split,
}

impl LabelSet {
    pub fn new(labels: Vec<usize>, n_classes: usize, split: Split) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&c| c >= n_classes) {
            return Err(Error::Bounds {
                what: "class id",
                index: bad,
                len: n_classes,
            });
        }
        let mut seen = BTreeSet::new();
        for &c in split.base.iter().chain(&split.val).chain(&split.target) {
            if c >= n_classes {
                return Err(Error::Bounds {
                    what: "split class id",
                    index: c,
                    len: n_classes,
                });
            }
            if !seen.insert(c) {
                return Err(Error::domain(format!(
                    "class {c} appears in more than one split set"
                )));
            }
        }
        if let Some(&c) = labels.iter().find(|c| !seen.contains(c)) {
            return Err(Error::domain(format!(
                "class {c} is labelled but belongs to no split set"
            )));
        }
        Ok(LabelSet {
            labels,
            n_classes,
            split,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    /// Same labels, different split.
    pub fn with_split(&self, split: Split) -> Result<LabelSet> {
        LabelSet::new(self.labels.clone(), self.n_classes, split)
    }

    /// Member node ids for each class, ascending.
    pub fn members_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes];
        for (node, &c) in self.labels.iter().enumerate() {
            out[c].push(node);
        }
        out
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_classes];
        for &c in &self.labels {
            out[c] += 1;
        }
        out
    }

    /// Fraction of edges whose endpoints share a label.
    pub fn homophily(&self, g: &Graph) -> f64 {
        let (mut same, mut total) = (0usize, 0usize);
        for (u, v) in g.edges() {
            total += 1;
            if self.labels[u] == self.labels[v] {
                same += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            same as f64 / total as f64
        }
    }
}
