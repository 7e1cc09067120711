//! Bias injectors: structure noise, feature noise, label noise and class
//! imbalance. All are identity at zero strength.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Graph, LabelSet};
use crate::error::{Error, Result};
use crate::rng;

fn check_fraction(p: f64, what: &str) -> Result<()> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::domain(format!("{what} must be a finite fraction >= 0, got {p}")));
    }
    Ok(())
}

/// Adds `round(p * |E|)` edges between uniformly drawn non-adjacent pairs.
///
/// Pairs are drawn as two independent uniform node ids and rejected when
/// they form a self-loop, an existing edge or an already added edge. At most
/// `100 * target` draws are made.
pub fn inject_structure_noise(g: &Graph, p: f64, seed: u64) -> Result<Graph> {
    check_fraction(p, "structure noise ratio")?;
    let target = (p * g.n_edges() as f64).round() as usize;
    if target == 0 {
        return Ok(g.clone());
    }
    let n = g.n_nodes();
    let free = n * n.saturating_sub(1) / 2 - g.n_edges();
    if target > free {
        return Err(Error::Capacity(format!(
            "cannot add {target} edges, only {free} non-adjacent pairs remain"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut added: Vec<(usize, usize)> = Vec::with_capacity(target);
    let mut seen = HashSet::with_capacity(target);
    let mut draws = 0usize;
    while added.len() < target {
        if draws == 100 * target {
            return Err(Error::Capacity(format!(
                "rejection sampling gave up after {draws} draws with {} of {target} edges added",
                added.len()
            )));
        }
        draws += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        let key = (u.min(v), u.max(v));
        if u == v || g.has_edge(u, v) || !seen.insert(key) {
            continue;
        }
        added.push(key);
    }
    g.with_edges(g.edges().chain(added))
}

/// Corrupts `round(p * n)` uniformly chosen nodes of a binary feature
/// matrix. For a corrupted node `v` each dimension flips with probability
/// equal to that node's feature density `sum_i X[v, i] / d`.
pub fn inject_feature_noise(g: &Graph, p: f64, seed: u64) -> Result<Graph> {
    check_fraction(p, "feature noise ratio")?;
    if p > 1.0 {
        return Err(Error::domain(format!("feature noise ratio {p} > 1")));
    }
    if !g.has_binary_features() {
        return Err(Error::domain("feature noise requires binary 0/1 features"));
    }
    let n = g.n_nodes();
    let count = (p * n as f64).round() as usize;
    if count == 0 {
        return Ok(g.clone());
    }
    let d = g.dim();
    let mut x = g.features().clone();
    let mut rng = rng::seeded(seed);
    for v in index::sample(&mut rng, n, count) {
        let mut row = x.row_mut(v);
        let density = if d == 0 { 0.0 } else { row.sum() / d as f64 };
        for x in row.iter_mut() {
            if rng.random::<f64>() < density {
                *x = 1.0 - *x;
            }
        }
    }
    g.with_features(x)
}

/// Replaces, with probability `p`, each base-class node's label by a
/// uniformly chosen different base class. Nodes are visited in id order.
pub fn inject_label_noise(ls: &LabelSet, p: f64, seed: u64) -> Result<LabelSet> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("label noise probability {p} not in [0, 1]")));
    }
    let mut base = ls.split().base.clone();
    base.sort_unstable();
    if p == 0.0 || base.len() < 2 {
        return Ok(ls.clone());
    }
    let mut rng = rng::seeded(seed);
    let mut labels = ls.labels().to_vec();
    for label in labels.iter_mut() {
        let Ok(pos) = base.binary_search(label) else {
            continue;
        };
        if rng.random::<f64>() < p {
            let mut pick = rng.random_range(0..base.len() - 1);
            if pick >= pos {
                pick += 1;
            }
            *label = base[pick];
        }
    }
    LabelSet::new(labels, ls.n_classes(), ls.split().clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImbalanceMode {
    /// Top 20% most populous classes (rounded up) stay whole.
    Pareto,
    /// Only the five most populous classes stay whole.
    Extreme,
}

/// Output of [`simulate_imbalance`].
#[derive(Debug, Clone)]
pub struct Imbalanced {
    pub graph: Graph,
    pub labels: LabelSet,
    /// Old node id to new node id; `None` for removed nodes.
    pub id_map: Vec<Option<usize>>,
    /// Classes kept whole, most populous first.
    pub head_classes: Vec<usize>,
}

/// Subsamples every non-head class down to `keep` nodes and deletes the
/// removed nodes with their incident edges.
///
/// Classes are ranked by node count descending, ties by class id. Which
/// nodes survive in a subsampled class is drawn uniformly from `seed`.
pub fn simulate_imbalance(
    g: &Graph,
    ls: &LabelSet,
    mode: ImbalanceMode,
    keep: usize,
    seed: u64,
) -> Result<Imbalanced> {
    if g.n_nodes() != ls.n_nodes() {
        return Err(Error::shape(format!(
            "graph has {} nodes, labels cover {}",
            g.n_nodes(),
            ls.n_nodes()
        )));
    }
    let members = ls.members_by_class();
    let mut ranked: Vec<usize> = (0..ls.n_classes()).filter(|&c| !members[c].is_empty()).collect();
    ranked.sort_by(|&a, &b| members[b].len().cmp(&members[a].len()).then(a.cmp(&b)));
    let n_head = match mode {
        ImbalanceMode::Pareto => (0.2 * ranked.len() as f64).ceil() as usize,
        ImbalanceMode::Extreme => 5.min(ranked.len()),
    };
    let head_classes = ranked[..n_head].to_vec();
    let mut is_head = vec![false; ls.n_classes()];
    for &c in &head_classes {
        is_head[c] = true;
    }

    let mut keep_mask = vec![true; g.n_nodes()];
    let mut rng = rng::seeded(seed);
    for (c, nodes) in members.iter().enumerate() {
        if is_head[c] || nodes.len() <= keep {
            continue;
        }
        for &v in nodes {
            keep_mask[v] = false;
        }
        for i in index::sample(&mut rng, nodes.len(), keep) {
            keep_mask[nodes[i]] = true;
        }
    }

    let (graph, id_map) = g.induced_subgraph(&keep_mask);
    let labels = ls
        .labels()
        .iter()
        .zip(&keep_mask)
        .filter(|(_, &k)| k)
        .map(|(&c, _)| c)
        .collect();
    let labels = LabelSet::new(labels, ls.n_classes(), ls.split().clone())?;
    Ok(Imbalanced {
        graph,
        labels,
        id_map,
        head_classes,
    })
}
