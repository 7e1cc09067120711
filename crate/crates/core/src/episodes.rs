//! Training episode generation.
//!
//! A NaQ episode samples `N` distinct nodes uniformly as a 1-shot support
//! set, gives support node `i` pseudo-label `i`, and takes the top-`Q`
//! entries of that node's similarity list as its queries. Episode `t` draws
//! from its own random stream, so lists are reproducible and can be built in
//! parallel.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet};
use crate::io;
use crate::rng;
use crate::similarity::SimilarityIndex;

/// Queries per support node used for NaQ training.
pub const DEFAULT_QUERIES: usize = 10;
/// Episodes in a full training run.
pub const DEFAULT_EPISODES: usize = 16_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeMode {
    Naq,
    Supervised,
    GUmtra,
}

/// Graph augmentation applied to produce the query view of a g-UMTRA episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub drop_edge_rate: f64,
    pub drop_feature_rate: f64,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        check_rate(self.drop_edge_rate)?;
        check_rate(self.drop_feature_rate)
    }

    /// The augmented graph: DropEdge on stream 0, DropFeature on stream 1.
    pub fn apply(&self, g: &Graph) -> Result<Graph> {
        let dropped = drop_edge(g, self.drop_edge_rate, self.seed)?;
        let x = drop_feature(g.features(), self.drop_feature_rate, self.seed)?;
        dropped.with_features(x)
    }
}

/// One meta-training task. Support and query entries are `(node, pseudo_label)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub n: usize,
    pub k: usize,
    pub q: usize,
    pub mode: EpisodeMode,
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
    pub aug: Option<AugmentSpec>,
    /// Pseudo-labels that received fewer than `q` queries.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub short: Vec<usize>,
}

impl Episode {
    /// Checks the structural invariants every generator guarantees.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::domain(msg));
        if self.support.len() != self.n * self.k {
            return bad(format!("support has {} entries, expected {}", self.support.len(), self.n * self.k));
        }
        if self.query.len() > self.n * self.q {
            return bad(format!("query has {} entries, at most {} allowed", self.query.len(), self.n * self.q));
        }
        let mut per_label = vec![0usize; self.n];
        let mut seen = std::collections::HashSet::new();
        for &(node, pl) in &self.support {
            if pl >= self.n {
                return bad(format!("support pseudo-label {pl} >= n {}", self.n));
            }
            per_label[pl] += 1;
            if !seen.insert(node) {
                return bad(format!("support node {node} repeated"));
            }
        }
        if per_label.iter().any(|&c| c != self.k) {
            return bad(format!("pseudo-label counts {per_label:?}, expected {} each", self.k));
        }
        for &(node, pl) in &self.query {
            if pl >= self.n {
                return bad(format!("query pseudo-label {pl} >= n {}", self.n));
            }
            if self.mode == EpisodeMode::Naq && self.support.contains(&(node, pl)) {
                return bad(format!("query node {node} equals its own support anchor"));
            }
        }
        Ok(())
    }

    /// Number of query slots whose node appears under two or more pseudo-labels.
    pub fn overlapping_slots(&self) -> usize {
        let labels = labels_per_node(&self.query);
        self.query.iter().filter(|(node, _)| labels[node] > 1).count()
    }

    /// Removes every query node that appears under two or more pseudo-labels.
    pub fn drop_overlapping_queries(&mut self) {
        let labels = labels_per_node(&self.query);
        self.query.retain(|(node, _)| labels[node] < 2);
    }
}

fn labels_per_node(query: &[(usize, usize)]) -> HashMap<usize, usize> {
    let mut sets: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(node, pl) in query {
        let e = sets.entry(node).or_default();
        if !e.contains(&pl) {
            e.push(pl);
        }
    }
    sets.into_iter().map(|(k, v)| (k, v.len())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaqConfig {
    pub n_way: usize,
    pub q: usize,
    pub episodes: usize,
    pub drop_overlap: bool,
}

impl Default for NaqConfig {
    fn default() -> Self {
        NaqConfig {
            n_way: 5,
            q: DEFAULT_QUERIES,
            episodes: DEFAULT_EPISODES,
            drop_overlap: false,
        }
    }
}

fn sample_support(rng: &mut rng::Rng, n_nodes: usize, n_way: usize) -> Vec<(usize, usize)> {
    index::sample(rng, n_nodes, n_way)
        .into_iter()
        .enumerate()
        .map(|(pl, node)| (node, pl))
        .collect()
}

/// NaQ episodes from a precomputed similarity index.
pub fn generate_naq_episodes(
    index: &SimilarityIndex,
    cfg: &NaqConfig,
    seed: u64,
) -> Result<Vec<Episode>> {
    let n_nodes = index.n_nodes();
    if cfg.n_way < 2 {
        return Err(Error::domain("n_way must be at least 2"));
    }
    if cfg.q == 0 {
        return Err(Error::domain("q must be at least 1"));
    }
    if cfg.n_way > n_nodes {
        return Err(Error::domain(format!("n_way {} exceeds node count {n_nodes}", cfg.n_way)));
    }
    if index.k() < cfg.q {
        return Err(Error::domain(format!("index keeps {} neighbors, {} queries requested", index.k(), cfg.q)));
    }
    let episodes = (0..cfg.episodes)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t as u64);
            let support = sample_support(&mut rng, n_nodes, cfg.n_way);
            let mut query = Vec::with_capacity(cfg.n_way * cfg.q);
            let mut short = Vec::new();
            for &(node, pl) in &support {
                let neigh = index.neighbors(node);
                if neigh.len() < cfg.q {
                    short.push(pl);
                }
                query.extend(neigh.iter().take(cfg.q).map(|&(v, _)| (v, pl)));
            }
            let mut ep = Episode {
                n: cfg.n_way,
                k: 1,
                q: cfg.q,
                mode: EpisodeMode::Naq,
                support,
                query,
                aug: None,
                short,
            };
            if cfg.drop_overlap {
                ep.drop_overlapping_queries();
            }
            ep
        })
        .collect();
    Ok(episodes)
}

/// Ordinary supervised episodes over the base classes: `N` classes per
/// episode, `K + Q` distinct nodes per class, the first `K` as support.
pub fn generate_supervised_episodes(
    ls: &LabelSet,
    n_way: usize,
    k_shot: usize,
    q: usize,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Episode>> {
    if n_way < 2 || k_shot == 0 || q == 0 {
        return Err(Error::domain("need n_way >= 2, k_shot >= 1, q >= 1"));
    }
    let mut base = ls.split().base.clone();
    base.sort_unstable();
    if base.len() < n_way {
        return Err(Error::domain(format!("{n_way}-way episodes need {n_way} base classes, have {}", base.len())));
    }
    let members = ls.members_by_class();
    for &c in &base {
        if members[c].len() < k_shot + q {
            return Err(Error::domain(format!(
                "base class {c} has {} nodes, {} needed",
                members[c].len(),
                k_shot + q
            )));
        }
    }
    let out = (0..episodes)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t as u64);
            let classes = index::sample(&mut rng, base.len(), n_way).into_vec();
            let mut support = Vec::with_capacity(n_way * k_shot);
            let mut query = Vec::with_capacity(n_way * q);
            for (pl, ci) in classes.into_iter().enumerate() {
                let pool = &members[base[ci]];
                let picked = index::sample(&mut rng, pool.len(), k_shot + q).into_vec();
                support.extend(picked[..k_shot].iter().map(|&i| (pool[i], pl)));
                query.extend(picked[k_shot..].iter().map(|&i| (pool[i], pl)));
            }
            Episode {
                n: n_way,
                k: k_shot,
                q,
                mode: EpisodeMode::Supervised,
                support,
                query,
                aug: None,
                short: Vec::new(),
            }
        })
        .collect();
    Ok(out)
}

/// g-UMTRA episodes: `N` random support nodes whose queries are the same
/// nodes seen through an augmented graph. Each episode carries its own
/// augmentation seed derived from `aug.seed`.
pub fn generate_gumtra_episodes(
    n_nodes: usize,
    n_way: usize,
    episodes: usize,
    seed: u64,
    aug: AugmentSpec,
) -> Result<Vec<Episode>> {
    aug.validate()?;
    if n_way < 2 {
        return Err(Error::domain("n_way must be at least 2"));
    }
    if n_way > n_nodes {
        return Err(Error::domain(format!("n_way {n_way} exceeds node count {n_nodes}")));
    }
    let out = (0..episodes)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t as u64);
            let support = sample_support(&mut rng, n_nodes, n_way);
            Episode {
                n: n_way,
                k: 1,
                q: 1,
                mode: EpisodeMode::GUmtra,
                query: support.clone(),
                support,
                aug: Some(AugmentSpec {
                    seed: rng::derive_seed(aug.seed, t as u64),
                    ..aug
                }),
                short: Vec::new(),
            }
        })
        .collect();
    Ok(out)
}

/// Mean over episodes of the fraction of query slots whose node appears
/// under at least two pseudo-labels. Episodes without queries count as 0;
/// an empty list gives 0.
pub fn overlap_ratio(episodes: &[Episode]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    let total: f64 = episodes
        .iter()
        .map(|ep| {
            if ep.query.is_empty() {
                0.0
            } else {
                ep.overlapping_slots() as f64 / ep.query.len() as f64
            }
        })
        .sum();
    total / episodes.len() as f64
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::domain(format!("drop rate {rate} not in [0, 1)")));
    }
    Ok(())
}

/// Removes each undirected edge independently with probability `rate`.
/// One uniform draw per edge, edges in [`Graph::edges`] order.
pub fn drop_edge(g: &Graph, rate: f64, seed: u64) -> Result<Graph> {
    check_rate(rate)?;
    if rate == 0.0 {
        return Ok(g.clone());
    }
    let mut rng = rng::stream(seed, 0);
    let kept: Vec<_> = g.edges().filter(|_| rng.random::<f64>() >= rate).collect();
    g.with_edges(kept)
}

/// Zeroes each feature column independently with probability `rate`.
pub fn drop_feature(x: &Array2<f64>, rate: f64, seed: u64) -> Result<Array2<f64>> {
    check_rate(rate)?;
    let mut out = x.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    let mut rng = rng::stream(seed, 1);
    for mut col in out.columns_mut() {
        if rng.random::<f64>() < rate {
            col.fill(0.0);
        }
    }
    Ok(out)
}

/// Serializes episodes as JSON Lines.
pub fn encode_episodes(episodes: &[Episode]) -> Result<String> {
    let mut s = String::new();
    for ep in episodes {
        writeln!(s, "{}", serde_json::to_string(ep)?).unwrap();
    }
    Ok(s)
}

pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<()> {
    io::write_bytes(path, encode_episodes(episodes)?.as_bytes())
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>> {
    let text = io::read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
