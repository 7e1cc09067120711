//! Independent restatement of the NaQ episode contract.

use std::collections::{HashMap, HashSet};

use naq::episodes::Episode;
use naq::similarity::SimilarityIndex;

/// Describes the first violated invariant, if any.
pub fn naq_violation(ep: &Episode, index: &SimilarityIndex, q: usize, dropped: bool) -> Option<String> {
    if ep.k != 1 || ep.support.len() != ep.n {
        return Some(format!("support size {} for n={} k={}", ep.support.len(), ep.n, ep.k));
    }
    let nodes: HashSet<usize> = ep.support.iter().map(|s| s.0).collect();
    if nodes.len() != ep.n {
        return Some("support nodes repeat".into());
    }
    let mut labels: Vec<usize> = ep.support.iter().map(|s| s.1).collect();
    labels.sort_unstable();
    if labels != (0..ep.n).collect::<Vec<_>>() {
        return Some(format!("support pseudo-labels {labels:?}"));
    }
    if ep.query.len() > ep.n * q {
        return Some(format!("{} queries for n={} q={q}", ep.query.len(), ep.n));
    }
    for &(node, pl) in &ep.query {
        let Some(anchor) = ep.support.iter().find(|s| s.1 == pl).map(|s| s.0) else {
            return Some(format!("query label {pl} has no anchor"));
        };
        if node == anchor {
            return Some(format!("query {node} is its own anchor"));
        }
        if !index.neighbors(anchor).iter().take(q).any(|n| n.0 == node) {
            return Some(format!("query {node} is not among the top {q} of {anchor}"));
        }
    }
    if dropped {
        let mut by_node: HashMap<usize, HashSet<usize>> = HashMap::new();
        for &(node, pl) in &ep.query {
            by_node.entry(node).or_default().insert(pl);
        }
        if by_node.values().any(|s| s.len() > 1) {
            return Some("a query node survives under two pseudo-labels".into());
        }
    } else {
        let want: usize = ep.support.iter().map(|s| index.neighbors(s.0).len().min(q)).sum();
        if ep.query.len() != want {
            return Some(format!("{} queries, expected {want}", ep.query.len()));
        }
    }
    ep.validate().err().map(|e| e.to_string())
}
