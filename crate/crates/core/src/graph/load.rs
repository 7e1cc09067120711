//! Dataset file formats.
//!
//! - edges: `u<TAB>v` per line, 0-based, `#` comments
//! - features: `NAQF` binary or CSV (see [`crate::io`])
//! - labels: `node<TAB>class` per line
//! - split: JSON object with integer arrays `base`, `val`, `target`

use std::fmt::Write as _;
use std::path::Path;

use super::{Graph, LabelSet, Split};
use crate::error::{Error, Result};
use crate::io;

pub fn load_graph(
    edges_path: &Path,
    features_path: &Path,
    labels_path: &Path,
    split_path: &Path,
) -> Result<(Graph, LabelSet)> {
    let label_text = io::read_text(labels_path)?;
    let n = count_labelled_nodes(&label_text, labels_path)?;
    let features = io::read_matrix(features_path)?;
    if features.nrows() != n {
        return Err(Error::shape(format!(
            "{} has {} feature rows but {} labels {} nodes",
            features_path.display(),
            features.nrows(),
            labels_path.display(),
            n
        )));
    }
    let edges = parse_edges(&io::read_text(edges_path)?, edges_path, n)?;
    let graph = Graph::from_edges(edges, features)?;
    let labels = parse_labels(&label_text, labels_path, n)?;
    let split = parse_split(&io::read_text(split_path)?)?;
    let n_classes = labels
        .iter()
        .chain(&split.base)
        .chain(&split.val)
        .chain(&split.target)
        .max()
        .map_or(0, |m| m + 1);
    let labels = LabelSet::new(labels, n_classes, split)?;
    Ok((graph, labels))
}

fn two_ids(line: &str, lineno: usize, path: &Path) -> Result<Option<(usize, usize)>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let mut it = line.split(['\t', ' ']).filter(|s| !s.is_empty());
    let mut next = || -> Result<usize> {
        let tok = it.next().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: "expected two tab-separated ids".into(),
        })?;
        tok.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: format!("invalid id {tok:?}"),
        })
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: "trailing fields".into(),
        });
    }
    Ok(Some((a, b)))
}

/// Parses an edge list, checking ids against `n_nodes`.
pub fn parse_edges(text: &str, path: &Path, n_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some((u, v)) = two_ids(line, i + 1, path)? {
            for x in [u, v] {
                if x >= n_nodes {
                    return Err(Error::Bounds {
                        what: "node id",
                        index: x,
                        len: n_nodes,
                    });
                }
            }
            out.push((u, v));
        }
    }
    Ok(out)
}

fn count_labelled_nodes(text: &str, path: &Path) -> Result<usize> {
    let mut n = 0;
    for (i, line) in text.lines().enumerate() {
        if let Some((node, _)) = two_ids(line, i + 1, path)? {
            n = n.max(node + 1);
        }
    }
    Ok(n)
}

/// Parses a label file; every node in `0..n_nodes` must be labelled exactly once.
pub fn parse_labels(text: &str, path: &Path, n_nodes: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; n_nodes];
    for (i, line) in text.lines().enumerate() {
        if let Some((node, class)) = two_ids(line, i + 1, path)? {
            let slot = labels.get_mut(node).ok_or(Error::Bounds {
                what: "node id",
                index: node,
                len: n_nodes,
            })?;
            if slot.replace(class).is_some() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("node {node} labelled twice"),
                });
            }
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(node, c)| c.ok_or_else(|| Error::domain(format!("node {node} has no label"))))
        .collect()
}

pub fn parse_split(text: &str) -> Result<Split> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_edges(path: &Path, g: &Graph) -> Result<()> {
    let mut s = String::new();
    for (u, v) in g.edges() {
        writeln!(s, "{u}\t{v}").unwrap();
    }
    io::write_bytes(path, s.as_bytes())
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut s = String::new();
    for (node, c) in labels.iter().enumerate() {
        writeln!(s, "{node}\t{c}").unwrap();
    }
    io::write_bytes(path, s.as_bytes())
}
