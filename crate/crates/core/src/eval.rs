//! Few-shot evaluation: fixed N-way K-shot tasks over held-out classes,
//! solved by a logistic-regression probe on frozen embeddings.

use std::fmt;

use ndarray::{Array1, Array2};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode, EncoderParams, GcnInput};
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet, SplitKind};
use crate::rng;

pub const DEFAULT_EVAL_QUERIES: usize = 8;
pub const DEFAULT_TEST_TASKS: usize = 500;
pub const DEFAULT_VAL_TASKS: usize = 50;

/// One downstream task. Support and query entries are `(node, way)` with
/// `way` indexing into `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub classes: Vec<usize>,
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
}

impl EvalTask {
    pub fn n_way(&self) -> usize {
        self.classes.len()
    }

    pub fn k_shot(&self) -> usize {
        self.support.len() / self.classes.len().max(1)
    }

    /// Same task with node ids renamed through `map`; `None` if any node was
    /// removed.
    pub fn remap(&self, map: &[Option<usize>]) -> Option<EvalTask> {
        let go = |v: &[(usize, usize)]| v.iter().map(|&(n, w)| Some((map[n]?, w))).collect::<Option<Vec<_>>>();
        Some(EvalTask { classes: self.classes.clone(), support: go(&self.support)?, query: go(&self.query)? })
    }
}

/// Samples `count` tasks from the classes of one split. Only classes with at
/// least `k_shot + queries` nodes are eligible. Task `i` uses random stream
/// `i`, so the list is fixed for a given seed.
pub fn sample_tasks(
    ls: &LabelSet,
    split: SplitKind,
    n_way: usize,
    k_shot: usize,
    queries: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<EvalTask>> {
    if n_way < 2 || k_shot == 0 || queries == 0 {
        return Err(Error::domain("need n_way >= 2, k_shot >= 1, queries >= 1"));
    }
    let members = ls.members_by_class();
    let mut eligible: Vec<usize> = ls
        .split()
        .classes(split)
        .iter()
        .copied()
        .filter(|&c| members[c].len() >= k_shot + queries)
        .collect();
    eligible.sort_unstable();
    if eligible.len() < n_way {
        return Err(Error::domain(format!(
            "{split:?} split has {} classes with >= {} nodes, {n_way} needed",
            eligible.len(),
            k_shot + queries
        )));
    }
    let tasks = (0..count)
        .map(|t| {
            let mut rng = rng::stream(seed, t as u64);
            let picked = index::sample(&mut rng, eligible.len(), n_way).into_vec();
            let classes: Vec<usize> = picked.iter().map(|&i| eligible[i]).collect();
            let mut support = Vec::with_capacity(n_way * k_shot);
            let mut query = Vec::with_capacity(n_way * queries);
            for (way, &c) in classes.iter().enumerate() {
                let pool = &members[c];
                let nodes = index::sample(&mut rng, pool.len(), k_shot + queries).into_vec();
                support.extend(nodes[..k_shot].iter().map(|&i| (pool[i], way)));
                query.extend(nodes[k_shot..].iter().map(|&i| (pool[i], way)));
            }
            EvalTask { classes, support, query }
        })
        .collect();
    Ok(tasks)
}

/// Multinomial logistic regression with an intercept, fitted by full-batch
/// gradient descent from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// L2 penalty on the weights (not the intercept).
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the gradient's max-norm falls below this.
    pub tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { l2: 1e-3, max_iter: 500, tol: 1e-6 }
    }
}

/// A fitted probe: `logits = x W + b`.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub iterations: usize,
}

impl LinearProbe {
    pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 || y.len() != n {
            return Err(Error::shape(format!("{} rows, {} labels", n, y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::Bounds { what: "probe label", index: bad, len: n_classes });
        }
        let mean_sq = x.rows().into_iter().map(|r| r.dot(&r) + 1.0).sum::<f64>() / n as f64;
        // softmax cross-entropy curvature is at most half the mean squared norm
        let step = 1.0 / (0.5 * mean_sq + cfg.l2);
        let mut w = Array2::<f64>::zeros((d, n_classes));
        let mut b = Array1::<f64>::zeros(n_classes);
        let mut iterations = 0;
        for _ in 0..cfg.max_iter {
            let mut logits = x.dot(&w);
            logits += &b;
            for mut row in logits.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let s = row.sum();
                row /= s;
            }
            for (mut row, &c) in logits.rows_mut().into_iter().zip(y) {
                row[c] -= 1.0;
            }
            logits /= n as f64;
            let mut gw = x.t().dot(&logits);
            gw.scaled_add(cfg.l2, &w);
            let gb = logits.sum_axis(ndarray::Axis(0));
            let gmax = gw.iter().chain(gb.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax < cfg.tol {
                break;
            }
            w.scaled_add(-step, &gw);
            b.scaled_add(-step, &gb);
            iterations += 1;
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::numeric("probe weights diverged"));
        }
        Ok(LinearProbe { weights: w, bias: b, iterations })
    }

    /// Arg-max class per row; ties go to the lowest class index.
    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        let mut logits = x.dot(&self.weights);
        logits += &self.bias;
        logits
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (j, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Fits on the support rows and predicts the given query nodes. Query labels
/// are not an input.
pub fn probe_predictions(emb: &Array2<f64>, support: &[(usize, usize)], n_way: usize, query_nodes: &[usize]) -> Result<Vec<usize>> {
    for &v in support.iter().map(|(v, _)| v).chain(query_nodes) {
        if v >= emb.nrows() {
            return Err(Error::Bounds { what: "embedding row", index: v, len: emb.nrows() });
        }
    }
    let nodes: Vec<usize> = support.iter().map(|s| s.0).collect();
    let labels: Vec<usize> = support.iter().map(|s| s.1).collect();
    let x = emb.select(ndarray::Axis(0), &nodes);
    let probe = LinearProbe::fit(&x, &labels, n_way, &ProbeConfig::default())?;
    Ok(probe.predict(&emb.select(ndarray::Axis(0), query_nodes)))
}

/// Query accuracy of a linear probe fitted on the task's support embeddings.
pub fn linear_probe(emb: &Array2<f64>, task: &EvalTask) -> Result<f64> {
    if task.query.is_empty() {
        return Err(Error::domain("task has no queries"));
    }
    let query_nodes: Vec<usize> = task.query.iter().map(|q| q.0).collect();
    let pred = probe_predictions(emb, &task.support, task.n_way(), &query_nodes)?;
    let correct = pred.iter().zip(&task.query).filter(|(p, q)| **p == q.1).count();
    Ok(correct as f64 / task.query.len() as f64)
}

/// Aggregate accuracy over a task list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_way: usize,
    pub k_shot: usize,
    pub tasks: usize,
    pub mean_acc: f64,
    /// `1.96 * s / sqrt(tasks)` with `s` the sample standard deviation.
    pub ci95: f64,
    pub per_task: Vec<f64>,
}

impl EvalReport {
    /// Mean and interval are accumulated over the sorted accuracies, so the
    /// result does not depend on task order.
    pub fn from_accuracies(n_way: usize, k_shot: usize, per_task: Vec<f64>) -> Result<Self> {
        if per_task.is_empty() {
            return Err(Error::domain("no tasks to report"));
        }
        let mut sorted = per_task.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let ci95 = if sorted.len() < 2 {
            0.0
        } else {
            let var = sorted.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
            1.96 * var.sqrt() / n.sqrt()
        };
        Ok(EvalReport { n_way, k_shot, tasks: per_task.len(), mean_acc: mean, ci95, per_task })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>6} {:>9} {:>7}", "setting", "tasks", "accuracy", "ci95")?;
        write!(
            f,
            "{:<14} {:>6} {:>8.2}% {:>6.2}%",
            format!("{}-way {}-shot", self.n_way, self.k_shot),
            self.tasks,
            100.0 * self.mean_acc,
            100.0 * self.ci95
        )
    }
}

/// Probes every task against a shared embedding matrix.
pub fn evaluate_embeddings(emb: &Array2<f64>, tasks: &[EvalTask]) -> Result<EvalReport> {
    let first = tasks.first().ok_or_else(|| Error::domain("no tasks to evaluate"))?;
    let accs = tasks.par_iter().map(|t| linear_probe(emb, t)).collect::<Result<Vec<_>>>()?;
    EvalReport::from_accuracies(first.n_way(), first.k_shot(), accs)
}

/// Encodes the graph once and probes every task.
pub fn evaluate(params: &EncoderParams, g: &Graph, tasks: &[EvalTask]) -> Result<EvalReport> {
    let emb = encode(params, &GcnInput::new(g))?;
    evaluate_embeddings(&emb, tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Split;
    use ndarray::array;

    fn labels(sizes: &[usize], split: Split) -> LabelSet {
        let l: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect();
        LabelSet::new(l, sizes.len(), split).unwrap()
    }

    #[test]
    fn forced_class_sample_and_determinism() {
        let ls = labels(&[10, 10, 10, 10], Split { base: vec![0], val: vec![], target: vec![1, 2, 3] });
        let a = sample_tasks(&ls, SplitKind::Target, 3, 1, 8, 1, 4).unwrap();
        let mut cls = a[0].classes.clone();
        cls.sort();
        assert_eq!(cls, vec![1, 2, 3]);
        let b = sample_tasks(&ls, SplitKind::Target, 3, 1, 8, 1, 4).unwrap();
        assert_eq!(a, b);
        for task in &a {
            for &(v, w) in task.support.iter().chain(&task.query) {
                assert_eq!(ls.label(v), task.classes[w]);
            }
            assert!(task.support.iter().all(|s| !task.query.iter().any(|q| q.0 == s.0)));
        }
    }

    #[test]
    fn insufficient_classes() {
        let ls = labels(&[10, 5, 10], Split { base: vec![], val: vec![], target: vec![0, 1, 2] });
        assert!(sample_tasks(&ls, SplitKind::Target, 3, 1, 8, 1, 0).is_err());
        assert_eq!(sample_tasks(&ls, SplitKind::Target, 2, 1, 8, 3, 0).unwrap().len(), 3);
    }

    #[test]
    fn separable_one_dimensional_task() {
        let emb = array![[-1.0], [1.0], [-1.2], [-0.8], [0.9], [1.3]];
        let task = EvalTask {
            classes: vec![7, 9],
            support: vec![(0, 0), (1, 1)],
            query: vec![(2, 0), (3, 0), (4, 1), (5, 1)],
        };
        assert_eq!(linear_probe(&emb, &task).unwrap(), 1.0);
    }

    #[test]
    fn identical_embeddings_fall_back_to_chance() {
        let emb = Array2::from_elem((6, 3), 0.7);
        let task = EvalTask {
            classes: vec![0, 1],
            support: vec![(0, 0), (1, 1)],
            query: vec![(2, 0), (3, 1), (4, 0), (5, 1)],
        };
        let acc = linear_probe(&emb, &task).unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn report_arithmetic() {
        let r = EvalReport::from_accuracies(5, 1, vec![1.0; 4]).unwrap();
        assert_eq!((r.mean_acc, r.ci95), (1.0, 0.0));
        let r = EvalReport::from_accuracies(5, 1, vec![1.0, 0.0]).unwrap();
        assert_eq!(r.mean_acc, 0.5);
        assert!((r.ci95 - 1.96 * 0.5f64.sqrt() / 2f64.sqrt()).abs() < 1e-15);
        assert!((r.ci95 - 0.98).abs() < 1e-12);
    }

    #[test]
    fn report_is_order_invariant() {
        let accs = vec![0.1, 0.7, 0.35, 0.9, 0.2, 0.65, 0.3];
        let mut rev = accs.clone();
        rev.reverse();
        let a = EvalReport::from_accuracies(2, 1, accs).unwrap();
        let b = EvalReport::from_accuracies(2, 1, rev).unwrap();
        assert_eq!((a.mean_acc, a.ci95), (b.mean_acc, b.ci95));
    }

    #[test]
    fn predictions_ignore_query_labels() {
        let emb = array![[0.0, 1.0], [1.0, 0.0], [0.1, 0.8], [0.9, 0.2]];
        let support = [(0, 0), (1, 1)];
        let p = probe_predictions(&emb, &support, 2, &[2, 3]).unwrap();
        assert_eq!(p, vec![0, 1]);
    }

    #[test]
    fn remap_drops_removed_nodes() {
        let t = EvalTask { classes: vec![0, 1], support: vec![(0, 0), (2, 1)], query: vec![(3, 0)] };
        let map = vec![Some(0), None, Some(1), Some(2)];
        assert_eq!(t.remap(&map).unwrap().support, vec![(0, 0), (1, 1)]);
        let map = vec![None, None, Some(1), Some(2)];
        assert!(t.remap(&map).is_none());
    }
}
