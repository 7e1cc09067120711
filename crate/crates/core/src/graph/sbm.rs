//! Stochastic block model fixtures with class-dependent Gaussian features.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Graph, LabelSet, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Parameters of a planted-partition graph.
///
/// Node `v` belongs to class `v / nodes_per_class`. Each class owns a block
/// of `max(1, d / n_classes)` feature dimensions (wrapping around `d`); its
/// mean feature vector is `feature_signal` on that block and 0 elsewhere.
/// Every feature row is its class mean plus i.i.d. `N(0, noise_sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n_classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub d: usize,
    pub feature_signal: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(Error::domain(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if !(self.feature_signal > 0.0 && self.feature_signal.is_finite()) {
            return Err(Error::domain("feature_signal must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::domain("noise_sigma must be >= 0"));
        }
        if self.n_classes == 0 || self.nodes_per_class == 0 || self.d == 0 {
            return Err(Error::domain("n_classes, nodes_per_class and d must be positive"));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_classes * self.nodes_per_class
    }

    /// Feature dimensions carrying class `c`'s signal.
    pub fn signal_dims(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        let block = (self.d / self.n_classes).max(1);
        (0..block).map(move |j| (c * block + j) % self.d)
    }
}

/// Class split used by synthetic datasets: roughly 40% target classes (the
/// highest ids), 20% validation, the remainder base.
pub fn default_split(n_classes: usize) -> Split {
    let n_target = ((0.4 * n_classes as f64).round() as usize).clamp(1, n_classes);
    let n_val = ((0.2 * n_classes as f64).round() as usize).min(n_classes - n_target);
    let n_base = n_classes - n_target - n_val;
    Split {
        base: (0..n_base).collect(),
        val: (n_base..n_base + n_val).collect(),
        target: (n_base + n_val..n_classes).collect(),
    }
}

/// Samples an SBM graph. Edges use random stream 0 (one uniform draw per
/// unordered pair, row-major over `u < v`), features use stream 1.
pub fn generate_sbm(spec: &SbmSpec) -> Result<(Graph, LabelSet)> {
    spec.validate()?;
    let n = spec.n_nodes();
    let class_of = |v: usize| v / spec.nodes_per_class;

    let mut rng = rng::stream(spec.seed, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if class_of(u) == class_of(v) { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut means = Array2::<f64>::zeros((spec.n_classes, spec.d));
    for c in 0..spec.n_classes {
        for j in spec.signal_dims(c) {
            means[[c, j]] = spec.feature_signal;
        }
    }
    let mut rng = rng::stream(spec.seed, 1);
    let features = Array2::from_shape_fn((n, spec.d), |(v, j)| {
        let z: f64 = rng.sample(StandardNormal);
        means[[class_of(v), j]] + spec.noise_sigma * z
    });

    let graph = Graph::from_edges(edges, features)?;
    let labels = (0..n).map(class_of).collect();
    let labels = LabelSet::new(labels, spec.n_classes, default_split(spec.n_classes))?;
    Ok((graph, labels))
}
