#![allow(dead_code)]

pub mod gradcheck;
pub mod invariants;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use naq::graph::SbmSpec;
use naq::Graph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi graph with Gaussian features.
pub fn random_graph(n: usize, p: f64, d: usize, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x = Array2::from_shape_fn((n, d), |_| r.sample::<f64, _>(StandardNormal));
    Graph::from_edges(edges, x).unwrap()
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((rows, cols), |_| r.sample::<f64, _>(StandardNormal))
}

pub fn binary(rows: usize, cols: usize, density: f64, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((rows, cols), |_| if r.random::<f64>() < density { 1.0 } else { 0.0 })
}

/// Six 100-node classes; the signal is strong enough for a trained encoder
/// and weak enough that random projections blur it.
pub fn learning_fixture() -> SbmSpec {
    SbmSpec {
        n_classes: 6,
        nodes_per_class: 100,
        p_in: 0.05,
        p_out: 0.01,
        d: 100,
        feature_signal: 1.5,
        noise_sigma: 1.0,
        seed: 1,
    }
}

/// Ten 60-node classes with a strong signal; pareto imbalance leaves eight
/// tail classes of `keep` nodes.
pub fn imbalance_fixture() -> SbmSpec {
    SbmSpec {
        n_classes: 10,
        nodes_per_class: 60,
        p_in: 0.08,
        p_out: 0.015,
        d: 100,
        feature_signal: 3.0,
        noise_sigma: 1.0,
        seed: 1,
    }
}

/// Max over entries of `|a - n| / max(|a|, |n|)`; pairs where both sides
/// are below `floor` are compared absolutely.
pub fn max_rel_err<'a>(analytic: impl IntoIterator<Item = &'a f64>, numeric: impl IntoIterator<Item = &'a f64>, floor: f64) -> f64 {
    analytic
        .into_iter()
        .zip(numeric)
        .map(|(a, n)| {
            let scale = a.abs().max(n.abs());
            if scale < floor {
                (a - n).abs()
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Fourth-order central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &Array2<f64>, h: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let (i, j) = (idx / x.ncols(), idx % x.ncols());
        let orig = probe[[i, j]];
        let mut at = |delta: f64| {
            probe[[i, j]] = orig + delta;
            f(&probe)
        };
        let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
        probe[[i, j]] = orig;
        g[[i, j]] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
    }
    g
}

/// Like [`numeric_grad`], but never lets the stencil straddle a change of
/// `regime` (e.g. a ReLU activation mask). Falls back to a one-sided
/// fourth-order stencil on the clean side, and only then shrinks the step.
pub fn numeric_grad_smooth<R: PartialEq>(
    x: &Array2<f64>,
    h0: f64,
    mut regime: impl FnMut(&Array2<f64>) -> R,
    mut f: impl FnMut(&Array2<f64>) -> f64,
) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut probe = x.clone();
    let base = regime(x);
    for idx in 0..x.len() {
        let (i, j) = (idx / x.ncols(), idx % x.ncols());
        let orig = probe[[i, j]];
        let mut stable = |probe: &mut Array2<f64>, ds: &[f64]| {
            let ok = ds.iter().all(|&d| {
                probe[[i, j]] = orig + d;
                regime(probe) == base
            });
            probe[[i, j]] = orig;
            ok
        };
        let mut h = h0;
        let mut side = 0.0;
        while h > 1e-9 {
            if stable(&mut probe, &[h, -h, 2.0 * h, -2.0 * h]) {
                break;
            }
            if let Some(&s) = [1.0, -1.0].iter().find(|&&s| stable(&mut probe, &[s * h, s * 2.0 * h, s * 3.0 * h, s * 4.0 * h])) {
                side = s;
                break;
            }
            h /= 2.0;
        }
        let mut at = |delta: f64| {
            probe[[i, j]] = orig + delta;
            f(&probe)
        };
        g[[i, j]] = if side == 0.0 {
            let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
        } else {
            let sh = side * h;
            let f: Vec<f64> = (0..5).map(|k| at(k as f64 * sh)).collect();
            (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * sh)
        };
        probe[[i, j]] = orig;
    }
    g
}
