mod common;

use ndarray::{Array1, Array2};
use naq::eval::{linear_probe, EvalTask, LinearProbe, ProbeConfig};

/// Binary logistic regression by Newton's method on
/// `mean log(1 + exp(-s (x.w + b))) + (mu / 2) |w|^2`.
fn newton_logistic(x: &Array2<f64>, y: &[usize], mu: f64) -> (Array1<f64>, f64) {
    let (n, d) = x.dim();
    let mut theta = vec![0.0; d + 1];
    for _ in 0..100 {
        let mut grad = vec![0.0; d + 1];
        let mut hess = vec![vec![0.0; d + 1]; d + 1];
        for i in 0..n {
            let xi: Vec<f64> = x.row(i).iter().copied().chain([1.0]).collect();
            let s = if y[i] == 1 { 1.0 } else { 0.0 };
            let z: f64 = xi.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            for a in 0..=d {
                grad[a] += (p - s) * xi[a] / n as f64;
                for b in 0..=d {
                    hess[a][b] += p * (1.0 - p) * xi[a] * xi[b] / n as f64;
                }
            }
        }
        for a in 0..d {
            grad[a] += mu * theta[a];
            hess[a][a] += mu;
        }
        // Gaussian elimination on hess * step = grad
        let mut m: Vec<Vec<f64>> = hess.iter().zip(&grad).map(|(r, g)| r.iter().copied().chain([*g]).collect()).collect();
        for c in 0..=d {
            let piv = (c..=d).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, piv);
            for r in 0..=d {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=d + 1 {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        let step: Vec<f64> = (0..=d).map(|i| m[i][d + 1] / m[i][i]).collect();
        for (t, s) in theta.iter_mut().zip(&step) {
            *t -= s;
        }
        if step.iter().all(|s| s.abs() < 1e-13) {
            break;
        }
    }
    (Array1::from(theta[..d].to_vec()), theta[d])
}

fn overlapping_task(seed: u64) -> (Array2<f64>, Vec<usize>) {
    let noise = common::gaussian(40, 3, seed);
    let y: Vec<usize> = (0..40).map(|i| i % 2).collect();
    let x = Array2::from_shape_fn((40, 3), |(i, j)| noise[[i, j]] + if y[i] == 1 && j == 0 { 1.0 } else { 0.0 });
    (x, y)
}

#[test]
fn two_class_probe_matches_newton_reference() {
    let cfg = ProbeConfig { max_iter: 200_000, tol: 1e-10, ..Default::default() };
    for seed in 0..5 {
        let (x, y) = overlapping_task(seed);
        let probe = LinearProbe::fit(&x, &y, 2, &cfg).unwrap();
        // the two-class softmax optimum is antisymmetric, leaving a binary
        // problem in w1 - w0 with half the penalty
        let (w, b) = newton_logistic(&x, &y, cfg.l2 / 2.0);
        let dw = &probe.weights.column(1) - &probe.weights.column(0);
        let db = probe.bias[1] - probe.bias[0];
        for (a, r) in dw.iter().zip(w.iter()) {
            assert!((a - r).abs() < 1e-6, "seed {seed}: {dw} vs {w}");
        }
        assert!((db - b).abs() < 1e-6);
    }
}

#[test]
fn default_probe_predicts_like_reference() {
    for seed in 0..5 {
        let (x, y) = overlapping_task(seed);
        let probe = LinearProbe::fit(&x, &y, 2, &ProbeConfig::default()).unwrap();
        let (w, b) = newton_logistic(&x, &y, ProbeConfig::default().l2 / 2.0);
        let queries = common::gaussian(200, 3, seed + 99) * 2.0;
        let reference: Vec<usize> = queries.rows().into_iter().map(|r| usize::from(r.dot(&w) + b > 0.0)).collect();
        let margins: Vec<f64> = queries.rows().into_iter().map(|r| (r.dot(&w) + b).abs()).collect();
        let got = probe.predict(&queries);
        for i in 0..200 {
            // points essentially on the reference boundary may go either way
            if margins[i] > 1e-2 {
                assert_eq!(got[i], reference[i], "seed {seed} query {i}");
            }
        }
    }
}

#[test]
fn probe_never_reads_query_labels() {
    let emb = common::gaussian(20, 4, 3);
    let task = EvalTask { classes: vec![7, 9], support: vec![(0, 0), (1, 1)], query: (2..20).map(|v| (v, v % 2)).collect() };
    let flipped = EvalTask { query: task.query.iter().map(|&(v, l)| (v, 1 - l)).collect(), ..task.clone() };
    let a = linear_probe(&emb, &task).unwrap();
    let b = linear_probe(&emb, &flipped).unwrap();
    assert!((a + b - 1.0).abs() < 1e-12);
}
