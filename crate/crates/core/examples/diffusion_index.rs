//! Truncated personalized-PageRank diffusion: the matrix itself on a tiny
//! graph, then the derived neighbor index on a larger one.

use ndarray::Array2;

use naq::diffusion::{diffusion_index, diffusion_matrix, DiffusionConfig};
use naq::graph::{generate_sbm, SbmSpec};
use naq::Graph;

fn main() -> naq::Result<()> {
    let path = Graph::from_edges([(0, 1), (1, 2), (2, 3)], Array2::zeros((4, 1)))?;
    let cfg = DiffusionConfig { prune_eps: 0.0, ..Default::default() };
    let s = diffusion_matrix(&path, &cfg)?.to_dense();
    println!("path graph, alpha {}, K {}:\n{:.4}", cfg.alpha, cfg.truncation, s);
    println!("row sums {:.4}", s.sum_axis(ndarray::Axis(1)));

    let spec = SbmSpec { n_classes: 5, nodes_per_class: 100, p_in: 0.08, p_out: 0.004, d: 8, feature_signal: 1.0, noise_sigma: 1.0, seed: 3 };
    let (g, ls) = generate_sbm(&spec)?;
    let idx = diffusion_index(&g, &DiffusionConfig { topk: 20, ..Default::default() })?;
    let (mut same, mut total) = (0, 0);
    for u in 0..g.n_nodes() {
        for &(v, _) in idx.neighbors(u) {
            total += 1;
            same += usize::from(ls.label(u) == ls.label(v));
        }
    }
    println!("SBM: {total} diffusion neighbors, same-class rate {:.3}", same as f64 / total as f64);
    Ok(())
}
