//! Top-k feature-similarity neighbors under each metric, and how often a
//! node's neighbors share its class.

use naq::graph::{generate_sbm, SbmSpec};
use naq::similarity::{build_index, build_index_from_features, Metric};

fn main() -> naq::Result<()> {
    let spec = SbmSpec { n_classes: 5, nodes_per_class: 80, p_in: 0.05, p_out: 0.01, d: 40, feature_signal: 1.0, noise_sigma: 1.0, seed: 7 };
    let (g, ls) = generate_sbm(&spec)?;
    for metric in [Metric::Cosine, Metric::NegEuclidean] {
        let idx = build_index(&g, metric, 10, 64)?;
        let same: usize = (0..g.n_nodes())
            .map(|u| idx.neighbors(u).iter().filter(|(v, _)| ls.label(*v) == ls.label(u)).count())
            .sum();
        println!("{:>13}: same-class neighbor rate {:.3}", metric.name(), same as f64 / (10 * g.n_nodes()) as f64);
        println!("               node 0 -> {:?}", &idx.neighbors(0)[..3]);
    }

    // Jaccard needs 0/1 features.
    let binary = g.features().mapv(|v| if v > 0.5 { 1.0 } else { 0.0 });
    let idx = build_index_from_features(&binary, Metric::Jaccard, 10, 64)?;
    println!("      jaccard: node 0 -> {:?}", &idx.neighbors(0)[..3]);
    Ok(())
}
