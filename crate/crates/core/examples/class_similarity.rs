//! Class-level similarity of a NaQ index before and after simulated class
//! imbalance, overall and on the rarest classes.

use naq::analysis::{class_centroids, class_level_similarity};
use naq::graph::{generate_sbm, simulate_imbalance, Graph, ImbalanceMode, LabelSet, SbmSpec};
use naq::similarity::{build_index, Metric};

fn measure(g: &Graph, ls: &LabelSet, tail: Option<f64>) -> naq::Result<f64> {
    let idx = build_index(g, Metric::Cosine, 10, 64)?;
    let centroids = class_centroids(g, ls)?;
    class_level_similarity(&idx, ls, &centroids, 10, tail)
}

fn main() -> naq::Result<()> {
    let spec = SbmSpec { n_classes: 10, nodes_per_class: 60, p_in: 0.08, p_out: 0.015, d: 100, feature_signal: 3.0, noise_sigma: 1.0, seed: 1 };
    let (g, ls) = generate_sbm(&spec)?;
    println!("balanced: {:.3}", measure(&g, &ls, None)?);

    let im = simulate_imbalance(&g, &ls, ImbalanceMode::Pareto, 10, 5)?;
    println!("imbalanced, all classes: {:.3}", measure(&im.graph, &im.labels, None)?);
    for pct in [0.1, 0.5, 0.8] {
        println!("imbalanced, rarest {:>3.0}% of classes: {:.3}", pct * 100.0, measure(&im.graph, &im.labels, Some(pct))?);
    }
    Ok(())
}
