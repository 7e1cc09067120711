//! Corrupt a clean graph with each bias injector and report what changed.

use naq::graph::{generate_sbm, inject_feature_noise, inject_label_noise, inject_structure_noise, simulate_imbalance, ImbalanceMode, SbmSpec};

fn main() -> naq::Result<()> {
    let spec = SbmSpec { n_classes: 10, nodes_per_class: 50, p_in: 0.1, p_out: 0.005, d: 20, feature_signal: 1.0, noise_sigma: 1.0, seed: 2 };
    let (g, ls) = generate_sbm(&spec)?;
    println!("clean: {} edges, homophily {:.3}", g.n_edges(), ls.homophily(&g));

    for p in [0.2, 0.5] {
        let noisy = inject_structure_noise(&g, p, 1)?;
        println!("structure noise {p}: {} edges, homophily {:.3}", noisy.n_edges(), ls.homophily(&noisy));
    }

    // Feature noise flips bits, so it needs 0/1 features.
    let bits = g.with_features(g.features().mapv(|v| if v > 0.5 { 1.0 } else { 0.0 }))?;
    let noisy = inject_feature_noise(&bits, 0.3, 1)?;
    let changed = bits.features().iter().zip(noisy.features().iter()).filter(|(a, b)| a != b).count();
    println!("feature noise 0.3: {changed} of {} bits flipped", bits.features().len());

    let flipped = inject_label_noise(&ls, 0.2, 1)?;
    let moved = (0..ls.n_nodes()).filter(|&v| ls.label(v) != flipped.label(v)).count();
    let base: usize = ls.split().base.iter().map(|&c| ls.class_sizes()[c]).sum();
    println!("label noise 0.2: {moved} of {base} base-class labels changed");

    for mode in [ImbalanceMode::Pareto, ImbalanceMode::Extreme] {
        let im = simulate_imbalance(&g, &ls, mode, 5, 1)?;
        println!("{mode:?}: {} nodes left, head {:?}, sizes {:?}", im.graph.n_nodes(), im.head_classes, im.labels.class_sizes());
    }
    Ok(())
}
