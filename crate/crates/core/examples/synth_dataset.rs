//! Generate a stochastic block model dataset, write it in the on-disk
//! format, and load it back.
//!
//!     cargo run --example synth_dataset -- /tmp/sbm

use std::path::PathBuf;

use naq::graph::{load_graph, SbmSpec, SplitKind};
use naq::pipeline::cmd_synth;

fn main() -> naq::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("naq-sbm"));
    let spec = SbmSpec {
        n_classes: 8,
        nodes_per_class: 50,
        p_in: 0.1,
        p_out: 0.005,
        d: 32,
        feature_signal: 1.5,
        noise_sigma: 1.0,
        seed: 42,
    };
    let paths = cmd_synth(&spec, &dir)?;
    let (g, ls) = load_graph(&paths.edges, &paths.features, &paths.labels, &paths.split)?;
    println!("wrote {}", dir.display());
    println!("nodes {}  edges {}  feature dim {}", g.n_nodes(), g.n_edges(), g.dim());
    println!("edge homophily {:.3}", ls.homophily(&g));
    for kind in [SplitKind::Base, SplitKind::Val, SplitKind::Target] {
        println!("{kind:?} classes {:?}", ls.split().classes(kind));
    }
    Ok(())
}
