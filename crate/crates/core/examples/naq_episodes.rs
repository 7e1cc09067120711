//! NaQ episodes: random support nodes, each with a fresh pseudo-label, and
//! their nearest index neighbors as queries.

use naq::episodes::{generate_naq_episodes, overlap_ratio, NaqConfig};
use naq::graph::{generate_sbm, SbmSpec};
use naq::similarity::{build_index, Metric};

fn main() -> naq::Result<()> {
    let spec = SbmSpec { n_classes: 6, nodes_per_class: 40, p_in: 0.1, p_out: 0.01, d: 16, feature_signal: 2.0, noise_sigma: 1.0, seed: 1 };
    let (g, ls) = generate_sbm(&spec)?;
    let idx = build_index(&g, Metric::Cosine, 20, 64)?;

    let mut cfg = NaqConfig { n_way: 5, q: 10, episodes: 500, drop_overlap: false };
    let eps = generate_naq_episodes(&idx, &cfg, 0)?;
    let ep = &eps[0];
    println!("episode 0 support (node, pseudo-label): {:?}", ep.support);
    println!("episode 0 first queries: {:?}", &ep.query[..5]);
    let pure = ep.query.iter().filter(|&&(node, pl)| {
        let anchor = ep.support.iter().find(|s| s.1 == pl).unwrap().0;
        ls.label(node) == ls.label(anchor)
    });
    println!("queries sharing the anchor's true class: {}/{}", pure.count(), ep.query.len());
    println!("overlap ratio over {} episodes: {:.4}", eps.len(), overlap_ratio(&eps));

    cfg.drop_overlap = true;
    let dropped = generate_naq_episodes(&idx, &cfg, 0)?;
    let kept: usize = dropped.iter().map(|e| e.query.len()).sum();
    println!("with drop_overlap: ratio {:.4}, {kept} queries kept", overlap_ratio(&dropped));
    Ok(())
}
