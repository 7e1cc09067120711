//! g-UMTRA baseline: each support node is its own class and its query is the
//! same node seen through an augmented graph.

use naq::episodes::{generate_gumtra_episodes, AugmentSpec};
use naq::eval::{evaluate, sample_tasks};
use naq::graph::{generate_sbm, SbmSpec, SplitKind};
use naq::meta::{train, TrainConfig};

fn main() -> naq::Result<()> {
    let spec = SbmSpec { n_classes: 10, nodes_per_class: 40, p_in: 0.08, p_out: 0.01, d: 32, feature_signal: 1.5, noise_sigma: 1.0, seed: 4 };
    let (g, ls) = generate_sbm(&spec)?;
    let aug = AugmentSpec { drop_edge_rate: 0.2, drop_feature_rate: 0.2, seed: 11 };
    let eps = generate_gumtra_episodes(g.n_nodes(), 5, 500, 1, aug)?;
    println!("episode 0: support {:?}", eps[0].support);
    println!("episode 0: query   {:?}", eps[0].query);

    let test = sample_tasks(&ls, SplitKind::Target, 3, 1, 8, 100, 3)?;
    let out = train(&g, &eps, &TrainConfig { hidden: 32, out: 16, eval_every: 0, ..Default::default() }, &[])?;
    let rep = evaluate(&out.best.params, &g, &test)?;
    println!("final loss {:.4}, test {:.3} +- {:.3}", out.history.last().unwrap().loss, rep.mean_acc, rep.ci95);
    Ok(())
}
