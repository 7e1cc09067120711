//! Train a GCN encoder with ProtoNet on NaQ episodes and compare linear-probe
//! accuracy before and after.

use naq::encoder::EncoderParams;
use naq::episodes::{generate_naq_episodes, NaqConfig};
use naq::eval::{evaluate, sample_tasks};
use naq::graph::{generate_sbm, SbmSpec, SplitKind};
use naq::meta::{train, TrainConfig};
use naq::similarity::{build_index, Metric};

fn main() -> naq::Result<()> {
    let spec = SbmSpec { n_classes: 10, nodes_per_class: 60, p_in: 0.05, p_out: 0.01, d: 64, feature_signal: 1.5, noise_sigma: 1.0, seed: 5 };
    let (g, ls) = generate_sbm(&spec)?;
    let idx = build_index(&g, Metric::Cosine, 10, 64)?;
    let eps = generate_naq_episodes(&idx, &NaqConfig { n_way: 5, q: 10, episodes: 1000, drop_overlap: false }, 1)?;
    let val = sample_tasks(&ls, SplitKind::Val, 2, 1, 8, 20, 2)?;
    let test = sample_tasks(&ls, SplitKind::Target, 3, 1, 8, 100, 3)?;

    let cfg = TrainConfig { hidden: 64, out: 32, eval_every: 100, seed: 9, ..Default::default() };
    let before = evaluate(&EncoderParams::init(g.dim(), cfg.hidden, cfg.out, cfg.seed), &g, &test)?;
    let out = train(&g, &eps, &cfg, &val)?;
    let after = evaluate(&out.best.params, &g, &test)?;

    for row in out.history.iter().filter(|r| r.val_acc.is_some()) {
        println!("step {:>5}  loss {:.4}  val {:.3}", row.step, row.loss, row.val_acc.unwrap());
    }
    println!("best step {}", out.best_step);
    println!("3-way 1-shot: untrained {:.3} +- {:.3}, trained {:.3} +- {:.3}", before.mean_acc, before.ci95, after.mean_acc, after.ci95);
    Ok(())
}
