//! First-order MAML on NaQ episodes: a linear head and the encoder are
//! adapted on the support set, the query loss drives the outer update.

use naq::episodes::{generate_naq_episodes, NaqConfig};
use naq::eval::{evaluate, sample_tasks};
use naq::graph::{generate_sbm, SbmSpec, SplitKind};
use naq::meta::{train, Learner, TrainConfig};
use naq::similarity::{build_index, Metric};

fn main() -> naq::Result<()> {
    let spec = SbmSpec { n_classes: 10, nodes_per_class: 40, p_in: 0.08, p_out: 0.01, d: 32, feature_signal: 1.5, noise_sigma: 1.0, seed: 8 };
    let (g, ls) = generate_sbm(&spec)?;
    let idx = build_index(&g, Metric::Cosine, 10, 64)?;
    let eps = generate_naq_episodes(&idx, &NaqConfig { n_way: 5, q: 5, episodes: 300, drop_overlap: false }, 1)?;
    let test = sample_tasks(&ls, SplitKind::Target, 3, 1, 8, 100, 3)?;

    for inner_steps in [1, 3] {
        let cfg = TrainConfig { learner: Learner::Maml, inner_lr: 0.5, inner_steps, hidden: 32, out: 16, eval_every: 0, ..Default::default() };
        let out = train(&g, &eps, &cfg, &[])?;
        let first = out.history.first().map(|r| r.loss).unwrap_or(f64::NAN);
        let last = out.history.last().map(|r| r.loss).unwrap_or(f64::NAN);
        let rep = evaluate(&out.best.params, &g, &test)?;
        println!("inner steps {inner_steps}: query loss {first:.3} -> {last:.3}, test {:.3} +- {:.3}", rep.mean_acc, rep.ci95);
    }
    Ok(())
}
