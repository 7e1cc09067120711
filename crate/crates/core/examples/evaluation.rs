//! Few-shot evaluation with a logistic-regression probe on frozen embeddings.

use naq::encoder::{encode, EncoderParams, GcnInput};
use naq::eval::{evaluate_embeddings, linear_probe, sample_tasks, EvalReport};
use naq::graph::{generate_sbm, SbmSpec, SplitKind};

fn main() -> naq::Result<()> {
    let spec = SbmSpec { n_classes: 10, nodes_per_class: 30, p_in: 0.1, p_out: 0.01, d: 24, feature_signal: 2.0, noise_sigma: 1.0, seed: 6 };
    let (g, ls) = generate_sbm(&spec)?;
    let tasks = sample_tasks(&ls, SplitKind::Target, 4, 1, 5, 200, 1)?;
    println!("task 0 classes {:?}, support {:?}", tasks[0].classes, tasks[0].support);

    // Raw features versus a random-init GCN.
    let raw = evaluate_embeddings(g.features(), &tasks)?;
    let emb = encode(&EncoderParams::init(g.dim(), 32, 16, 0), &GcnInput::new(&g))?;
    let gcn = evaluate_embeddings(&emb, &tasks)?;
    println!("raw features      {:.3} +- {:.3}", raw.mean_acc, raw.ci95);
    println!("random GCN        {:.3} +- {:.3}", gcn.mean_acc, gcn.ci95);
    println!("single task acc   {:.3}", linear_probe(&emb, &tasks[0])?);

    let small = EvalReport::from_accuracies(4, 1, vec![1.0, 0.0])?;
    println!("{{1, 0}} -> {:.3} +- {:.3}", small.mean_acc, small.ci95);
    println!("{}", small.to_json()?);
    Ok(())
}
