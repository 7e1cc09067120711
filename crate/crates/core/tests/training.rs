mod common;

use naq::encoder::{encode, EncoderParams, GcnInput};
use naq::episodes::{generate_gumtra_episodes, generate_naq_episodes, AugmentSpec, NaqConfig};
use naq::eval::{evaluate, sample_tasks};
use naq::graph::{generate_sbm, SplitKind};
use naq::meta::{protonet_loss, train, Learner, TrainConfig};
use naq::similarity::{build_index, Metric};

fn small_cfg() -> TrainConfig {
    TrainConfig { hidden: 16, out: 8, eval_every: 0, seed: 4, ..Default::default() }
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let g = common::random_graph(30, 0.15, 6, 1);
    let index = build_index(&g, Metric::Cosine, 4, 8).unwrap();
    let eps = generate_naq_episodes(&index, &NaqConfig { n_way: 3, q: 4, episodes: 25, drop_overlap: false }, 2).unwrap();
    for learner in [Learner::Protonet, Learner::Maml] {
        let cfg = TrainConfig { lr: 0.0, learner, ..small_cfg() };
        let out = train(&g, &eps, &cfg, &[]).unwrap();
        assert_eq!(out.last.params, EncoderParams::init(6, 16, 8, 4));
        assert_eq!(out.last.step, 25);
    }
}

#[test]
fn repeated_episode_loss_settles_downward() {
    let (g, _) = generate_sbm(&common::learning_fixture()).unwrap();
    let index = build_index(&g, Metric::Cosine, 10, 64).unwrap();
    let ep = generate_naq_episodes(&index, &NaqConfig { n_way: 5, q: 10, episodes: 1, drop_overlap: false }, 3).unwrap().remove(0);
    let eps = vec![ep; 200];
    let out = train(&g, &eps, &TrainConfig { hidden: 64, out: 64, eval_every: 0, seed: 1, ..Default::default() }, &[]).unwrap();
    let loss: Vec<f64> = out.history.iter().map(|r| r.loss).collect();
    // 10-step windows after step 20, each within 5% of the one before
    let windows: Vec<f64> = loss[20..].chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in windows.windows(2) {
        assert!(pair[1] <= pair[0] * 1.05 + 1e-9, "{windows:?}");
    }
    assert!(loss[199] < 0.5 * loss[0], "{} -> {}", loss[0], loss[199]);
}

#[test]
fn equal_seeds_give_identical_checkpoints() {
    let g = common::random_graph(40, 0.1, 5, 7);
    let index = build_index(&g, Metric::NegEuclidean, 5, 8).unwrap();
    let eps = generate_naq_episodes(&index, &NaqConfig { n_way: 4, q: 5, episodes: 30, drop_overlap: false }, 8).unwrap();
    for learner in [Learner::Protonet, Learner::Maml] {
        let cfg = TrainConfig { learner, ..small_cfg() };
        let a = train(&g, &eps, &cfg, &[]).unwrap();
        let b = train(&g, &eps, &cfg, &[]).unwrap();
        assert_eq!(a.last.encode().unwrap(), b.last.encode().unwrap());
        assert_eq!(a.history, b.history);
        let c = train(&g, &eps, &TrainConfig { seed: 5, ..cfg }, &[]).unwrap();
        assert_ne!(a.last.params, c.last.params);
    }
}

#[test]
fn identity_augmentation_loss_is_at_most_ln_n() {
    let g = common::random_graph(25, 0.2, 6, 3);
    let aug = AugmentSpec { drop_edge_rate: 0.0, drop_feature_rate: 0.0, seed: 1 };
    let eps = generate_gumtra_episodes(g.n_nodes(), 5, 10, 4, aug).unwrap();
    let emb = encode(&EncoderParams::init(6, 16, 8, 2), &GcnInput::new(&g)).unwrap();
    for ep in &eps {
        let (loss, _) = protonet_loss(&emb, ep).unwrap();
        assert!(loss <= 5f64.ln() + 1e-9, "{loss}");
    }
    let out = train(&g, &eps, &small_cfg(), &[]).unwrap();
    assert!(out.history.iter().all(|r| r.loss <= 5f64.ln() + 1e-9));
}

#[test]
fn gumtra_trains_with_augmented_queries() {
    let g = common::random_graph(30, 0.2, 6, 9);
    let aug = AugmentSpec { drop_edge_rate: 0.3, drop_feature_rate: 0.2, seed: 1 };
    let eps = generate_gumtra_episodes(g.n_nodes(), 3, 20, 4, aug).unwrap();
    for learner in [Learner::Protonet, Learner::Maml] {
        let out = train(&g, &eps, &TrainConfig { learner, ..small_cfg() }, &[]).unwrap();
        assert!(out.last.params.is_finite());
        assert_eq!(out.history.len(), 20);
    }
}

#[test]
fn validation_picks_best_checkpoint_and_patience_stops() {
    let spec = naq::graph::SbmSpec { n_classes: 10, nodes_per_class: 20, p_in: 0.2, p_out: 0.01, d: 20, feature_signal: 1.5, noise_sigma: 1.0, seed: 2 };
    let (g, ls) = generate_sbm(&spec).unwrap();
    let val = sample_tasks(&ls, SplitKind::Val, 2, 1, 4, 10, 3).unwrap();
    let index = build_index(&g, Metric::Cosine, 5, 16).unwrap();
    let eps = generate_naq_episodes(&index, &NaqConfig { n_way: 5, q: 5, episodes: 60, drop_overlap: false }, 1).unwrap();
    let cfg = TrainConfig { eval_every: 10, patience: Some(2), lr: 0.0, ..small_cfg() };
    let out = train(&g, &eps, &cfg, &val).unwrap();
    // with a frozen encoder accuracy never improves after the first check
    assert!(out.stopped_early);
    assert_eq!(out.history.len(), 30);
    assert_eq!(out.best_step, 10);
    let evals: Vec<_> = out.history.iter().filter_map(|r| r.val_acc).collect();
    assert_eq!(evals.len(), 3);
    assert_eq!(out.best_val, Some(evals[0]));

    let cfg = TrainConfig { eval_every: 25, lr: 0.01, ..small_cfg() };
    let out = train(&g, &eps, &cfg, &val).unwrap();
    let evals: Vec<_> = out.history.iter().filter(|r| r.val_acc.is_some()).map(|r| r.step).collect();
    assert_eq!(evals, vec![25, 50, 60]);
    let best = evaluate(&out.best.params, &g, &val).unwrap().mean_acc;
    assert_eq!(Some(best), out.best_val);
}
