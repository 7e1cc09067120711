//! ProtoNet and first-order MAML over the GCN encoder, and the episodic
//! training loop: one loss evaluation and one optimizer step per episode.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::{adam_step, backward, forward, AdamState, Checkpoint, EncoderParams, GcnInput};
use crate::episodes::{Episode, EpisodeMode};
use crate::error::{Error, Result};
use crate::eval::{evaluate_embeddings, EvalTask};
use crate::graph::Graph;
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Protonet,
    Maml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learner: Learner,
    /// Outer (Adam) learning rate.
    pub lr: f64,
    pub inner_lr: f64,
    pub inner_steps: usize,
    /// Validate every this many episodes; 0 disables periodic validation.
    pub eval_every: usize,
    /// Stop after this many validations without improvement.
    pub patience: Option<usize>,
    pub hidden: usize,
    pub out: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learner: Learner::Protonet,
            lr: 1e-3,
            inner_lr: 0.5,
            inner_steps: 2,
            eval_every: 100,
            patience: None,
            hidden: crate::encoder::DEFAULT_HIDDEN,
            out: crate::encoder::DEFAULT_OUT,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.learner == Learner::Maml {
            if self.inner_steps == 0 {
                return Err(Error::Config("maml needs at least one inner step".into()));
            }
            if !(self.inner_lr >= 0.0 && self.inner_lr.is_finite()) {
                return Err(Error::Config("inner_lr must be >= 0".into()));
            }
        }
        if self.hidden == 0 || self.out == 0 {
            return Err(Error::Config("hidden and out widths must be positive".into()));
        }
        Ok(())
    }
}

/// Mean support embedding per pseudo-label, `N × dim`.
pub fn prototypes(emb: &Array2<f64>, episode: &Episode) -> Result<Array2<f64>> {
    let mut protos = Array2::zeros((episode.n, emb.ncols()));
    let mut counts = vec![0usize; episode.n];
    for &(node, pl) in &episode.support {
        check_row(emb, node)?;
        if pl >= episode.n {
            return Err(Error::domain(format!("pseudo-label {pl} out of range")));
        }
        protos.row_mut(pl).scaled_add(1.0, &emb.row(node));
        counts[pl] += 1;
    }
    for (j, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::domain(format!("pseudo-class {j} has no support nodes")));
        }
        protos.row_mut(j).mapv_inplace(|v| v / c as f64);
    }
    Ok(protos)
}

fn check_row(emb: &Array2<f64>, node: usize) -> Result<()> {
    if node >= emb.nrows() {
        return Err(Error::Bounds { what: "embedding row", index: node, len: emb.nrows() });
    }
    Ok(())
}

/// Numerically stable softmax of a logit vector; also returns log-sum-exp.
fn softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum.ln();
    (logits.iter().map(|l| (l - lse).exp()).collect(), lse)
}

/// ProtoNet loss when support and query embeddings come from different
/// graph views. Returns the loss and its gradients with respect to each
/// embedding matrix.
pub fn protonet_loss_views(
    support_emb: &Array2<f64>,
    query_emb: &Array2<f64>,
    episode: &Episode,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if episode.n < 2 {
        return Err(Error::domain("ProtoNet needs at least two pseudo-classes"));
    }
    if episode.query.is_empty() {
        return Err(Error::domain("episode has no queries"));
    }
    let protos = prototypes(support_emb, episode)?;
    let n_way = episode.n;
    let scale = 1.0 / episode.query.len() as f64;
    let mut g_query = Array2::zeros(query_emb.dim());
    let mut g_protos = Array2::<f64>::zeros(protos.dim());
    let mut loss = 0.0;
    let mut diffs: Vec<Array1<f64>> = Vec::with_capacity(n_way);
    for &(node, label) in &episode.query {
        check_row(query_emb, node)?;
        let zq = query_emb.row(node);
        diffs.clear();
        diffs.extend((0..n_way).map(|j| &zq - &protos.row(j)));
        let logits: Vec<f64> = diffs.iter().map(|d| -d.dot(d)).collect();
        let (p, lse) = softmax(&logits);
        loss += lse - logits[label];
        let mut gq = g_query.row_mut(node);
        for j in 0..n_way {
            let coef = (p[j] - if j == label { 1.0 } else { 0.0 }) * scale;
            // d(-|zq - c|^2)/dzq = -2 (zq - c); d/dc = +2 (zq - c)
            gq.scaled_add(-2.0 * coef, &diffs[j]);
            g_protos.row_mut(j).scaled_add(2.0 * coef, &diffs[j]);
        }
    }
    let mut counts = vec![0usize; n_way];
    for &(_, pl) in &episode.support {
        counts[pl] += 1;
    }
    let mut g_support = Array2::zeros(support_emb.dim());
    for &(node, pl) in &episode.support {
        g_support.row_mut(node).scaled_add(1.0 / counts[pl] as f64, &g_protos.row(pl));
    }
    Ok((loss * scale, g_support, g_query))
}

/// Mean negative log-probability of each query's pseudo-label under a
/// softmax over negative squared distances to the prototypes, with its
/// gradient with respect to the embedding matrix.
pub fn protonet_loss(emb: &Array2<f64>, episode: &Episode) -> Result<(f64, Array2<f64>)> {
    let (loss, gs, gq) = protonet_loss_views(emb, emb, episode)?;
    Ok((loss, gs + gq))
}

/// Softmax cross-entropy of a linear head over selected embedding rows.
/// Returns `(mean loss, d/d emb, d/d head)`.
pub fn head_cross_entropy(
    emb: &Array2<f64>,
    head: &Array2<f64>,
    entries: &[(usize, usize)],
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if entries.is_empty() {
        return Err(Error::domain("cross-entropy over an empty set"));
    }
    if head.nrows() != emb.ncols() {
        return Err(Error::shape(format!("head has {} rows, embeddings {} columns", head.nrows(), emb.ncols())));
    }
    let scale = 1.0 / entries.len() as f64;
    let mut g_emb = Array2::zeros(emb.dim());
    let mut g_head = Array2::zeros(head.dim());
    let mut loss = 0.0;
    for &(node, label) in entries {
        check_row(emb, node)?;
        let z = emb.row(node);
        let logits = z.dot(head);
        let (p, lse) = softmax(logits.as_slice().expect("contiguous"));
        loss += lse - logits[label];
        let mut delta = Array1::from(p);
        delta[label] -= 1.0;
        delta *= scale;
        g_emb.row_mut(node).scaled_add(1.0, &head.dot(&delta));
        for (i, &zi) in z.iter().enumerate() {
            g_head.row_mut(i).scaled_add(zi, &delta);
        }
    }
    Ok((loss * scale, g_emb, g_head))
}

/// Parameters that can take a plain gradient-descent step.
pub trait DescentParams: Clone {
    fn descend(&mut self, lr: f64, grad: &Self);
}

impl DescentParams for f64 {
    fn descend(&mut self, lr: f64, grad: &Self) {
        *self -= lr * grad;
    }
}

/// Encoder weights together with an episode-local linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct MamlParams {
    pub encoder: EncoderParams,
    pub head: Array2<f64>,
}

impl DescentParams for MamlParams {
    fn descend(&mut self, lr: f64, grad: &Self) {
        self.encoder.add_scaled(-lr, &grad.encoder);
        self.head.scaled_add(-lr, &grad.head);
    }
}

/// Runs `steps` gradient-descent steps from `init`. `loss_grad` returns the
/// loss and gradient at the current point; a non-finite loss aborts with the
/// offending step number (1-based). Returns adapted parameters and the loss
/// seen before each step.
pub fn inner_sgd<P, F>(init: &P, lr: f64, steps: usize, mut loss_grad: F) -> Result<(P, Vec<f64>)>
where
    P: DescentParams,
    F: FnMut(&P) -> Result<(f64, P)>,
{
    let mut p = init.clone();
    let mut losses = Vec::with_capacity(steps);
    for step in 1..=steps {
        let (loss, grad) = loss_grad(&p).map_err(|e| match e {
            Error::Numeric(msg) => Error::numeric(format!("inner loop diverged at step {step}: {msg}")),
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("inner loop diverged at step {step}")));
        }
        losses.push(loss);
        p.descend(lr, &grad);
    }
    Ok((p, losses))
}

/// Result of one first-order MAML task.
#[derive(Debug, Clone)]
pub struct MamlOutcome {
    /// Query-loss gradient with respect to the adapted encoder weights,
    /// applied to the shared initialization as the outer gradient.
    pub outer: EncoderParams,
    pub head_grad: Array2<f64>,
    pub adapted: MamlParams,
    pub query_loss: f64,
    pub support_losses: Vec<f64>,
}

/// Cross-entropy of a head over encoder output for the given rows, with
/// gradients for both encoder and head.
pub fn maml_loss(params: &MamlParams, input: &GcnInput, entries: &[(usize, usize)]) -> Result<(f64, MamlParams)> {
    let fwd = forward(&params.encoder, input)?;
    let (loss, g_emb, g_head) = head_cross_entropy(&fwd.z, &params.head, entries)?;
    let encoder = backward(&params.encoder, input, &fwd, &g_emb)?;
    Ok((loss, MamlParams { encoder, head: g_head }))
}

/// First-order MAML on one episode: a zero-initialized `out × N` head and the
/// encoder are adapted on the support set for `inner_steps` SGD steps, then
/// the query loss is differentiated at the adapted point. `query_input` is
/// the graph view used for queries (the same as `input` except for g-UMTRA).
pub fn maml_step(
    params: &EncoderParams,
    episode: &Episode,
    input: &GcnInput,
    query_input: &GcnInput,
    inner_lr: f64,
    inner_steps: usize,
) -> Result<MamlOutcome> {
    if inner_steps == 0 {
        return Err(Error::domain("inner_steps must be at least 1"));
    }
    if episode.query.is_empty() {
        return Err(Error::domain("episode has no queries"));
    }
    let init = MamlParams {
        encoder: params.clone(),
        head: Array2::zeros((params.dims().2, episode.n)),
    };
    let (adapted, support_losses) =
        inner_sgd(&init, inner_lr, inner_steps, |p| maml_loss(p, input, &episode.support))?;
    let (query_loss, grads) = maml_loss(&adapted, query_input, &episode.query)?;
    Ok(MamlOutcome {
        outer: grads.encoder,
        head_grad: grads.head,
        adapted,
        query_loss,
        support_losses,
    })
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub loss: f64,
    pub val_acc: Option<f64>,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("step,loss,val_acc\n");
    for r in rows {
        match r.val_acc {
            Some(a) => writeln!(s, "{},{},{}", r.step, r.loss, a),
            None => writeln!(s, "{},{},", r.step, r.loss),
        }
        .unwrap();
    }
    s
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    io::write_bytes(path, history_csv(rows).as_bytes())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the best validation accuracy (the final one when no
    /// validation tasks were given).
    pub best: Checkpoint,
    pub best_step: usize,
    pub best_val: Option<f64>,
    pub last: Checkpoint,
    pub history: Vec<HistoryRow>,
    pub stopped_early: bool,
}

/// Loss and encoder gradient of one episode at `params`.
pub fn episode_gradient(
    params: &EncoderParams,
    g: &Graph,
    input: &GcnInput,
    episode: &Episode,
    cfg: &TrainConfig,
) -> Result<(f64, EncoderParams)> {
    let aug_input = match (episode.mode, &episode.aug) {
        (EpisodeMode::GUmtra, Some(spec)) => Some(GcnInput::new(&spec.apply(g)?)),
        (EpisodeMode::GUmtra, None) => {
            return Err(Error::domain("g-UMTRA episode without an augmentation spec"))
        }
        _ => None,
    };
    let query_input = aug_input.as_ref().unwrap_or(input);
    match cfg.learner {
        Learner::Protonet => {
            let fwd = forward(params, input)?;
            match &aug_input {
                None => {
                    let (loss, g_emb) = protonet_loss(&fwd.z, episode)?;
                    Ok((loss, backward(params, input, &fwd, &g_emb)?))
                }
                Some(aug) => {
                    let fwd_q = forward(params, aug)?;
                    let (loss, gs, gq) = protonet_loss_views(&fwd.z, &fwd_q.z, episode)?;
                    let mut grads = backward(params, input, &fwd, &gs)?;
                    grads.add_scaled(1.0, &backward(params, aug, &fwd_q, &gq)?);
                    Ok((loss, grads))
                }
            }
        }
        Learner::Maml => {
            let out = maml_step(params, episode, input, query_input, cfg.inner_lr, cfg.inner_steps)?;
            Ok((out.query_loss, out.outer))
        }
    }
}

/// Trains a freshly initialized encoder on `episodes` in order.
pub fn train(g: &Graph, episodes: &[Episode], cfg: &TrainConfig, val_tasks: &[EvalTask]) -> Result<TrainOutcome> {
    let params = EncoderParams::init(g.dim(), cfg.hidden, cfg.out, cfg.seed);
    train_from(g, params, episodes, cfg, val_tasks)
}

/// Trains starting from the given weights.
pub fn train_from(
    g: &Graph,
    mut params: EncoderParams,
    episodes: &[Episode],
    cfg: &TrainConfig,
    val_tasks: &[EvalTask],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if episodes.is_empty() {
        return Err(Error::domain("no training episodes"));
    }
    let input = GcnInput::new(g);
    let mut adam = AdamState::new(&params, cfg.lr);
    let mut history = Vec::with_capacity(episodes.len());
    let mut best: Option<(f64, usize, Checkpoint)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    let validate = |params: &EncoderParams| -> Result<f64> {
        let emb = crate::encoder::encode(params, &input)?;
        Ok(evaluate_embeddings(&emb, val_tasks)?.mean_acc)
    };

    for (t, episode) in episodes.iter().enumerate() {
        let step = t + 1;
        let (loss, grads) = episode_gradient(&params, g, &input, episode, cfg)
            .map_err(|e| match e {
                Error::Numeric(msg) => Error::numeric(format!("episode {t}: {msg}")),
                other => other,
            })?;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite loss at episode {t}")));
        }
        adam_step(&mut params, &grads, &mut adam)
            .map_err(|e| Error::numeric(format!("episode {t}: {e}")))?;
        let is_last = step == episodes.len();
        let due = cfg.eval_every > 0 && step % cfg.eval_every == 0;
        let mut row = HistoryRow { step, loss, val_acc: None };
        if !val_tasks.is_empty() && (due || is_last) {
            let acc = validate(&params)?;
            row.val_acc = Some(acc);
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, step, Checkpoint::from_state(&params, &adam)));
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        history.push(row);
        if cfg.patience.is_some_and(|p| since_best >= p) {
            stopped_early = !is_last;
            break;
        }
    }

    let last = Checkpoint::from_state(&params, &adam);
    let (best_val, best_step, best) = match best {
        Some((acc, step, ck)) => (Some(acc), step, ck),
        None => (None, history.len(), last.clone()),
    };
    Ok(TrainOutcome { best, best_step, best_val, last, history, stopped_early })
}

/// Rows of `emb` selected by node id, in the given order.
pub fn gather_rows(emb: &Array2<f64>, nodes: &[usize]) -> Array2<f64> {
    emb.select(Axis(0), nodes)
}
