//! Finite-difference checks shared by the gradient tests and the acceptance run.

use ndarray::Array2;
use naq::encoder::{encode, encode_backward, forward, EncoderParams, GcnInput};
use naq::episodes::{Episode, EpisodeMode};
use naq::meta::{episode_gradient, maml_loss, maml_step, protonet_loss, MamlParams, TrainConfig};

use super::{gaussian, max_rel_err, numeric_grad, numeric_grad_smooth, random_graph};

pub const H: f64 = 1e-3;
pub const H_RELU: f64 = 1e-3;
pub const FLOOR: f64 = 1e-7;

pub fn episode(n: usize, support: Vec<(usize, usize)>, query: Vec<(usize, usize)>) -> Episode {
    Episode { n, k: 1, q: query.len() / n, mode: EpisodeMode::Naq, support, query, aug: None, short: vec![] }
}

/// Three pseudo-classes on a 12-node graph.
pub fn sample_episode() -> Episode {
    episode(3, vec![(0, 0), (4, 1), (8, 2)], vec![(1, 0), (2, 0), (5, 1), (6, 1), (9, 2), (11, 2)])
}

fn relu_mask(p: &EncoderParams, input: &GcnInput) -> Vec<bool> {
    forward(p, input).unwrap().pre.iter().map(|&v| v > 0.0).collect()
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Encoder backward pass against `<U, Z>` on a random 12-node graph.
pub fn encoder_error(seed: u64) -> f64 {
    let g = random_graph(12, 0.3, 5, seed);
    let input = GcnInput::new(&g);
    let p = EncoderParams::init(5, 6, 4, seed + 100);
    let u = gaussian(12, 4, seed + 200);
    let grads = encode_backward(&p, &input, &u).unwrap();
    let with_w1 = |w1: &Array2<f64>| EncoderParams { w1: w1.clone(), w2: p.w2.clone() };
    let n1 = numeric_grad_smooth(&p.w1, H_RELU, |w1| relu_mask(&with_w1(w1), &input), |w1| {
        inner(&u, &encode(&with_w1(w1), &input).unwrap())
    });
    let n2 = numeric_grad(&p.w2, H, |w2| inner(&u, &encode(&EncoderParams { w1: p.w1.clone(), w2: w2.clone() }, &input).unwrap()));
    max_rel_err(&grads.w1, &n1, FLOOR).max(max_rel_err(&grads.w2, &n2, FLOOR))
}

/// ProtoNet loss gradient with respect to the embedding matrix.
pub fn protonet_error(seed: u64) -> f64 {
    let ep = sample_episode();
    let emb = gaussian(12, 4, seed);
    let (_, grad) = protonet_loss(&emb, &ep).unwrap();
    let num = numeric_grad(&emb, H, |e| protonet_loss(e, &ep).unwrap().0);
    max_rel_err(&grad, &num, FLOOR)
}

/// ProtoNet loss differentiated through the encoder.
pub fn protonet_encoder_error(seed: u64) -> f64 {
    let ep = sample_episode();
    let g = random_graph(12, 0.3, 5, seed);
    let input = GcnInput::new(&g);
    let p = EncoderParams::init(5, 6, 4, seed);
    let (_, grads) = episode_gradient(&p, &g, &input, &ep, &TrainConfig::default()).unwrap();
    let loss = |p: &EncoderParams| protonet_loss(&encode(p, &input).unwrap(), &ep).unwrap().0;
    let with_w1 = |w1: &Array2<f64>| EncoderParams { w1: w1.clone(), w2: p.w2.clone() };
    let n1 = numeric_grad_smooth(&p.w1, H_RELU, |w1| relu_mask(&with_w1(w1), &input), |w1| loss(&with_w1(w1)));
    let n2 = numeric_grad(&p.w2, H, |w2| loss(&EncoderParams { w1: p.w1.clone(), w2: w2.clone() }));
    max_rel_err(&grads.w1, &n1, FLOOR).max(max_rel_err(&grads.w2, &n2, FLOOR))
}

/// First-order MAML outer gradient against numeric differentiation of the
/// query loss at the adapted parameters.
pub fn fomaml_error(seed: u64) -> f64 {
    let ep = sample_episode();
    let g = random_graph(12, 0.3, 5, seed);
    let input = GcnInput::new(&g);
    let p = EncoderParams::init(5, 6, 4, seed);
    let out = maml_step(&p, &ep, &input, &input, 0.5, 2).unwrap();
    let adapted = &out.adapted;
    let q = |m: &MamlParams| maml_loss(m, &input, &ep.query).unwrap().0;
    let with_w1 = |w1: &Array2<f64>| MamlParams {
        encoder: EncoderParams { w1: w1.clone(), w2: adapted.encoder.w2.clone() },
        head: adapted.head.clone(),
    };
    let n1 = numeric_grad_smooth(&adapted.encoder.w1, H_RELU, |w1| relu_mask(&with_w1(w1).encoder, &input), |w1| q(&with_w1(w1)));
    let n2 = numeric_grad(&adapted.encoder.w2, H, |w2| {
        q(&MamlParams { encoder: EncoderParams { w1: adapted.encoder.w1.clone(), w2: w2.clone() }, head: adapted.head.clone() })
    });
    let nh = numeric_grad(&adapted.head, H, |h| q(&MamlParams { encoder: adapted.encoder.clone(), head: h.clone() }));
    max_rel_err(&out.outer.w1, &n1, FLOOR)
        .max(max_rel_err(&out.outer.w2, &n2, FLOOR))
        .max(max_rel_err(&out.head_grad, &nh, FLOOR))
}
