//! Two-layer GCN encoder with hand-written backpropagation and Adam.
//!
//! `Z = Â · ReLU(Â X W1) · W2` where `Â = (I + D)^{-1/2} (A + I) (I + D)^{-1/2}`.
//! No bias terms, no activation on the output layer.

use std::path::Path;

use ndarray::{Array2, Zip};
use rand::Rng as _;

use crate::diffusion::{transition_matrix, SparseMatrix};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::{self, Reader};
use crate::rng;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NAQW";
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_OUT: usize = 64;

/// Normalized adjacency plus features: everything the encoder reads from a graph.
#[derive(Debug, Clone)]
pub struct GcnInput {
    adj: SparseMatrix,
    features: Array2<f64>,
}

impl GcnInput {
    pub fn new(g: &Graph) -> Self {
        GcnInput {
            adj: transition_matrix(g, 1.0).expect("self-loop weight 1 is always defined"),
            features: g.features().clone(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.n()
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adj
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// `Â · m`, rows accumulated in ascending neighbor order.
    pub fn propagate(&self, m: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(m.dim());
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            for (j, a) in self.adj.row(i) {
                row.scaled_add(a, &m.row(j));
            }
        }
        out
    }
}

/// Encoder weights. Also used as the gradient and Adam-moment container.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl EncoderParams {
    /// Glorot-uniform initialization.
    pub fn init(d: usize, hidden: usize, out: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
        };
        let w1 = glorot(d, hidden);
        let w2 = glorot(hidden, out);
        EncoderParams { w1, w2 }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            w1: Array2::zeros(self.w1.dim()),
            w2: Array2::zeros(self.w2.dim()),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.nrows(), self.w1.ncols(), self.w2.ncols())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &EncoderParams) {
        self.w1.scaled_add(scale, &other.w1);
        self.w2.scaled_add(scale, &other.w2);
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.w2.iter()).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.w1.iter().chain(self.w2.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self, input: &GcnInput) -> Result<()> {
        let (d, h, _) = self.dims();
        if input.features.ncols() != d {
            return Err(Error::shape(format!("W1 expects {d} input features, graph has {}", input.features.ncols())));
        }
        if self.w2.nrows() != h {
            return Err(Error::shape(format!("W1 has {h} columns but W2 has {} rows", self.w2.nrows())));
        }
        Ok(())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `Â X W1`
    pub pre: Array2<f64>,
    /// `ReLU(pre)`
    pub hidden: Array2<f64>,
    pub z: Array2<f64>,
}

pub fn forward(params: &EncoderParams, input: &GcnInput) -> Result<Forward> {
    params.check(input)?;
    let pre = input.propagate(&input.features.dot(&params.w1));
    let hidden = pre.mapv(|v| v.max(0.0));
    let z = input.propagate(&hidden.dot(&params.w2));
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("encoder produced non-finite embeddings"));
    }
    Ok(Forward { pre, hidden, z })
}

/// Node embeddings, `n_nodes × out`.
pub fn encode(params: &EncoderParams, input: &GcnInput) -> Result<Array2<f64>> {
    Ok(forward(params, input)?.z)
}

/// Gradients of `<upstream, Z>` with respect to `W1` and `W2`, reusing a
/// forward pass.
pub fn backward(
    params: &EncoderParams,
    input: &GcnInput,
    fwd: &Forward,
    upstream: &Array2<f64>,
) -> Result<EncoderParams> {
    if upstream.dim() != fwd.z.dim() {
        return Err(Error::shape(format!("upstream gradient {:?} vs embeddings {:?}", upstream.dim(), fwd.z.dim())));
    }
    // Â is symmetric, so Â^T g = Â g.
    let d_q = input.propagate(upstream);
    let w2 = fwd.hidden.t().dot(&d_q);
    let mut d_pre = d_q.dot(&params.w2.t());
    Zip::from(&mut d_pre).and(&fwd.pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    let d_p = input.propagate(&d_pre);
    let w1 = input.features.t().dot(&d_p);
    Ok(EncoderParams { w1, w2 })
}

/// Forward then backward in one call.
pub fn encode_backward(params: &EncoderParams, input: &GcnInput, upstream: &Array2<f64>) -> Result<EncoderParams> {
    let fwd = forward(params, input)?;
    backward(params, input, &fwd, upstream)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: EncoderParams,
    pub v: EncoderParams,
}

impl AdamState {
    pub fn new(params: &EncoderParams, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

fn adam_update(w: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, s: &AdamState, c1: f64, c2: f64) {
    Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
        *m = s.beta1 * *m + (1.0 - s.beta1) * g;
        *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= s.lr * m_hat / (v_hat.sqrt() + s.eps);
    });
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut EncoderParams, grads: &EncoderParams, state: &mut AdamState) -> Result<()> {
    if grads.dims() != params.dims() || state.m.dims() != params.dims() {
        return Err(Error::shape("gradient or optimizer state shape differs from parameters"));
    }
    if !grads.is_finite() {
        return Err(Error::numeric(format!("non-finite gradient at optimizer step {}", state.step + 1)));
    }
    state.step += 1;
    let c1 = 1.0 - state.beta1.powi(state.step as i32);
    let c2 = 1.0 - state.beta2.powi(state.step as i32);
    let snapshot = state.clone();
    adam_update(&mut params.w1, &grads.w1, &mut state.m.w1, &mut state.v.w1, &snapshot, c1, c2);
    adam_update(&mut params.w2, &grads.w2, &mut state.m.w2, &mut state.v.w2, &snapshot, c1, c2);
    Ok(())
}

/// Weights plus Adam moments as stored on disk.
///
/// Layout: `NAQW`, `u32` d, `u32` hidden, `u32` out, then W1 and W2
/// row-major `f64`, then the Adam first moments (W1, W2), second moments
/// (W1, W2), and a `u64` step count. Little-endian throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub m: EncoderParams,
    pub v: EncoderParams,
    pub step: u64,
}

impl Checkpoint {
    pub fn from_state(params: &EncoderParams, adam: &AdamState) -> Self {
        Checkpoint {
            params: params.clone(),
            m: adam.m.clone(),
            v: adam.v.clone(),
            step: adam.step,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let (d, h, o) = self.params.dims();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [d, h, o] {
            out.extend_from_slice(&io::usize_to_u32(v, "dimension")?.to_le_bytes());
        }
        for p in [&self.params, &self.m, &self.v] {
            if p.dims() != (d, h, o) {
                return Err(Error::shape("optimizer moments differ in shape from weights"));
            }
        }
        for m in [&self.params.w1, &self.params.w2, &self.m.w1, &self.m.w2, &self.v.w1, &self.v.w2] {
            for x in m.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.magic(CHECKPOINT_MAGIC)?;
        let d = r.u32()? as usize;
        let h = r.u32()? as usize;
        let o = r.u32()? as usize;
        let mut mat = |rows: usize, cols: usize| -> Result<Array2<f64>> {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(r.f64()?);
            }
            Ok(Array2::from_shape_vec((rows, cols), data).expect("sized"))
        };
        let params = EncoderParams { w1: mat(d, h)?, w2: mat(h, o)? };
        let m = EncoderParams { w1: mat(d, h)?, w2: mat(h, o)? };
        let v = EncoderParams { w1: mat(d, h)?, w2: mat(h, o)? };
        let step = r.u64()?;
        r.finish()?;
        Ok(Checkpoint { params, m, v, step })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_bytes(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&io::read_bytes(path)?, path)
    }
}
