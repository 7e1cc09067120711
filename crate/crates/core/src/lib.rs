//! Neighbors-as-queries episode generation for graph meta-learning.
//!
//! The crate builds unsupervised training episodes for few-shot node
//! classification: a support set of randomly sampled nodes, each given its
//! own pseudo-label, and a query set made of each support node's most similar
//! nodes under a precomputed similarity index (raw-feature similarity or a
//! personalized-PageRank diffusion). Around that core sit a from-scratch
//! 2-layer GCN encoder, ProtoNet and first-order MAML meta-learners, and a
//! linear-probe evaluation protocol.
//!
//! Pipeline, bottom-up:
//!
//! - [`graph`]: CSR graph, labels/splits, file loaders, bias injectors, SBM fixtures
//! - [`similarity`]: top-k neighbor indices under cosine, Jaccard and negative Euclidean
//! - [`diffusion`]: truncated PPR diffusion exposed as a similarity index
//! - [`episodes`]: NaQ, supervised and augmentation-based episode generators
//! - [`encoder`]: GCN forward/backward and Adam
//! - [`meta`]: ProtoNet loss, first-order MAML, the episodic training loop
//! - [`eval`]: task sampling, linear probing, confidence intervals
//! - [`analysis`]: class-level similarity diagnostics, embedding dumps
//! - [`pipeline`]: cached, content-addressed commands behind the `naq` binary

pub mod analysis;
pub mod diffusion;
pub mod encoder;
pub mod episodes;
mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod meta;
pub mod pipeline;
pub mod rng;
pub mod similarity;

pub use error::{Error, Result};
pub use graph::{Graph, LabelSet, Split};
pub use similarity::{Metric, SimilarityIndex};
