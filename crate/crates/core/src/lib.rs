//! Zero-shot multilingual neural machine translation, from scratch.
//!
//! One shared LSTM encoder-decoder with additive attention is trained on a
//! pool of language pairs; a routing token prepended to each source sentence
//! names the desired output language, which lets the model translate pairs
//! it never saw during training. The crate provides the full pipeline:
//!
//! * [`tensor`] / [`tape`] / [`optim`] / [`gradcheck`] / [`eigen`] — dense
//!   float64 tensors, reverse-mode autodiff, Adam, a finite-difference
//!   gradient checker and a Jacobi eigensolver.
//! * [`corpus`] / [`vocab`] — tokenization, length filtering, routing
//!   tokens, vocabulary construction and padded batching.
//! * [`embeddings`] — `.vec` loading, cosine similarity and PCA-based
//!   dimensionality halving with post-processing.
//! * [`model`] — the 4-layer bidirectional LSTM encoder, additive-attention
//!   decoder and cross-entropy loss.
//! * [`training`] / [`checkpoint`] — teacher-forced multilingual training
//!   with Adam, loss logging and bit-exact checkpoints.
//! * [`inference`] — greedy decoding with attention capture.
//! * [`evaluation`] — corpus-level BLEU.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod eigen;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod inference;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use tensor::Tensor;
