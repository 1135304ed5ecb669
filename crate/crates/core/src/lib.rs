//! A desk-scale laboratory for factual knowledge extraction in a one-layer,
//! single-head transformer with one-hot token embeddings.
//!
//! The crate is organised bottom-up:
//!
//! * [`vocab`] lays out the token universe (subjects, relations, answers and
//!   per-relation QA prompt tokens).
//! * [`knowledge`] builds ground-truth knowledge bases, the Zipfian
//!   pretraining stream and the popularity-based finetuning splits.
//! * [`model`] is the forward pass, argmax decoding and probe quantities.
//! * [`grad`] holds the cross-entropy loss, exact gradients and a
//!   finite-difference oracle.
//! * [`train`] runs pretraining and finetuning with SGD.
//! * [`verify`] turns each theorem about the model into an executable check.
//! * [`harness`] wires everything into reproducible experiments with CSV and
//!   SVG output.

pub mod error;
pub mod grad;
pub mod harness;
pub mod knowledge;
pub mod matrix;
pub mod model;
pub mod train;
pub mod verify;
pub mod vocab;

pub use error::{Error, Result};
pub use grad::{ce_loss, grad_analytic, grad_fd, ExampleGrad, FdGradient, GradPair};
pub use harness::{Experiment, RunConfig, RunReport};
pub use knowledge::{
    build_kb, downstream_datasets, pretrain_stream, Downstream, Example, Format, KnowledgeBase,
    SplitSpec, SplitStrategy, ZipfDist,
};
pub use matrix::Matrix;
pub use model::{ForwardTrace, ModelParams};
pub use train::{evaluate, finetune, init_params, pretrain, PercentileCurve, TraceRow, TrainConfig};
pub use verify::{construct_hidden_kq, construct_memorizer, TheoremVerdict};
pub use vocab::{Token, TokenKind, Vocabulary};
