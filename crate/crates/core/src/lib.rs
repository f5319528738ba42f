//! Dialogue-quality scoring over relation-typed dialogue graphs.
//!
//! A dialogue is encoded utterance-by-utterance, contextualized with a
//! bidirectional recurrent pass, and turned into a directed graph whose
//! edges carry attention weights and one of nine speaker/temporal relation
//! types. A two-stage graph convolution followed by pooling and a linear
//! head produces a single quality score per dialogue. The model is trained
//! contrastively with a margin ranking loss to prefer original dialogues
//! over perturbed negatives (utterance replacement or speaker-level
//! shuffling), and evaluated by discrimination accuracy and by Spearman
//! correlation against human quality annotations.
//!
//! Module map:
//! - [`corpus`]: ingest, validate, filter, and summarize dyadic dialogue
//!   corpora and human-annotation files.
//! - [`perturb`]: negative sampling (UR, SS) and labeled pair datasets.
//! - [`encode`]: utterance encoders and the bidirectional contextualizer.
//! - [`graph`]: windowed graph construction, attention edge weights, and
//!   the 9-way relation typing.
//! - [`model`]: the two-stage graph convolution, pooling, score head,
//!   margin loss, and gradients.
//! - [`train`]: contrastive training loop, batching, checkpoints.
//! - [`evaluate`]: discrimination accuracy, Spearman correlation reports,
//!   turn-score aggregation, and the RANDOM/CoSim baselines.
//! - [`synthetic`]: seeded toy corpora for tests and benches.
//!
//! With the default `parallel` feature, batch scoring, dataset
//! construction, and per-batch gradient accumulation fan out over rayon;
//! without it the same code paths run sequentially. Results are identical
//! either way: parallel maps preserve order and reductions stay sequential.

pub mod corpus;
pub mod encode;
pub mod evaluate;
pub mod graph;
pub mod model;
pub mod perturb;
pub mod synthetic;
pub mod train;

mod lstm;
mod util;

pub use lstm::{BiLstm, LstmCell};
