//! Toolkit for paraphrase-robust visual question answering over remote
//! sensing imagery.
//!
//! The crate covers the full experiment pipeline:
//!
//! * [`corpus`] — the question/answer corpus data model, JSON format, and
//!   deterministic batch assembly.
//! * [`translate`] — translator backends: a deterministic rule-based mock
//!   and an HTTP machine-translation client with a persistent cache.
//! * [`augment`] — back-translation data augmentation with normalization
//!   and duplicate dropping.
//! * [`model`] — a small differentiable image+question classifier (CNN
//!   image encoder, recurrent question encoder, multiplicative fusion).
//! * [`training`] — triplet contrastive loss over fused features, the
//!   combined objective, and the seeded training loop.
//! * [`eval`] — per-type accuracy, average accuracy (AA), overall accuracy
//!   (OA), and the train/test robustness setting matrix.
//! * [`synth`] — a deterministic synthetic shape corpus for desk-scale
//!   robustness experiments.
//! * [`report`] — Markdown/CSV tables and bar-chart rendering for metric
//!   reports.

pub mod augment;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod report;
pub mod synth;
pub mod training;
pub mod translate;

pub use error::{Error, Result};
