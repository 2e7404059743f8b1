//! Desk-scale self-supervised video pretraining.
//!
//! Two-stage pipeline: an auxiliary similarity-distillation stage in which a
//! momentum teacher distils anchor-similarity distributions to a student, and
//! a primary pretext stage in which the student predicts the speed rate and
//! temporal position of a pace-altered segment inside each training clip.
//! A finetune/evaluation harness measures downstream representation quality,
//! and a synthetic moving-shape dataset makes the whole pipeline testable on a
//! CPU in minutes.
//!
//! Entry points by capability (each also has a runnable example under
//! `examples/`):
//!
//! - [`sampling`] — segment-pace frame-index plans and their enumeration.
//! - [`dataio`] — synthetic videos, frame-directory ingestion, clip decoding.
//! - [`augment`] — per-clip spatial augmentation and center crop.
//! - [`models`] — 3D encoder family and heads over a flat parameter store.
//! - [`distill`] — memory bank, similarity distributions, KL loss, momentum
//!   teacher update, and the stage-1 training step.
//! - [`pretext`] — joint speed/segment classification (stage 2).
//! - [`evalharness`] — finetuning plus the 10-clip averaged-softmax protocol.
//! - [`cli`] — run configuration, checkpointing, metrics files, plots, and
//!   the command implementations behind the `segpace` binary.
//! - [`oracle`] — independent reference implementations used by tests.

pub mod augment;
pub mod cli;
pub mod dataio;
pub mod distill;
pub mod evalharness;
pub mod models;
pub mod nn;
pub mod oracle;
pub mod pretext;
pub mod rngkey;
pub mod sampling;
