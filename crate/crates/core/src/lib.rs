//! Room classification for 3D scene graphs using object-room common sense.
//!
//! The crate turns the objects found in a room into a room label, using only
//! object labels (and optionally geometry) rather than images. Modules:
//!
//! * [`scene_graph`]: the building/room/object hierarchy, label spaces, loading
//!   and preprocessing.
//! * [`cooccurrence`]: object-room conditional tables, entropy-based
//!   informativeness and object selection.
//! * [`query`]: sentence templates, structured room strings and bootstrapped
//!   training rows.
//! * [`lm_backend`]: scorer and embedder traits, HTTP clients and mocks.
//! * [`classifiers`]: zero-shot, naive-Bayes and embedding-head classifiers.
//! * [`eval`]: splits, metrics and the holdout/transfer experiments.
//! * [`cli`]: the `scenesense` command-line front end.

pub mod classifiers;
pub mod cli;
pub mod cooccurrence;
pub mod eval;
pub mod lm_backend;
pub mod query;
pub mod scene_graph;
