//! Multi-source topic aggregation.
//!
//! The crate turns public documents produced by politicians (parliamentary
//! transcripts, social media exports, blog feeds) into topic digests that can
//! be sliced by topic, person, party, time and platform.
//!
//! The pipeline stages map onto modules:
//!
//! - [`ingest`] fetches raw documents from heterogeneous sources and
//!   normalizes them into [`ingest::Document`]s.
//! - [`textprep`] tokenizes, builds the vocabulary and splits every document
//!   into paragraphs of similar length.
//! - [`lda`] trains a collapsed Gibbs sampler over the paragraphs and folds
//!   new paragraphs into a frozen model.
//! - [`hybrid`] is the embedding-augmented alternative backend: topic vectors
//!   in a word-embedding space, sparse document mixtures, skip-gram training.
//! - [`aggregate`] combines paragraph distributions into documents and rolls
//!   documents up into time buckets.
//! - [`store`] persists documents, topic entries and the model registry.
//! - [`service`] is the read-only HTTP API.
//! - [`cli`] drives the pipeline end to end (`mustas` binary).
//!
//! Runnable walkthroughs for every stage live in the crate's `examples/`
//! directory.

pub mod aggregate;
pub mod cli;
pub mod hybrid;
pub mod ingest;
pub mod lda;
pub mod rng;
pub mod service;
pub mod store;
pub mod synthetic;
pub mod textprep;

mod topic;

pub use topic::{TopicDistribution, TopicError};
