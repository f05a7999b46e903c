//! Signature forensics pipeline for scanned corporate documents.
//!
//! The crate turns a directory of scanned documents into verified signature
//! clusters (groups of signature images sharing an author) through a fixed
//! sequence of stages:
//!
//! ```text
//! ingest -> ocr gate -> extract (CCA) -> filter (CNN) -> clean (GAN)
//!        -> embed (Siamese encoder) -> cluster (agglomerative, threshold t)
//! ```
//!
//! Stage boundaries are plain data types ([`types::PageImage`],
//! [`types::CandidateRegion`], [`types::SignatureImage`],
//! [`types::Embedding`], [`types::ClusterAssignment`]); every stage is usable
//! on its own, and [`pipeline::run_pipeline`] wires them together with
//! telemetry and a persistent work directory.
//!
//! The learned stages (filter, clean, embed) train at desk scale on CPU; the
//! [`synth`] module generates self-contained synthetic corpora for training
//! and for end-to-end verification.

pub mod clean_gan;
pub mod config;
pub mod nn;
pub mod extract;
pub mod filter_cnn;
pub mod font;
pub mod ingest;
pub mod raster;
pub mod synth;
pub mod types;
// modules below land in build order
// pub mod siamese;
// pub mod cluster;
// pub mod evaluate;
// pub mod store;
// pub mod data;
// pub mod pipeline;

pub use config::{validate_config, ConfigError, PipelineConfig};
pub use types::{
    BBox, BinaryImage, CandidateRegion, ClusterAssignment, Embedding, PageImage, PairExample,
    Provenance, SignatureImage, SignatureState,
};
