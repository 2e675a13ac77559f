//! Reasoning-chain extraction for multi-hop question answering.
//!
//! The pipeline derives pseudogold chains by searching an entity/paragraph
//! sentence graph ([`graph`], [`oracle`]), trains a pointer-network extractor
//! on them ([`model`], [`train`]) and scores the extracted evidence
//! ([`metrics`]). [`syngen`] produces planted-chain corpora for testing.

pub mod cli;
pub mod corpus;
pub mod entities;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod syngen;
pub mod train;

pub use error::{Error, Result};
