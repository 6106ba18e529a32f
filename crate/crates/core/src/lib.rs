//! Diversified message-passing experts for node classification.
//!
//! The crate covers the whole pipeline: graph ingestion and synthetic
//! generation ([`graph`]), node and graph metrics ([`metrics`]), domain
//! assignment and its accuracy-gain evaluation ([`domains`]), small
//! message-passing experts with hand-written backprop ([`experts`]), expert-set
//! diversity and aggregation ([`ensemble`]), and experiment orchestration
//! ([`runner`]).

pub mod domains;
pub mod ensemble;
pub mod error;
pub mod experts;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod runner;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
