//! Benchmark harness and metrics for joint pronunciation assessment (APA)
//! and mispronunciation detection and diagnosis (MDD).
//!
//! The pipeline is: [`corpus`] ingestion, [`prompts`] for SFT data and
//! inference prompts, [`inference`] against an HTTP endpoint or a mock,
//! [`parsing`] of model output, and scoring through [`align`],
//! [`mdd_metrics`] and [`stats`], aggregated by [`report`].

pub mod align;
pub mod corpus;
pub mod inference;
pub mod mdd_metrics;
pub mod parsing;
pub mod phoneset;
pub mod prompts;
pub mod report;
pub mod stats;
