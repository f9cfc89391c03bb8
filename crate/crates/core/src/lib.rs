//! Edit-level vandalism scoring for a structured knowledge base.

pub mod config;
pub mod diff;
pub mod edit;
pub mod entity;
pub mod features;
pub mod registry;
pub mod corpus;
pub mod ingestion;
pub mod metrics;
pub mod forest;
pub mod synth;
pub mod eval;
pub mod pipeline;
pub mod api;
pub mod jobs;
