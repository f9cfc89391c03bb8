//! Slow reference implementations and input generators for tests.

pub mod oracle;
pub mod strategy;
