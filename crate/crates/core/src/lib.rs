//! Hierarchical routing over retrieval frameworks and generator models.

pub mod backends;
pub mod difficulty;
pub mod exec;
pub mod harness;
pub mod policy;
pub mod protocol;
pub mod reward;
pub mod seed;
pub mod traces;
