//! Grammar-based fuzzing for synthetic tabular data.

pub mod cli;
pub mod constraints;
pub mod evaluation;
pub mod evolution;
pub mod fixtures;
pub mod grammar;
pub mod ml;
pub mod pipeline;
pub mod rng;
pub mod tabular;
