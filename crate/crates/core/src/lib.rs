pub mod cli;
pub mod corpus;
pub mod evalharness;
pub mod executor;
pub mod repair;
pub mod retrieval;
