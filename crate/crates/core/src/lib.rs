//! Annotated code search: retrieval of (description, code) snippet pairs
//! from natural-language queries.
pub mod bench;
pub mod corpus;
pub mod embed;
pub mod encoders;
pub mod index;
pub mod lexical;
pub mod miner;
mod optim;
pub mod pipeline;
pub mod tuner;
pub mod vector;
