//! Word-embedding training and evaluation: six negative-sampling neural
//! models and a weighted co-occurrence factorization over one corpus
//! pipeline, with intrinsic evaluation tasks and a performance-gain-ratio
//! comparison against a random baseline.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod glove;
pub mod io;
pub mod model;
pub mod params;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
