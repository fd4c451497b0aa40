//! Contrastive wildcard-trigram pattern mining.
//!
//! Builds TF x DF bigram graphs per cohort, subtracts the reference graph
//! from the target graph, splits the boosted graph's vocabulary into
//! connector and topical words, enumerates `CW CW TW`-style trigram
//! templates with the topical slot wildcarded, ranks them with a five-factor
//! attention score and classifies users from bag-of-pattern vectors.

pub mod analysis;
pub mod attention;
pub mod boosting;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod features;
pub mod graphmetrics;
pub mod patterns;
pub mod pipeline;
pub mod synth;
pub mod util;
pub mod wordgraph;

pub use error::{Error, Result};
