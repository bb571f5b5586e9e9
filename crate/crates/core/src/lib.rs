pub mod aligner;
pub mod aud;
pub mod baselines;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod plot;
pub mod segmenter;
pub mod synth;

pub use error::{Error, Result};
