pub mod annotate;
pub mod autograd;
pub mod chunking;
pub mod cli;
pub mod cognn;
pub mod corpus;
pub mod crf;
pub mod eval;
pub mod experiments;
pub mod error;
pub mod gradcheck;
pub mod isbert;
pub mod labels;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod service;
pub mod tensor;
pub mod tokenizer;

pub use error::{Error, Result};
