//! Allocation-only core of the solace counseling chat engine.
//!
//! Everything here is pure computation over in-memory values: the peephole
//! LSTM numerics and their training loop, the text pipeline, the binary
//! classifier, the corpus filter, the encoder-decoder responder with MMI
//! reranking, the dialogue routing state machine and the evaluation
//! arithmetic. File formats, persistence and serving live in the `solace`
//! crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod activation;
pub mod checkpoint;
pub mod classifier;
pub mod corpus;
pub mod dialogue;
mod error;
pub mod eval;
pub mod lstm;
pub mod loss;
pub mod optim;
pub mod params;
pub mod responder;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
