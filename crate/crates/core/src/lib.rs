//! Simulation laboratory for quantum Viterbi decoding.
//!
//! A binary convolutional code is mapped onto a hidden Markov model, every
//! admissible trellis path is held as one amplitude of a path-space
//! statevector, path phases are marked by `e^{i omega * errors}` and a
//! diffusion restricted to the admissible subspace amplifies the most
//! probable path. The classical Viterbi algorithm and brute-force
//! enumeration serve as oracles throughout.
//!
//! Modules:
//! - [`hmm`]: hidden Markov models with sparse transition/emission tables.
//! - [`code`]: convolutional encoders, state diagrams, the binary symmetric channel.
//! - [`viterbi`]: classical Viterbi, brute force, path metric multisets.
//! - [`qva`]: the path-space simulator (superposition, phase marking, diffusion, sweeps).
//! - [`circuit`]: gate-level blocks verified against the path-level operators.
//! - [`probabilistic`]: amplitude-loaded variant with mode extraction.
//! - [`experiment`]: config-driven runs backing the `qviterbi` binary.

pub mod circuit;
pub mod code;
pub mod error;
pub mod experiment;
pub mod hmm;
pub mod numfmt;
pub mod probabilistic;
pub mod qva;
pub mod reference;
pub mod viterbi;

pub use error::{Error, Result};
pub use num_complex::Complex64;
