//! One-bit compressive sensing autoencoder.
//!
//! The encoder quantizes linear measurements `Φx` to their signs; the decoder
//! is a stack of renormalized fixed-point layers, each with its own step-size
//! and per-coordinate shrinkage threshold. Everything here is plain `f64`
//! arithmetic on row-major dense storage, with a hand-written backward pass
//! for training and a finite-difference checker to certify it.
//!
//! Randomness comes from [`rand_chacha::ChaCha8Rng`] seeded through
//! [`signals::rng_from_seed`], so a seed fully determines every signal,
//! matrix and training batch.

pub mod encoder;
pub mod error;
pub mod grad;
pub mod gradcheck;
pub mod io;
pub mod linalg;
pub mod rfpi;
pub mod signals;
pub mod train;
pub mod unfolded;

pub use error::{Error, Result};
pub use linalg::Matrix;
