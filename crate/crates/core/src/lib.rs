//! External path length of binary tries built over strings emitted by a
//! two-state Markov source.
//!
//! The crate is organised bottom-up:
//!
//! - [`source`]: the Markov chain, its stationary law and entropy rate, and
//!   reproducible lazily-extended bit streams.
//! - [`trie`]: trie construction over bit streams and shape statistics.
//! - [`spectral`]: the dominant eigenvalue `λ(s)` of `(p_ij^{-s})`, its
//!   derivatives at `s = -1`, the variance constant `σ²` and the contraction
//!   factor of the limiting fixed-point map.
//! - [`moments`]: exact first and second moments of the path length by
//!   dynamic programming over the binomial split recurrences.
//! - [`poisson`]: Poissonized means and variances and the functional
//!   identities they satisfy.
//! - [`clt`]: the Monte Carlo harness (sampling, standardization, KS
//!   distance, the resampling fixed-point map, variance growth fits).
//! - [`verify`]: an end-to-end scorecard over all of the above.

pub mod binomial;
pub mod clt;
pub mod error;
pub mod moments;
pub mod poisson;
pub mod source;
pub mod spectral;
pub mod trie;
pub mod verify;

pub use error::{Error, Result};
pub use source::{BitStream, Entropy, MarkovChain, Symbol};
