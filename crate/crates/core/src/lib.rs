//! Numerical laboratory for the Markov chain of hidden representations in
//! random batch-normalized linear networks.
//!
//! A batch of `n` samples with width `d` is a `d x n` matrix `H`. One layer
//! draws `W ~ N(0, I_d / d)` and maps
//!
//! ```text
//! H' = BN(W F(H)) / sqrt(d),    BN(M) = diag(M M^T)^(-1/2) M
//! ```
//!
//! which keeps `||H'||_F = 1`. Repeated layers drive `H^T H` towards `I / n`
//! up to a residual of order `n / sqrt(d)`. The crate measures that
//! convergence ([`metrics`]), evaluates the closed-form bounds that describe
//! it and checks them by Monte Carlo ([`theory`]), and provides the SVD-based
//! weight initializer that reproduces the same orthogonalizing effect without
//! normalization ([`init`]).
//!
//! The crate is `no_std` and only needs `alloc`. IO, parallel sweeps and the
//! command line live in the `orthochain` companion crate.
//!
//! ```
//! use orthochain_core::chain::{simulate_chain, Activation, ChainConfig, ChainKind};
//!
//! let config = ChainConfig::new(64, 4, 20)
//!     .with_activation(Activation::Linear)
//!     .with_kind(ChainKind::Bn)
//!     .with_seed(7);
//! let traces = simulate_chain(&config, None).unwrap();
//! assert_eq!(traces.len(), 20);
//! assert!((traces[19].frob_norm - 1.0).abs() < 1e-10);
//! ```

#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod chain;
mod error;
pub mod init;
pub mod metrics;
pub mod numerics;
pub mod theory;

pub use error::{Error, Result};
pub use numerics::{Matrix, SeededRng, SingularSpectrum, SvdFactors};
