//! # latentflow
//!
//! Latent flow matching with hardmax-gated transformers.
//!
//! The crate covers the full pipeline: a small reverse-mode autodiff engine
//! ([`tensor`]), the transformer function class with hardmax-gated attention
//! ([`transformer`]), exact attention/feedforward weight constructions for
//! monomials and polynomials ([`construct`]), closed-form velocity fields for
//! discrete targets ([`oracle`]), flow-matching training ([`flow`]), ODE
//! sampling with Euler and reference integrators ([`sampler`]), autoencoder
//! pre-training for the latent round trip ([`autoencoder`]), and evaluation
//! metrics including exact Wasserstein-2 ([`metrics`]).

pub mod autoencoder;
pub mod construct;
pub mod csvio;
pub mod error;
pub mod field;
pub mod flow;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod tensor;
pub mod transformer;

pub use error::{LfError, Result};
pub use field::VelocityField;
pub use tensor::{Gradients, Tape, Tensor};

/// Crate version, stamped into experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
