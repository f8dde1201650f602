//! Masked VAE collaborative filtering with personalized item alignment.
//!
//! The crate is organised bottom-up:
//!
//! - [`numeric`]: dense linear algebra, diagonal-Gaussian math, Adam and a
//!   finite-difference gradient checker.
//! - [`corpus`]: interaction ingestion, user splits with fold-in/holdout
//!   partitions, synthetic nested-cohort generators and the CSR container.
//! - [`vae`]: the masked multinomial VAE (encoder, decoder, loss, manual
//!   backpropagation, training loop, checkpoints and scoring).
//! - [`pia`]: learnable item anchors, the alignment loss and the adaptive
//!   alignment-weight schedule.
//! - [`eval`]: Recall@K / NDCG@K and activity-stratified reports.
//! - [`geometry`]: numerical checks of the latent-geometry results (masking
//!   contraction/expansion, transport-entropy bounds, exponential-family gap,
//!   shrinkage under alignment, sharing-radius probes).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod numeric;
pub mod pia;
pub mod vae;

pub use error::{Error, Result};

/// Seeded generator used throughout; ChaCha keeps streams stable across
/// platforms and crate upgrades.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate-wide generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
