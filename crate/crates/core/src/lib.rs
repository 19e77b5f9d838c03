//! Adversarially robust autoencoders for novelty detection.
//!
//! An autoencoder trained only on normal data flags inputs it reconstructs
//! poorly. Training it on latent-space adversarial examples keeps it from
//! learning brittle features that would let it reconstruct anomalies too.

pub mod attacks;
pub mod data;
pub mod experiment;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod persist;
pub mod training;

pub use attacks::{AttackKind, PerturbationSpec};
pub use model::{Autoencoder, Sample, Split};
pub use training::{train, TrainConfig, TrainLog, Variant};
