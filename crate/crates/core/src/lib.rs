//! Deep exploration with variational inference over Q-network parameters.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: flat-parameter feed-forward networks with exact backpropagation.
//! - [`variational`]: mean-field Gaussian beliefs, entropy, and the KLqp loss
//!   and reparameterized gradient.
//! - [`envs`]: the chain MDP with thermometer features, CartPole and MountainCar.
//! - [`agents`]: Variational DQN, DQN and NoisyNet behind one [`agents::Agent`] trait.
//! - [`harness`]: seeded multi-seed experiments, iteration statistics and visit probabilities.
//! - [`cli`]: TOML configs, CSV output, presets and SVG figures used by the `varq` binary.
//!
//! See the `examples/` directory of this crate for one runnable program per capability.

pub mod agents;
pub mod cli;
pub mod envs;
mod error;
pub mod harness;
pub mod nn;
pub mod plot;
pub mod variational;

pub use error::{Error, Result};
