//! Adversarially trained user-feedback simulator for reinforcement-learning
//! recommenders.
//!
//! A generator learns to imitate the logging recommendation policy; a
//! discriminator with `2K` outputs separates logged from generated
//! recommendations while predicting the user's feedback class. The trained
//! discriminator becomes the reward model of [`env::Simulator`].

pub mod data;
pub mod discriminator;
pub mod encoder;
pub mod env;
pub mod error;
pub mod eval;
pub mod generator;
pub mod kv;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
