//! Beyond-visual-range air-combat environment with a Rainbow DQN agent,
//! self-play training harness and a live human-vs-agent match service.

pub mod config;
pub mod episode;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod rainbow;
pub mod service;
pub mod simcore;
pub mod tactics;

pub use config::RunConfig;
pub use error::{BvrError, Result};
