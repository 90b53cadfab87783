//! Deep Q-learning for multi-stage design problems evaluated by simulation.
//!
//! The crate ships two capacity-expansion environments (price uncertainty,
//! and price plus demand uncertainty), a tabular Q-learning agent, a small
//! feedforward network with hand-written backpropagation, a DQN trainer with
//! experience replay and a target network, and a set of oracles (closed-form
//! thresholds, Monte Carlo stage conditions, lattice backward induction and
//! policy evaluation) used to verify what the agents learn.

pub mod cli;
pub mod config;
pub mod dqn;
pub mod env;
pub mod error;
pub mod manifest;
pub mod neuralnet;
pub mod oracle;
pub mod policy;
pub mod qtable;
pub mod rng;

pub use config::RunConfig;
pub use dqn::{PolicyArtifact, TrainingConfig};
pub use env::{CapacityEnv, Decision, DemandParams, EnvParams, EnvState, StepOutcome};
pub use error::{Error, Result};
pub use policy::Policy;
