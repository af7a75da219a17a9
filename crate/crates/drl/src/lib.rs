//! Hybrid actor-critic / double-Q agent for joint antenna allocation and
//! precoding, built on from-scratch dense networks.
//!
//! The actor-critic pair outputs precoder amplitudes; the double-Q network
//! picks one of the `(2^M - 2)(2^N - 2)` antenna partitions.

pub mod agent;
pub mod artifact;
pub mod env;
pub mod mlp;
pub mod optim;
pub mod replay;
pub mod train;

pub use agent::{
    actor_objective_gradient, ddpg_targets, ddpg_update, ddqn_targets, ddqn_update, polyak, ActorCritic, AgentHyperparams, Batch,
    DoubleQ, RunningNorm,
};
pub use artifact::PolicyArtifact;
pub use env::{EnvAction, EnvState, Environment, StepOutcome};
pub use mlp::{Activation, Mlp};
pub use optim::{Adam, Optimizer, Sgd};
pub use replay::{ReplayBuffer, Transition};
pub use train::{curve_csv, evaluate_policy, train, CurveRow, Rollout, TrainError, TrainOptions, TrainOutcome, CURVE_HEADER};

use fdeh_core::channel::ChannelError;
use fdeh_core::metrics::MetricsError;
use fdeh_core::AllocationError;

#[derive(Debug, thiserror::Error)]
pub enum DrlError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("non-finite {what} at index {index}: {value}")]
    NonFinite { what: &'static str, index: usize, value: f64 },
    #[error("policy artifact line {line}: {message}")]
    Artifact { line: usize, message: String },
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
