//! Signal-processing core for a full-duplex MIMO link in which one device
//! powers the other wirelessly while receiving data from it.
//!
//! - [`numerics`]: complex matrix kernels (log-determinants, PSD projection, Cholesky).
//! - [`channel`]: Rayleigh/Rician channel draws, noise power and antenna-partition slicing.
//! - [`metrics`]: information rate, harvested power, weighted objective, time-switching baseline.
//! - [`allocation`]: antenna-partition enumeration, greedy allocation and the exhaustive oracle.
//! - [`precoding`]: tangent-linearised rate, projected-gradient inner solver, the SCA loop.

pub mod allocation;
pub mod channel;
mod exec;
pub mod metrics;
pub mod numerics;
pub mod precoding;
pub mod units;

pub use allocation::{
    allocate_antennas, enumerate_configs, exhaustive_search, AllocationError, AllocationRule, ExhaustiveOutcome, SubsystemConfig,
};
pub use exec::Execution;
pub use channel::{noise_covariance, partition, sample_channel, ChannelParams, ChannelRealization, SubsystemChannels};
pub use metrics::{
    evaluate, effective_sinr, harvested_power, info_rate, time_switching_rate, weighted_objective, CovariancePair, EnergyMixing, Evaluation,
    PowerBudget,
};
pub use numerics::{CMatrix, PsdMatrix};
pub use precoding::{equal_power, linearized_rate, sca_precoding, solve_inner, PrecodingError, ScaOutcome, ScaSettings, ScaTrace};
