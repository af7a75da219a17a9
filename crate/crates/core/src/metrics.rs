//! Performance functionals: information rate at P1, harvested power at P2,
//! the weighted objective, effective SINR and the time-switching reference.

use thiserror::Error;

use crate::channel::{ChannelRealization, SubsystemChannels};
use crate::numerics::{self, hstack, log2det_noisy_gram, CMatrix, NoisyGram, NumericsError, PsdMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("invalid power budget: {0}")]
    InvalidBudget(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("covariance shape {found:?} does not match channel block {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// How harvested watts enter the weighted objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyMixing {
    /// Energy is divided by `P_S` before mixing, so both terms are O(1)-ish
    /// across a power sweep.
    #[default]
    Normalized,
    /// Energy in watts is added to the rate in bps/Hz as is.
    Raw,
}

impl EnergyMixing {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Normalized => "normalized",
            Self::Raw => "raw",
        }
    }
}

impl std::str::FromStr for EnergyMixing {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "raw" => Ok(Self::Raw),
            other => Err(format!("unknown energy mixing '{other}' (expected normalized|raw)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBudget {
    /// Maximum transmit power at P1, watts.
    pub p_s: f64,
    /// Power available at P2 from the previous harvest, watts.
    pub p_h: f64,
    /// Harvesting QoS target, watts.
    pub p_q: f64,
    /// Rate/energy trade-off, strictly between 0 and 1.
    pub alpha: f64,
    pub mixing: EnergyMixing,
}

impl PowerBudget {
    pub fn new(p_s: f64, p_h: f64, p_q: f64, alpha: f64) -> Result<Self> {
        let budget = Self { p_s, p_h, p_q, alpha, mixing: EnergyMixing::Normalized };
        budget.validate()?;
        Ok(budget)
    }

    /// Fully charged P2 (`P_h = P_S`) with the QoS target at `P_S`.
    pub fn fully_charged(p_s: f64, alpha: f64) -> Result<Self> {
        Self::new(p_s, p_s, p_s, alpha)
    }

    pub fn with_mixing(mut self, mixing: EnergyMixing) -> Self {
        self.mixing = mixing;
        self
    }

    /// Same budget with a new `P_h`, clamped to `[0, P_S]`.
    pub fn with_available(mut self, p_h: f64) -> Self {
        self.p_h = p_h.clamp(0.0, self.p_s);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MetricsError::InvalidBudget(m));
        if !(self.p_s > 0.0 && self.p_s.is_finite()) {
            return bad(format!("P_S must be positive, got {}", self.p_s));
        }
        if !(self.p_h >= 0.0 && self.p_h <= self.p_s) {
            return bad(format!("P_h must lie in [0, P_S], got {} with P_S = {}", self.p_h, self.p_s));
        }
        if !(self.p_q >= 0.0 && self.p_q.is_finite()) {
            return bad(format!("P_Q must be non-negative, got {}", self.p_q));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie strictly between 0 and 1, got {}", self.alpha));
        }
        Ok(())
    }

    /// Trace cap for `Q2`: the QoS power, limited by what P2 actually holds.
    pub fn q2_cap(&self) -> f64 {
        self.p_q.min(self.p_h)
    }

    /// Multiplier applied to watts in the objective.
    pub fn energy_weight(&self) -> f64 {
        match self.mixing {
            EnergyMixing::Normalized => (1.0 - self.alpha) / self.p_s,
            EnergyMixing::Raw => 1.0 - self.alpha,
        }
    }
}

/// Transmit covariances of the two IT/EH links.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    /// P1 energy-transmit covariance, M_h x M_h.
    pub q1: PsdMatrix,
    /// P2 information-transmit covariance, N_I x N_I.
    pub q2: PsdMatrix,
}

impl CovariancePair {
    pub fn new(q1: PsdMatrix, q2: PsdMatrix) -> Self {
        Self { q1, q2 }
    }

    pub fn zeros(m_h: usize, n_i: usize) -> Self {
        Self { q1: PsdMatrix::zeros(m_h), q2: PsdMatrix::zeros(n_i) }
    }

    /// Trace constraints `Tr Q1 <= P_S`, `Tr Q2 <= P_h` (PSD-ness is held by
    /// construction).
    pub fn is_feasible(&self, budget: &PowerBudget) -> bool {
        let slack = 1e-9 * budget.p_s.max(1.0);
        self.q1.trace() <= budget.p_s + slack && self.q2.trace() <= budget.p_h + slack
    }

    fn check_shapes(&self, sub: &SubsystemChannels) -> Result<()> {
        let check = |expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(MetricsError::ShapeMismatch { expected: (expected, expected), found: (found, found) })
            }
        };
        check(sub.m_h(), self.q1.dim())?;
        check(sub.n_i(), self.q2.dim())
    }
}

/// `log2 |I + (Sigma1 + H1 Q1 H1^H)^{-1} H_I Q2 H_I^H|`.
///
/// Evaluated by whitening the information signal against the
/// interference-plus-noise covariance, whose eigen-structure comes from the
/// SVD of `H1 F1` (with `Q1 = F1 F1^H`), and then taking `log2 |I + D D^H|`.
pub fn info_rate(sub: &SubsystemChannels, qp: &CovariancePair) -> Result<f64> {
    qp.check_shapes(sub)?;
    let interference = &sub.h1 * qp.q1.factor();
    let gram = NoisyGram::new(sub.noise, &interference)?;
    let signal = gram.whiten(&(&sub.h_i * qp.q2.factor()));
    Ok(log2det_noisy_gram(1.0, &signal)?.max(0.0))
}

/// The same rate as a difference of two log-determinants,
/// `log2 |Sigma1 + A + B| - log2 |Sigma1 + A|` with `A` the interference and
/// `B` the signal covariance at P1.
pub fn info_rate_difference_form(sub: &SubsystemChannels, qp: &CovariancePair) -> Result<f64> {
    qp.check_shapes(sub)?;
    let interference = &sub.h1 * qp.q1.factor();
    let signal = &sub.h_i * qp.q2.factor();
    let total = log2det_noisy_gram(sub.noise, &hstack(&interference, &signal))?;
    Ok(total - log2det_noisy_gram(sub.noise, &interference)?)
}

/// `Tr(H_h Q1 H_h^H + H2 Q2 H2^H + Sigma2)`, watts.
pub fn harvested_power(sub: &SubsystemChannels, qp: &CovariancePair) -> Result<f64> {
    qp.check_shapes(sub)?;
    let energy = numerics::frobenius(&(&sub.h_h * qp.q1.factor())).powi(2);
    let loop_back = numerics::frobenius(&(&sub.h2 * qp.q2.factor())).powi(2);
    Ok(energy + loop_back + sub.noise * sub.n_h() as f64)
}

/// `alpha * rate + (1 - alpha) * energy`, with energy scaled per the budget's mixing mode.
pub fn weighted_objective(rate: f64, energy: f64, budget: &PowerBudget) -> f64 {
    budget.alpha * rate + budget.energy_weight() * energy
}

/// `2^rate - 1`.
pub fn effective_sinr(rate: f64) -> f64 {
    assert!(rate >= 0.0, "rate must be non-negative, got {rate}");
    rate.exp2() - 1.0
}

/// Rate, harvested power and objective of one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub rate: f64,
    pub harvested: f64,
    pub objective: f64,
}

pub fn evaluate(sub: &SubsystemChannels, qp: &CovariancePair, budget: &PowerBudget) -> Result<Evaluation> {
    let rate = info_rate(sub, qp)?;
    let harvested = harvested_power(sub, qp)?;
    Ok(Evaluation { rate, harvested, objective: weighted_objective(rate, harvested, budget) })
}

/// Power P2 carries into the next slot: the harvest, capped at `P_S`.
pub fn carried_power(harvested: f64, p_s: f64) -> f64 {
    harvested.min(p_s)
}

/// Harvest-then-transmit reference scheme.
///
/// During the first `tau` of the slot P1 radiates `P_S` with equal power over
/// all M antennas and P2 harvests on all N. The collected energy is spent over
/// the remaining `1 - tau` of the slot, so the transmit power is
/// `min(tau / (1 - tau) * harvest, P_S)`, spread equally over all N antennas
/// on the reverse link `H^T` without self-interference.
pub fn time_switching_rate(chan: &ChannelRealization, budget: &PowerBudget, tau: f64, sigma2: f64) -> Result<f64> {
    time_switching_point(chan, budget, tau, sigma2).map(|p| p.rate)
}

/// Rate and transmit power of the time-switching scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSwitchingPoint {
    pub rate: f64,
    /// Average power received at P2 during the harvest phase, watts.
    pub harvested: f64,
    /// Transmit power P2 spends in the information phase, watts.
    pub transmit_power: f64,
}

pub fn time_switching_point(chan: &ChannelRealization, budget: &PowerBudget, tau: f64, sigma2: f64) -> Result<TimeSwitchingPoint> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(MetricsError::InvalidArgument(format!("time-switching factor must lie in (0, 1), got {tau}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(NumericsError::InvalidNoise(sigma2).into());
    }
    let (m, n) = (chan.m() as f64, chan.n() as f64);
    let harvested = budget.p_s / m * numerics::frobenius(&chan.h).powi(2) + n * sigma2;
    let transmit_power = (tau / (1.0 - tau) * harvested).min(budget.p_s);
    let scale = (transmit_power / n / sigma2).sqrt();
    let g: CMatrix = chan.h.transpose() * numerics::c(scale, 0.0);
    let rate = (1.0 - tau) * log2det_noisy_gram(1.0, &g)?;
    Ok(TimeSwitchingPoint { rate, harvested, transmit_power })
}
