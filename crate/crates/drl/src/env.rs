//! The slot-by-slot environment seen by the agents.
//!
//! State is `(s1, s2)`: the power P2 carried out of the previous slot and
//! the SINR at P1. The reward of a slot is its rate `log2(1 + s2')`.
//! Precoders are real and entrywise nonnegative. An action vector of
//! length `M^2 + N^2` is sliced per configuration: the first `M_h^2`
//! entries (row-major) form `W1`, the `N_I^2` entries starting at `M^2`
//! form `W2`.

use fdeh_core::numerics::{c, CMatrix, PsdMatrix};
use fdeh_core::{enumerate_configs, harvested_power, info_rate, partition, ChannelRealization, CovariancePair, SubsystemConfig};
use fdeh_core::metrics::{carried_power, effective_sinr};

use crate::DrlError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    /// Power carried by P2 into this slot, watts.
    pub s1: f64,
    /// SINR at P1 in the previous slot, linear.
    pub s2: f64,
}

impl EnvState {
    pub fn is_finite(&self) -> bool {
        self.s1.is_finite() && self.s2.is_finite()
    }

    /// `(log10(s1 / 1 W), log2(1 + s2))`, before standardization.
    pub fn raw_features(&self) -> [f64; 2] {
        [self.s1.log10(), self.s2.ln_1p() / std::f64::consts::LN_2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvAction {
    /// Precoder amplitudes in `[0, 1]`, length `M^2 + N^2`.
    pub a_p: Vec<f64>,
    /// Configuration index into `enumerate_configs(M, N)`.
    pub a_c: usize,
}

/// Outcome of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: EnvState,
    pub reward: f64,
    pub harvested: f64,
}

#[derive(Debug, Clone)]
pub struct Environment {
    chan: ChannelRealization,
    configs: Vec<SubsystemConfig>,
    p_s: f64,
    sigma2: f64,
}

/// Real nonnegative precoder from a `dim x dim` amplitude block, scaled so
/// that unit amplitudes on the diagonal give equal power and the total
/// power `Tr(W W^T)` never exceeds `budget`.
pub fn precoder_from_amplitudes(amplitudes: &[f64], dim: usize, budget: f64) -> CMatrix {
    assert_eq!(amplitudes.len(), dim * dim, "amplitude block size");
    let norm2: f64 = amplitudes.iter().map(|a| a * a).sum();
    if norm2 == 0.0 || budget <= 0.0 {
        return CMatrix::zeros(dim, dim);
    }
    let requested = budget * norm2 / dim as f64;
    let scale = (requested.min(budget) / norm2).sqrt();
    CMatrix::from_fn(dim, dim, |i, j| c(amplitudes[i * dim + j] * scale, 0.0))
}

impl Environment {
    pub fn new(chan: ChannelRealization, p_s: f64, sigma2: f64) -> Result<Self, DrlError> {
        if !(p_s > 0.0 && p_s.is_finite()) {
            return Err(DrlError::InvalidArgument(format!("P_S must be positive, got {p_s}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(DrlError::InvalidArgument(format!("noise power must be positive, got {sigma2}")));
        }
        let configs = enumerate_configs(chan.m(), chan.n())?;
        Ok(Self { chan, configs, p_s, sigma2 })
    }

    pub fn channel(&self) -> &ChannelRealization {
        &self.chan
    }

    pub fn p_s(&self) -> f64 {
        self.p_s
    }

    pub fn configs(&self) -> &[SubsystemConfig] {
        &self.configs
    }

    pub fn action_dim(&self) -> usize {
        let (m, n) = (self.chan.m(), self.chan.n());
        m * m + n * n
    }

    pub fn config_count(&self) -> usize {
        self.configs.len()
    }

    /// Fully charged P2 and the SINR of equal-power precoding on configuration `delta`.
    pub fn initial_state(&self, delta: usize) -> Result<EnvState, DrlError> {
        let cfg = self.config(delta)?;
        let sub = partition(&self.chan, cfg, self.sigma2)?;
        let qp = CovariancePair::new(
            PsdMatrix::scaled_identity(cfg.m_h(), self.p_s / cfg.m_h() as f64),
            PsdMatrix::scaled_identity(cfg.n_i(), self.p_s / cfg.n_i() as f64),
        );
        Ok(EnvState { s1: self.p_s, s2: effective_sinr(info_rate(&sub, &qp)?) })
    }

    fn config(&self, delta: usize) -> Result<&SubsystemConfig, DrlError> {
        self.configs.get(delta).ok_or(DrlError::InvalidAction(format!("configuration index {delta} out of range 0..{}", self.configs.len())))
    }

    /// `(W1, W2)` for `action` in `state`: `W1` draws on `P_S`, `W2` on the carried power `s1`.
    pub fn precoders(&self, state: &EnvState, action: &EnvAction) -> Result<(CMatrix, CMatrix), DrlError> {
        let cfg = self.config(action.a_c)?;
        if action.a_p.len() != self.action_dim() {
            return Err(DrlError::InvalidAction(format!("precoding action has {} entries, expected {}", action.a_p.len(), self.action_dim())));
        }
        if let Some(bad) = action.a_p.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(DrlError::InvalidAction(format!("precoding amplitude {bad} outside [0, 1]")));
        }
        let m = self.chan.m();
        let (m_h, n_i) = (cfg.m_h(), cfg.n_i());
        let w1 = precoder_from_amplitudes(&action.a_p[..m_h * m_h], m_h, self.p_s);
        let w2 = precoder_from_amplitudes(&action.a_p[m * m..m * m + n_i * n_i], n_i, state.s1);
        Ok((w1, w2))
    }

    pub fn step(&self, state: &EnvState, action: &EnvAction) -> Result<StepOutcome, DrlError> {
        if !(state.is_finite() && state.s1 > 0.0 && state.s2 >= 0.0) {
            return Err(DrlError::InvalidArgument(format!("invalid state {state:?}")));
        }
        let (w1, w2) = self.precoders(state, action)?;
        let sub = partition(&self.chan, self.config(action.a_c)?, self.sigma2)?;
        let qp = CovariancePair::new(PsdMatrix::from_factor(w1), PsdMatrix::from_factor(w2));
        let reward = info_rate(&sub, &qp)?;
        let harvested = harvested_power(&sub, &qp)?;
        let next = EnvState { s1: carried_power(harvested, self.p_s), s2: effective_sinr(reward) };
        Ok(StepOutcome { next, reward, harvested })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fdeh_core::{sample_channel, ChannelParams};

    fn env(m: usize, n: usize) -> Environment {
        let params = ChannelParams::new(m, n).unwrap();
        Environment::new(sample_channel(&params, 3), 1.0, params.noise_power()).unwrap()
    }

    #[test]
    fn silent_system_harvests_only_noise() {
        let env = env(3, 2);
        let state = EnvState { s1: 1.0, s2: 5.0 };
        for a_c in 0..env.config_count() {
            let out = env.step(&state, &EnvAction { a_p: vec![0.0; env.action_dim()], a_c }).unwrap();
            let n_h = env.configs()[a_c].n_h() as f64;
            assert_eq!(out.reward, 0.0);
            assert_eq!(out.next.s2, 0.0);
            assert!((out.next.s1 - n_h * env.sigma2).abs() <= 1e-12 * n_h * env.sigma2);
        }
    }

    #[test]
    fn amplitudes_respect_budget() {
        let w = precoder_from_amplitudes(&[1.0, 1.0, 1.0, 1.0], 2, 3.0);
        let power: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        assert!((power - 3.0).abs() < 1e-12);
        // The identity pattern is equal power.
        let w = precoder_from_amplitudes(&[1.0, 0.0, 0.0, 1.0], 2, 3.0);
        assert!((w[(0, 0)].re - 1.5f64.sqrt()).abs() < 1e-12);
        let w = precoder_from_amplitudes(&[0.5, 0.0, 0.0, 0.0], 2, 4.0);
        let power: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        assert!((power - 4.0 * 0.25 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn initial_state_is_fully_charged() {
        let env = env(2, 2);
        let s = env.initial_state(0).unwrap();
        assert_eq!(s.s1, 1.0);
        assert!(s.s2 > 0.0);
    }

    #[test]
    fn rejects_bad_actions() {
        let env = env(2, 2);
        let state = env.initial_state(0).unwrap();
        assert!(env.step(&state, &EnvAction { a_p: vec![0.5; 8], a_c: 4 }).is_err());
        assert!(env.step(&state, &EnvAction { a_p: vec![0.5; 7], a_c: 0 }).is_err());
        assert!(env.step(&state, &EnvAction { a_p: vec![1.5; 8], a_c: 0 }).is_err());
    }
}
