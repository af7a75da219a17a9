//! Scenario configuration.
//!
//! A TOML document whose every key is optional; missing keys take the
//! reference simulation values (noise PSD -169 dBm/Hz, `P_Q = P_S`,
//! `alpha = 0.5`, `tau = 0.5`). Command-line flags are applied on top, and
//! the resolved document is what gets echoed next to the results.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use fdeh_core::{AllocationRule, ChannelParams, EnergyMixing, ScaSettings};
use fdeh_drl::AgentHyperparams;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AntennaSplitSca,
    AntennaSplitEqualPower,
    TimeSwitching,
    DrlPolicy,
    Exhaustive,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::AntennaSplitSca, Method::AntennaSplitEqualPower, Method::TimeSwitching, Method::DrlPolicy, Method::Exhaustive];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::AntennaSplitSca => "antenna_split_sca",
            Method::AntennaSplitEqualPower => "antenna_split_equal_power",
            Method::TimeSwitching => "time_switching",
            Method::DrlPolicy => "drl_policy",
            Method::Exhaustive => "exhaustive",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Method::ALL.iter().map(|m| m.as_str()).collect();
            format!("unknown method '{s}' (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub m: usize,
    pub n: usize,
    pub rician_k_db: f64,
    pub si_attenuation_db: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m: 4,
            n: 4,
            rician_k_db: ChannelParams::DEFAULT_RICIAN_K_DB,
            si_attenuation_db: ChannelParams::DEFAULT_SI_ATTENUATION_DB,
            noise_psd_dbm_hz: ChannelParams::DEFAULT_NOISE_PSD_DBM_HZ,
            bandwidth_hz: ChannelParams::DEFAULT_BANDWIDTH_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Harvesting target for the allocation rule; absent means `P_S`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_q_dbm: Option<f64>,
    pub alpha: f64,
    /// Time-switching factor of the reference scheme.
    pub tau: f64,
    /// `normalized` (harvest divided by `P_S`) or `raw` (watts).
    pub mixing: String,
    /// `min-gain` or `max-gain` seed pair for the greedy allocation.
    pub allocation_rule: String,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            p_q_dbm: None,
            alpha: 0.5,
            tau: 0.5,
            mixing: EnergyMixing::default().as_str().into(),
            allocation_rule: AllocationRule::default().as_str().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub ps_dbm: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::AntennaSplitSca, Method::AntennaSplitEqualPower, Method::TimeSwitching],
            ps_dbm: vec![20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0],
            trials: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub outer_tol: f64,
    pub max_outer: usize,
    pub inner_step: f64,
    pub max_inner: usize,
    pub inner_tol: f64,
    /// Power levels per antenna in the brute-force search.
    pub exhaustive_grid: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = ScaSettings::default();
        Self {
            outer_tol: s.outer_tol,
            max_outer: s.max_outer,
            inner_step: s.inner_step,
            max_inner: s.max_inner,
            inner_tol: s.inner_tol,
            exhaustive_grid: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrlConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub batch: usize,
    pub target_period: usize,
    pub zeta: f64,
    pub nu: f64,
    pub tau_polyak: f64,
    pub buffer_capacity: usize,
    /// Slots per rollout when a trained policy is evaluated.
    pub eval_steps: usize,
    /// Train on the channel of `--seed` only.
    pub frozen_channel: bool,
    /// Power the policy is trained at, dBm; absent means the first sweep point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_ps_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PathBuf>,
}

impl Default for DrlConfig {
    fn default() -> Self {
        let hp = AgentHyperparams::desk();
        Self {
            episodes: hp.episodes,
            steps_per_episode: hp.steps_per_episode,
            batch: hp.batch,
            target_period: hp.target_period,
            zeta: hp.zeta,
            nu: hp.nu,
            tau_polyak: hp.tau_polyak,
            buffer_capacity: hp.buffer_capacity,
            eval_steps: 100,
            frozen_channel: false,
            train_ps_dbm: None,
            policy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub system: SystemConfig,
    pub budget: BudgetConfig,
    pub experiment: ExperimentConfig,
    pub solver: SolverConfig,
    pub drl: DrlConfig,
}

impl Config {
    /// Parses a scenario document. A `[run]` table (present in result
    /// sidecars) is ignored, so a sidecar can be fed back as `--config`.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let fail = |e: toml::de::Error| HarnessError::Config(format!("config file: {e}"));
        let mut table: toml::Table = toml::from_str(text).map_err(fail)?;
        table.remove("run");
        table.try_into().map_err(fail)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn channel_params(&self) -> ChannelParams {
        let s = &self.system;
        ChannelParams {
            m: s.m,
            n: s.n,
            rician_k_db: s.rician_k_db,
            si_attenuation_db: s.si_attenuation_db,
            noise_psd_dbm_hz: s.noise_psd_dbm_hz,
            bandwidth_hz: s.bandwidth_hz,
        }
    }

    pub fn mixing(&self) -> Result<EnergyMixing, HarnessError> {
        self.budget.mixing.parse().map_err(|e: String| HarnessError::Config(e))
    }

    pub fn allocation_rule(&self) -> Result<AllocationRule, HarnessError> {
        self.budget.allocation_rule.parse().map_err(|e: String| HarnessError::Config(e))
    }

    pub fn sca_settings(&self) -> ScaSettings {
        let s = &self.solver;
        ScaSettings { outer_tol: s.outer_tol, max_outer: s.max_outer, inner_step: s.inner_step, max_inner: s.max_inner, inner_tol: s.inner_tol }
    }

    pub fn hyperparams(&self) -> AgentHyperparams {
        let d = &self.drl;
        AgentHyperparams {
            episodes: d.episodes,
            steps_per_episode: d.steps_per_episode,
            batch: d.batch,
            target_period: d.target_period,
            zeta: d.zeta,
            nu: d.nu,
            tau_polyak: d.tau_polyak,
            buffer_capacity: d.buffer_capacity,
            ..AgentHyperparams::desk()
        }
    }

    /// Checks the configuration for running `method`.
    pub fn validate_for(&self, method: Method) -> Result<(), HarnessError> {
        let mut c = self.clone();
        c.experiment.methods = vec![method];
        c.validate()
    }

    /// Checks the configuration for every listed method.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.channel_params().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.mixing()?;
        self.allocation_rule()?;
        self.sca_settings().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.budget.alpha > 0.0 && self.budget.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.budget.alpha));
        }
        if !(self.budget.tau > 0.0 && self.budget.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.budget.tau));
        }
        if let Some(p) = self.budget.p_q_dbm {
            if !p.is_finite() {
                return bad("p_q_dbm must be finite".into());
            }
        }
        let e = &self.experiment;
        if e.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if e.ps_dbm.is_empty() || e.ps_dbm.iter().any(|p| !p.is_finite()) {
            return bad("ps_dbm must be a nonempty list of finite values".into());
        }
        if e.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if e.methods.contains(&Method::Exhaustive) {
            let limit = fdeh_core::allocation::EXHAUSTIVE_MAX_ANTENNAS;
            if self.system.m > limit || self.system.n > limit {
                return bad(format!("exhaustive search supports at most {limit} antennas per side"));
            }
            if self.solver.exhaustive_grid < 2 {
                return bad("exhaustive_grid must be at least 2".into());
            }
        }
        if e.methods.contains(&Method::DrlPolicy) {
            if self.drl.policy.is_none() {
                return bad("method drl_policy needs a policy file".into());
            }
            if self.drl.eval_steps == 0 {
                return bad("eval_steps must be at least 1".into());
            }
        }
        self.hyperparams().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}
