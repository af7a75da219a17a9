//! Monte-Carlo sweeps and paired method comparisons.
//!
//! Trial `k` of every sweep point and every method sees the same channel,
//! drawn from a seed derived from `(master seed, k)`. Results are collected
//! in trial order and reduced with pairwise summation, so a run gives
//! identical numbers whether trials execute sequentially or in parallel.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fdeh_core::metrics::time_switching_point;
use fdeh_core::units::dbm_to_watts;
use fdeh_core::{
    allocate_antennas, equal_power, evaluate, exhaustive_search, partition, sample_channel, sca_precoding,
    AllocationRule, ChannelParams, ChannelRealization, Execution, PowerBudget, ScaSettings,
};
use fdeh_drl::{evaluate_policy, PolicyArtifact};

use crate::config::{Config, Method};
use crate::HarnessError;

/// Channel seed of trial `trial` under master seed `master`: the first word
/// of ChaCha8 stream `trial` keyed by `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng.next_u64()
}

pub fn trial_channel(params: &ChannelParams, master: u64, trial: u64) -> ChannelRealization {
    sample_channel(params, trial_seed(master, trial))
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    (mean, (pairwise_sum(&dev) / (values.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub rate: f64,
    pub harvested: f64,
}

/// Everything a single trial needs besides its channel.
#[derive(Debug, Clone)]
pub struct Pipeline<'a> {
    pub method: Method,
    pub sigma2: f64,
    pub alpha: f64,
    pub mixing: fdeh_core::EnergyMixing,
    pub p_q_dbm: Option<f64>,
    pub tau: f64,
    pub rule: AllocationRule,
    pub settings: ScaSettings,
    pub grid: usize,
    pub policy: Option<&'a PolicyArtifact>,
    pub eval_steps: usize,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &Config, method: Method, policy: Option<&'a PolicyArtifact>) -> Result<Self, HarnessError> {
        if method == Method::DrlPolicy {
            let policy = policy.ok_or_else(|| HarnessError::Config("method drl_policy needs a policy".into()))?;
            if (policy.m, policy.n) != (config.system.m, config.system.n) {
                return Err(HarnessError::Config(format!(
                    "policy was trained for {}x{}, scenario is {}x{}",
                    policy.m, policy.n, config.system.m, config.system.n
                )));
            }
        }
        Ok(Self {
            method,
            sigma2: config.channel_params().noise_power(),
            alpha: config.budget.alpha,
            mixing: config.mixing()?,
            p_q_dbm: config.budget.p_q_dbm,
            tau: config.budget.tau,
            rule: config.allocation_rule()?,
            settings: config.sca_settings(),
            grid: config.solver.exhaustive_grid,
            policy,
            eval_steps: config.drl.eval_steps,
        })
    }

    /// P2 starts the slot fully charged; `P_Q` defaults to `P_S`.
    pub fn budget(&self, ps_dbm: f64) -> Result<PowerBudget, String> {
        let p_s = dbm_to_watts(ps_dbm);
        let p_q = self.p_q_dbm.map_or(p_s, dbm_to_watts);
        PowerBudget::new(p_s, p_s, p_q, self.alpha).map(|b| b.with_mixing(self.mixing)).map_err(|e| e.to_string())
    }

    pub fn run(&self, chan: &ChannelRealization, ps_dbm: f64, seed: u64) -> Result<TrialResult, String> {
        let budget = self.budget(ps_dbm)?;
        let split = || {
            let cfg = allocate_antennas(chan, budget.p_s, budget.p_q, self.rule);
            partition(chan, &cfg, self.sigma2).map_err(|e| e.to_string())
        };
        let result = match self.method {
            Method::AntennaSplitSca => {
                let sub = split()?;
                let out = sca_precoding(&sub, &budget, &self.settings).map_err(|e| e.to_string())?;
                TrialResult { rate: out.evaluation.rate, harvested: out.evaluation.harvested }
            }
            Method::AntennaSplitEqualPower => {
                let sub = split()?;
                let e = evaluate(&sub, &equal_power(&sub, &budget), &budget).map_err(|e| e.to_string())?;
                TrialResult { rate: e.rate, harvested: e.harvested }
            }
            Method::TimeSwitching => {
                let p = time_switching_point(chan, &budget, self.tau, self.sigma2).map_err(|e| e.to_string())?;
                TrialResult { rate: p.rate, harvested: p.harvested }
            }
            Method::Exhaustive => {
                let best = exhaustive_search(chan, &budget, self.grid, self.sigma2, Execution::Sequential).map_err(|e| e.to_string())?;
                let sub = partition(chan, &best.config, self.sigma2).map_err(|e| e.to_string())?;
                let e = evaluate(&sub, &best.covariances, &budget).map_err(|e| e.to_string())?;
                TrialResult { rate: e.rate, harvested: e.harvested }
            }
            Method::DrlPolicy => {
                let policy = self.policy.ok_or("no policy loaded")?;
                let r = evaluate_policy(policy, chan, budget.p_s, self.eval_steps, seed).map_err(|e| e.to_string())?;
                TrialResult { rate: r.mean_reward(), harvested: r.mean_harvested() }
            }
        };
        if !(result.rate.is_finite() && result.harvested.is_finite()) {
            return Err(format!("non-finite result {result:?}"));
        }
        Ok(result)
    }
}

pub const RESULTS_HEADER: &str = "method,ps_dbm,mean_rate,std_rate,mean_harvested_w,trials,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub ps_dbm: f64,
    pub mean_rate: f64,
    pub std_rate: f64,
    pub mean_harvested_w: f64,
    /// Trials that completed and enter the statistics.
    pub trials: usize,
    pub wall_ms: u64,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method, self.ps_dbm, self.mean_rate, self.std_rate, self.mean_harvested_w, self.trials, self.wall_ms
        )
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// One sweep point of one method.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub row: ResultRow,
    /// Per-trial results in trial order; `None` for failed trials.
    pub trials: Vec<Option<TrialResult>>,
    /// `(trial, message)` for every failure.
    pub failures: Vec<(usize, String)>,
}

impl PointOutcome {
    /// More than 1% of the trials failed.
    pub fn degraded(&self) -> bool {
        self.failures.len() * 100 > self.trials.len()
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub execution: Execution,
    /// Record wall-clock time per row; off by default so output is reproducible.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { execution: Execution::Parallel, timing: false }
    }
}

pub fn run_point(config: &Config, pipeline: &Pipeline, ps_dbm: f64, options: &RunOptions) -> PointOutcome {
    let params = config.channel_params();
    let master = config.experiment.seed;
    let start = Instant::now();
    let raw = options.execution.map_indices(config.experiment.trials, |k| {
        let seed = trial_seed(master, k as u64);
        pipeline.run(&sample_channel(&params, seed), ps_dbm, seed)
    });
    let wall_ms = if options.timing { start.elapsed().as_millis() as u64 } else { 0 };
    let mut trials = Vec::with_capacity(raw.len());
    let mut failures = Vec::new();
    for (k, r) in raw.into_iter().enumerate() {
        match r {
            Ok(t) => trials.push(Some(t)),
            Err(msg) => {
                failures.push((k, msg));
                trials.push(None);
            }
        }
    }
    let ok: Vec<TrialResult> = trials.iter().flatten().copied().collect();
    let rates: Vec<f64> = ok.iter().map(|t| t.rate).collect();
    let harvest: Vec<f64> = ok.iter().map(|t| t.harvested).collect();
    let (mean_rate, std_rate) = mean_std(&rates);
    let (mean_harvested_w, _) = mean_std(&harvest);
    PointOutcome {
        row: ResultRow { method: pipeline.method, ps_dbm, mean_rate, std_rate, mean_harvested_w, trials: ok.len(), wall_ms },
        trials,
        failures,
    }
}

/// One method swept over the configured power points.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: Config,
    pub method: Method,
}

#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub method: Method,
    pub points: Vec<PointOutcome>,
}

impl MonteCarloReport {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.points.iter().map(|p| p.row.clone()).collect()
    }

    pub fn degraded(&self) -> bool {
        self.points.iter().any(PointOutcome::degraded)
    }

    pub fn failure_count(&self) -> usize {
        self.points.iter().map(|p| p.failures.len()).sum()
    }
}

pub fn run_monte_carlo(scenario: &Scenario, policy: Option<&PolicyArtifact>, options: &RunOptions) -> Result<MonteCarloReport, HarnessError> {
    scenario.config.validate_for(scenario.method)?;
    let pipeline = Pipeline::new(&scenario.config, scenario.method, policy)?;
    let points = scenario.config.experiment.ps_dbm.iter().map(|&p| run_point(&scenario.config, &pipeline, p, options)).collect();
    Ok(MonteCarloReport { method: scenario.method, points })
}

pub const GAINS_HEADER: &str = "method_a,method_b,ps_dbm,mean_gain,stderr_gain,pairs";

/// Paired difference `A - B` at one power point.
#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub method_a: Method,
    pub method_b: Method,
    pub ps_dbm: f64,
    pub mean_gain: f64,
    pub stderr_gain: f64,
    /// Trials where both methods succeeded.
    pub pairs: usize,
}

impl GainRow {
    /// Gain in units of its standard error.
    pub fn significance(&self) -> f64 {
        if self.stderr_gain == 0.0 {
            return if self.mean_gain == 0.0 { 0.0 } else { self.mean_gain.signum() * f64::INFINITY };
        }
        self.mean_gain / self.stderr_gain
    }
}

pub fn gains_csv(rows: &[GainRow]) -> String {
    let mut out = String::from(GAINS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.method_a, r.method_b, r.ps_dbm, r.mean_gain, r.stderr_gain, r.pairs));
    }
    out
}

/// Paired gains of `a` over `b`, point by point.
pub fn paired_gains(a: &MonteCarloReport, b: &MonteCarloReport) -> Result<Vec<GainRow>, HarnessError> {
    if a.points.len() != b.points.len() {
        return Err(HarnessError::Config("reports cover different sweeps".into()));
    }
    a.points
        .iter()
        .zip(&b.points)
        .map(|(pa, pb)| {
            if pa.row.ps_dbm != pb.row.ps_dbm || pa.trials.len() != pb.trials.len() {
                return Err(HarnessError::Config(format!("sweep points {} and {} are not paired", pa.row.ps_dbm, pb.row.ps_dbm)));
            }
            let diffs: Vec<f64> = pa.trials.iter().zip(&pb.trials).filter_map(|(x, y)| Some(x.as_ref()?.rate - y.as_ref()?.rate)).collect();
            let (mean_gain, std) = mean_std(&diffs);
            Ok(GainRow {
                method_a: a.method,
                method_b: b.method,
                ps_dbm: pa.row.ps_dbm,
                mean_gain,
                stderr_gain: std / (diffs.len() as f64).sqrt(),
                pairs: diffs.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub reports: Vec<MonteCarloReport>,
    /// Gains of the first method over each of the others.
    pub gains: Vec<GainRow>,
}

/// Runs every scenario and pairs the first against each of the rest. All
/// scenarios must share system, sweep, trial count and master seed, which
/// makes their trials see identical channels.
pub fn compare_methods(scenarios: &[Scenario], policy: Option<&PolicyArtifact>, options: &RunOptions) -> Result<Comparison, HarnessError> {
    let Some(first) = scenarios.first() else {
        return Err(HarnessError::Config("nothing to compare".into()));
    };
    if scenarios.len() < 2 {
        return Err(HarnessError::Config("comparison needs at least two methods".into()));
    }
    for s in &scenarios[1..] {
        let (x, y) = (&first.config, &s.config);
        if x.system != y.system || x.experiment.ps_dbm != y.experiment.ps_dbm || x.experiment.trials != y.experiment.trials || x.experiment.seed != y.experiment.seed {
            return Err(HarnessError::Config(format!("{} and {} do not share sweep and channel seeds", first.method, s.method)));
        }
    }
    let reports = scenarios.iter().map(|s| run_monte_carlo(s, policy, options)).collect::<Result<Vec<_>, _>>()?;
    let mut gains = Vec::new();
    for other in &reports[1..] {
        gains.extend(paired_gains(&reports[0], other)?);
    }
    Ok(Comparison { reports, gains })
}
