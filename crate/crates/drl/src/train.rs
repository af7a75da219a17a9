//! The joint training loop and greedy policy rollouts.
//!
//! One ChaCha8 stream drives everything, in this order: network
//! initialization (actor, critic, configuration network); then per episode
//! the channel seed (unless the channel is frozen) and the initial
//! configuration; then per step the precoding noise (one normal per action
//! entry), the epsilon draw, a uniform configuration when exploring, and
//! the minibatch indices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fdeh_core::allocation::config_count;
use fdeh_core::{sample_channel, ChannelParams, ChannelRealization, PowerBudget};

use crate::agent::{
    argmax, ddpg_update, ddqn_update, soft_update_actor_critic, soft_update_double_q, ActorCritic, AgentHyperparams, Batch, DoubleQ,
    RunningNorm,
};
use crate::artifact::PolicyArtifact;
use crate::env::{EnvAction, EnvState, Environment};
use crate::replay::{ReplayBuffer, Transition};
use crate::DrlError;

/// Keeps the configuration network's output layer below 2^16 units.
pub const MAX_ANTENNAS: usize = 8;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Train every episode on this channel instead of drawing a fresh one.
    pub frozen_channel: Option<ChannelRealization>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_harvested_w: f64,
    pub epsilon: f64,
}

pub const CURVE_HEADER: &str = "episode,mean_reward,mean_harvested_w,epsilon";

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.episode, r.mean_reward, r.mean_harvested_w, r.epsilon));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub artifact: PolicyArtifact,
    pub curve: Vec<CurveRow>,
}

/// A failed run, with the networks as they were when it stopped.
#[derive(Debug, thiserror::Error)]
#[error("training stopped in episode {episode}: {error}")]
pub struct TrainError {
    pub error: DrlError,
    pub episode: usize,
    pub checkpoint: Option<Box<PolicyArtifact>>,
    pub curve: Vec<CurveRow>,
}

impl From<DrlError> for TrainError {
    fn from(error: DrlError) -> Self {
        Self { error, episode: 0, checkpoint: None, curve: Vec::new() }
    }
}

struct Run<'a> {
    params: &'a ChannelParams,
    budget: &'a PowerBudget,
    hp: &'a AgentHyperparams,
    seed: u64,
    rng: ChaCha8Rng,
    ac: ActorCritic,
    dq: DoubleQ,
    buffer: ReplayBuffer,
    norm: RunningNorm,
    step: usize,
    episodes_done: usize,
}

impl Run<'_> {
    fn artifact(&self) -> PolicyArtifact {
        PolicyArtifact {
            m: self.params.m,
            n: self.params.n,
            p_s: self.budget.p_s,
            noise: self.params.noise_power(),
            seed: self.seed,
            episodes_trained: self.episodes_done,
            hp: self.hp.clone(),
            norm: self.norm,
            actor: self.ac.actor.clone(),
            critic: self.ac.critic.clone(),
            qnet: self.dq.online.clone(),
            actor_target: self.ac.actor_target.clone(),
            critic_target: self.ac.critic_target.clone(),
            qnet_target: self.dq.target.clone(),
        }
    }

    fn episode(&mut self, env: &Environment) -> Result<CurveRow, DrlError> {
        let configs = env.config_count();
        let mut state = env.initial_state(self.rng.random_range(0..configs))?;
        self.norm.observe(&state);
        let (mut reward_sum, mut harvest_sum) = (0.0, 0.0);
        for _ in 0..self.hp.steps_per_episode {
            let features = self.norm.features(&state);
            let mut a_p = self.ac.actor.forward_one(&features);
            let sigma = self.hp.noise_sigma(self.step);
            for a in &mut a_p {
                let z: f64 = self.rng.sample(StandardNormal);
                *a = (*a + sigma * z).clamp(0.0, 1.0);
            }
            let a_c = if self.rng.random::<f64>() < self.hp.epsilon(self.step) {
                self.rng.random_range(0..configs)
            } else {
                argmax(self.dq.online.forward_one(&features))
            };
            let action = EnvAction { a_p, a_c };
            let out = env.step(&state, &action)?;
            let transition = Transition { state, action, reward: out.reward, next_state: out.next };
            if !transition.is_finite() {
                return Err(DrlError::NonFinite { what: "transition", index: self.step, value: out.reward });
            }
            self.buffer.push(transition);
            self.norm.observe(&out.next);
            reward_sum += out.reward;
            harvest_sum += out.harvested;
            state = out.next;

            if let Some(sample) = self.buffer.sample(self.hp.batch, &mut self.rng) {
                let batch = Batch::from_transitions(&sample, &self.norm);
                ddpg_update(&batch, &mut self.ac, self.hp.zeta)?;
                ddqn_update(&batch, &mut self.dq, self.hp.zeta)?;
            }
            self.step += 1;
            if self.step.is_multiple_of(self.hp.target_period) {
                soft_update_actor_critic(&mut self.ac, self.hp.tau_polyak);
                soft_update_double_q(&mut self.dq, self.hp.tau_polyak);
            }
        }
        let steps = self.hp.steps_per_episode as f64;
        Ok(CurveRow {
            episode: self.episodes_done + 1,
            mean_reward: reward_sum / steps,
            mean_harvested_w: harvest_sum / steps,
            epsilon: self.hp.epsilon(self.step),
        })
    }
}

/// Trains the precoding actor-critic and the configuration double-Q agent
/// jointly. Deterministic given `seed`.
pub fn train(
    params: &ChannelParams,
    budget: &PowerBudget,
    hp: &AgentHyperparams,
    seed: u64,
    options: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    hp.validate()?;
    params.validate().map_err(DrlError::from)?;
    budget.validate().map_err(DrlError::from)?;
    if let Some(chan) = &options.frozen_channel {
        if (chan.m(), chan.n()) != (params.m, params.n) {
            return Err(DrlError::InvalidArgument(format!(
                "frozen channel is {}x{}, parameters say {}x{}",
                chan.m(),
                chan.n(),
                params.m,
                params.n
            ))
            .into());
        }
    }
    if params.m > MAX_ANTENNAS || params.n > MAX_ANTENNAS {
        return Err(DrlError::InvalidArgument(format!("at most {MAX_ANTENNAS} antennas per side, got {}x{}", params.m, params.n)).into());
    }
    let configs = config_count(params.m, params.n);
    let action_dim = params.m * params.m + params.n * params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ac = ActorCritic::new(action_dim, hp, &mut rng);
    let dq = DoubleQ::new(configs, hp, &mut rng);
    let mut run = Run {
        params,
        budget,
        hp,
        seed,
        rng,
        ac,
        dq,
        buffer: ReplayBuffer::new(hp.buffer_capacity),
        norm: RunningNorm::default(),
        step: 0,
        episodes_done: 0,
    };
    let sigma2 = params.noise_power();
    let mut curve = Vec::with_capacity(hp.episodes);
    for _ in 0..hp.episodes {
        let chan = match &options.frozen_channel {
            Some(chan) => chan.clone(),
            None => sample_channel(params, run.rng.random()),
        };
        let result = Environment::new(chan, budget.p_s, sigma2).and_then(|env| run.episode(&env));
        match result {
            Ok(row) => {
                curve.push(row);
                run.episodes_done += 1;
            }
            Err(error) => {
                return Err(TrainError { error, episode: run.episodes_done + 1, checkpoint: Some(Box::new(run.artifact())), curve });
            }
        }
    }
    Ok(TrainOutcome { artifact: run.artifact(), curve })
}

/// Per-step record of a greedy rollout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rollout {
    pub rewards: Vec<f64>,
    pub harvested: Vec<f64>,
    pub configs: Vec<usize>,
    pub states: Vec<EnvState>,
}

impl Rollout {
    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len().max(1) as f64
    }

    pub fn mean_harvested(&self) -> f64 {
        self.harvested.iter().sum::<f64>() / self.harvested.len().max(1) as f64
    }
}

/// Runs the greedy policy (no exploration) for `steps` slots on `chan` at
/// source power `p_s`. The initial configuration is drawn from `seed`.
pub fn evaluate_policy(artifact: &PolicyArtifact, chan: &ChannelRealization, p_s: f64, steps: usize, seed: u64) -> Result<Rollout, DrlError> {
    if (chan.m(), chan.n()) != (artifact.m, artifact.n) {
        return Err(DrlError::InvalidArgument(format!(
            "policy was trained for {}x{}, channel is {}x{}",
            artifact.m,
            artifact.n,
            chan.m(),
            chan.n()
        )));
    }
    let env = Environment::new(chan.clone(), p_s, artifact.noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.initial_state(rng.random_range(0..env.config_count()))?;
    let mut rollout = Rollout::default();
    for _ in 0..steps {
        let action = artifact.greedy_action(&state);
        let out = env.step(&state, &action)?;
        rollout.rewards.push(out.reward);
        rollout.harvested.push(out.harvested);
        rollout.configs.push(action.a_c);
        rollout.states.push(out.next);
        state = out.next;
    }
    Ok(rollout)
}
