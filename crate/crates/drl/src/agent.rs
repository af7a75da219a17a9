//! Actor-critic and double-Q updates.

use nalgebra::DMatrix;
use rand::Rng;

use crate::env::EnvState;
use crate::mlp::{Activation, Mlp};
use crate::optim::{Adam, Optimizer};
use crate::replay::Transition;
use crate::DrlError;

pub const STATE_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentHyperparams {
    /// Discount factor.
    pub zeta: f64,
    /// Adam learning rate for every network.
    pub nu: f64,
    /// Polyak weight of the online parameters in a target update.
    pub tau_polyak: f64,
    pub batch: usize,
    /// Target networks are averaged every this many environment steps.
    pub target_period: usize,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub buffer_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of all training steps over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub noise_start: f64,
    pub noise_end: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub qnet_hidden: Vec<usize>,
}

impl Default for AgentHyperparams {
    fn default() -> Self {
        Self {
            zeta: 0.99,
            nu: 5e-5,
            tau_polyak: 1e-3,
            batch: 32,
            target_period: 100,
            episodes: 2500,
            steps_per_episode: 500,
            buffer_capacity: 20_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 1.0 / 3.0,
            noise_start: 0.1,
            noise_end: 0.01,
            actor_hidden: vec![256, 128],
            critic_hidden: vec![256, 128],
            qnet_hidden: vec![64, 64],
        }
    }
}

impl AgentHyperparams {
    /// 300 episodes of 100 steps.
    pub fn desk() -> Self {
        Self { episodes: 300, steps_per_episode: 100, ..Self::default() }
    }

    pub fn total_steps(&self) -> usize {
        self.episodes * self.steps_per_episode
    }

    pub fn validate(&self) -> Result<(), DrlError> {
        let bad = |msg: String| Err(DrlError::InvalidHyperparams(msg));
        if !(0.0..1.0).contains(&self.zeta) {
            return bad(format!("zeta must lie in [0, 1), got {}", self.zeta));
        }
        if !(self.tau_polyak > 0.0 && self.tau_polyak <= 1.0) {
            return bad(format!("tau_polyak must lie in (0, 1], got {}", self.tau_polyak));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.nu));
        }
        if self.batch == 0 || self.target_period == 0 || self.episodes == 0 || self.steps_per_episode == 0 {
            return bad("batch, target_period, episodes and steps_per_episode must be positive".into());
        }
        if self.buffer_capacity < self.batch {
            return bad(format!("replay capacity {} is smaller than the batch {}", self.buffer_capacity, self.batch));
        }
        for (name, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end), ("epsilon_decay_fraction", self.epsilon_decay_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return bad("exploration noise must be non-negative".into());
        }
        if [&self.actor_hidden, &self.critic_hidden, &self.qnet_hidden].iter().any(|h| h.contains(&0)) {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }

    /// Epsilon after `step` environment steps.
    pub fn epsilon(&self, step: usize) -> f64 {
        let horizon = self.epsilon_decay_fraction * self.total_steps() as f64;
        if horizon <= 0.0 {
            return self.epsilon_end;
        }
        let progress = step as f64 / horizon;
        if progress >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress
    }

    /// Standard deviation of the precoding-action noise after `step` steps.
    pub fn noise_sigma(&self, step: usize) -> f64 {
        let progress = (step as f64 / self.total_steps() as f64).min(1.0);
        self.noise_start + (self.noise_end - self.noise_start) * progress
    }
}

/// Welford statistics of the raw state features, used to standardize
/// network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunningNorm {
    pub count: u64,
    pub mean: [f64; STATE_DIM],
    pub m2: [f64; STATE_DIM],
}

impl RunningNorm {
    const MIN_STD: f64 = 0.1;

    pub fn observe(&mut self, state: &EnvState) {
        let x = state.raw_features();
        self.count += 1;
        for k in 0..STATE_DIM {
            let d = x[k] - self.mean[k];
            self.mean[k] += d / self.count as f64;
            self.m2[k] += d * (x[k] - self.mean[k]);
        }
    }

    fn std(&self, k: usize) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        (self.m2[k] / self.count as f64).sqrt().max(Self::MIN_STD)
    }

    pub fn features(&self, state: &EnvState) -> [f64; STATE_DIM] {
        let x = state.raw_features();
        std::array::from_fn(|k| (x[k] - self.mean[k]) / self.std(k))
    }
}

/// Network inputs for a minibatch, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub configs: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: DMatrix<f64>,
}

impl Batch {
    pub fn from_transitions(transitions: &[&Transition], norm: &RunningNorm) -> Self {
        let b = transitions.len();
        let dim = transitions.first().map_or(0, |t| t.action.a_p.len());
        let mut states = DMatrix::zeros(STATE_DIM, b);
        let mut next_states = DMatrix::zeros(STATE_DIM, b);
        let mut actions = DMatrix::zeros(dim, b);
        for (i, t) in transitions.iter().enumerate() {
            states.set_column(i, &nalgebra::DVector::from_row_slice(&norm.features(&t.state)));
            next_states.set_column(i, &nalgebra::DVector::from_row_slice(&norm.features(&t.next_state)));
            actions.set_column(i, &nalgebra::DVector::from_row_slice(&t.action.a_p));
        }
        Self {
            states,
            actions,
            configs: transitions.iter().map(|t| t.action.a_c).collect(),
            rewards: transitions.iter().map(|t| t.reward).collect(),
            next_states,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<(), DrlError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(DrlError::NonFinite { what, index, value: values[index] }),
        None => Ok(()),
    }
}

/// `theta' <- (1 - tau) theta' + tau theta`.
pub fn polyak(target: &mut Mlp, online: &Mlp, tau: f64) {
    assert_eq!(target.param_count(), online.param_count(), "target and online shapes differ");
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}

/// Actor, critic, their targets and optimizers.
#[derive(Debug, Clone)]
pub struct ActorCritic<O = Adam> {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: O,
    pub critic_opt: O,
}

impl ActorCritic<Adam> {
    pub fn new(action_dim: usize, hp: &AgentHyperparams, rng: &mut impl Rng) -> Self {
        let mut widths = vec![STATE_DIM];
        widths.extend(&hp.actor_hidden);
        widths.push(action_dim);
        let mut acts = vec![Activation::Relu; hp.actor_hidden.len()];
        acts.push(Activation::Sigmoid);
        let actor = Mlp::new(&widths, &acts, rng);

        let mut widths = vec![STATE_DIM + action_dim];
        widths.extend(&hp.critic_hidden);
        widths.push(1);
        let mut acts = vec![Activation::Relu; hp.critic_hidden.len()];
        acts.push(Activation::Linear);
        let critic = Mlp::new(&widths, &acts, rng);

        Self::from_networks(actor, critic, hp.nu)
    }

    pub fn from_networks(actor: Mlp, critic: Mlp, lr: f64) -> Self {
        Self {
            actor_opt: Adam::new(lr, actor.param_count()),
            critic_opt: Adam::new(lr, critic.param_count()),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        }
    }
}

/// `y_i = r_i + zeta Q'(s_{i+1}, mu'(s_{i+1}))`.
pub fn ddpg_targets(critic_target: &Mlp, actor_target: &Mlp, rewards: &[f64], next_states: &DMatrix<f64>, zeta: f64) -> Vec<f64> {
    if zeta == 0.0 {
        return rewards.to_vec();
    }
    let next_actions = actor_target.forward(next_states);
    let q = critic_target.forward(&stack(next_states, &next_actions));
    rewards.iter().zip(q.iter()).map(|(r, q)| r + zeta * q).collect()
}

/// `J = mean_i Q(s_i, mu(s_i))` and its gradient in the actor parameters.
pub fn actor_objective_gradient(actor: &Mlp, critic: &Mlp, states: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let b = states.ncols() as f64;
    let actor_tape = actor.forward_tape(states);
    let critic_tape = critic.forward_tape(&stack(states, actor_tape.output()));
    let objective = critic_tape.output().sum() / b;
    let (_, d_input) = critic.backward(&critic_tape, &DMatrix::from_element(1, states.ncols(), 1.0 / b));
    let d_action = d_input.rows(STATE_DIM, actor.output_dim()).into_owned();
    let (grad, _) = actor.backward(&actor_tape, &d_action);
    (objective, grad)
}

/// One critic step on the squared TD error, then one actor ascent step on
/// the deterministic policy gradient. Returns `(critic_loss, actor_objective)`.
pub fn ddpg_update<O: Optimizer>(batch: &Batch, nets: &mut ActorCritic<O>, zeta: f64) -> Result<(f64, f64), DrlError> {
    if batch.is_empty() {
        return Err(DrlError::InvalidArgument("empty minibatch".into()));
    }
    let b = batch.len() as f64;
    let y = ddpg_targets(&nets.critic_target, &nets.actor_target, &batch.rewards, &batch.next_states, zeta);
    check_finite("ddpg td target", &y)?;

    let tape = nets.critic.forward_tape(&stack(&batch.states, &batch.actions));
    let q = tape.output();
    let loss = q.iter().zip(&y).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / b;
    // Gradient of half the mean squared error.
    let d_out = DMatrix::from_fn(1, batch.len(), |_, i| (q[(0, i)] - y[i]) / b);
    let (grad, _) = nets.critic.backward(&tape, &d_out);
    check_finite("critic gradient", &grad)?;
    nets.critic_opt.step(nets.critic.params_mut(), &grad);

    let (objective, grad) = actor_objective_gradient(&nets.actor, &nets.critic, &batch.states);
    check_finite("actor gradient", &grad)?;
    let ascent: Vec<f64> = grad.iter().map(|g| -g).collect();
    nets.actor_opt.step(nets.actor.params_mut(), &ascent);
    Ok((loss, objective))
}

pub fn soft_update_actor_critic<O>(nets: &mut ActorCritic<O>, tau: f64) {
    polyak(&mut nets.actor_target, &nets.actor, tau);
    polyak(&mut nets.critic_target, &nets.critic, tau);
}

/// Online configuration network, its target and optimizer.
#[derive(Debug, Clone)]
pub struct DoubleQ<O = Adam> {
    pub online: Mlp,
    pub target: Mlp,
    pub opt: O,
}

impl DoubleQ<Adam> {
    pub fn new(configs: usize, hp: &AgentHyperparams, rng: &mut impl Rng) -> Self {
        let mut widths = vec![STATE_DIM];
        widths.extend(&hp.qnet_hidden);
        widths.push(configs);
        let mut acts = vec![Activation::Relu; hp.qnet_hidden.len()];
        acts.push(Activation::Linear);
        let online = Mlp::new(&widths, &acts, rng);
        Self { opt: Adam::new(hp.nu, online.param_count()), target: online.clone(), online }
    }
}

impl<O> DoubleQ<O> {
    pub fn with_optimizer(online: Mlp, target: Mlp, opt: O) -> Self {
        Self { online, target, opt }
    }
}

pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// `r_i + zeta Q_c(s_{i+1}, a*)` with `a* = argmax_a Q'_c(s_{i+1}, a)`:
/// the target network selects, the online network evaluates.
pub fn ddqn_targets(online: &Mlp, target: &Mlp, rewards: &[f64], next_states: &DMatrix<f64>, zeta: f64) -> Vec<f64> {
    if zeta == 0.0 {
        return rewards.to_vec();
    }
    let selector = target.forward(next_states);
    let evaluator = online.forward(next_states);
    rewards
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let a_star = argmax(selector.column(i).iter().copied());
            r + zeta * evaluator[(a_star, i)]
        })
        .collect()
}

/// One step on the squared TD error of the taken configurations. Returns the mean squared error.
pub fn ddqn_update<O: Optimizer>(batch: &Batch, nets: &mut DoubleQ<O>, zeta: f64) -> Result<f64, DrlError> {
    if batch.is_empty() {
        return Err(DrlError::InvalidArgument("empty minibatch".into()));
    }
    let b = batch.len() as f64;
    let y = ddqn_targets(&nets.online, &nets.target, &batch.rewards, &batch.next_states, zeta);
    check_finite("ddqn td target", &y)?;
    let tape = nets.online.forward_tape(&batch.states);
    let q = tape.output();
    let mut d_out = DMatrix::zeros(q.nrows(), q.ncols());
    let mut loss = 0.0;
    for (i, &a) in batch.configs.iter().enumerate() {
        if a >= q.nrows() {
            return Err(DrlError::InvalidAction(format!("configuration index {a} out of range 0..{}", q.nrows())));
        }
        let err = q[(a, i)] - y[i];
        loss += err * err;
        d_out[(a, i)] = err / b;
    }
    let (grad, _) = nets.online.backward(&tape, &d_out);
    check_finite("ddqn gradient", &grad)?;
    nets.opt.step(nets.online.params_mut(), &grad);
    Ok(loss / b)
}

pub fn soft_update_double_q<O>(nets: &mut DoubleQ<O>, tau: f64) {
    polyak(&mut nets.target, &nets.online, tau);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let hp = AgentHyperparams::default();
        assert_eq!((hp.zeta, hp.nu, hp.tau_polyak, hp.buffer_capacity), (0.99, 5e-5, 1e-3, 20_000));
        assert_eq!((hp.episodes, hp.steps_per_episode), (2500, 500));
        assert_eq!(hp.actor_hidden, vec![256, 128]);
        assert_eq!(hp.qnet_hidden, vec![64, 64]);
        hp.validate().unwrap();
        assert!(AgentHyperparams { zeta: 1.0, ..hp.clone() }.validate().is_err());
        assert!(AgentHyperparams { tau_polyak: 0.0, ..hp }.validate().is_err());
    }

    #[test]
    fn schedules() {
        let hp = AgentHyperparams { episodes: 3, steps_per_episode: 100, ..AgentHyperparams::default() };
        assert_eq!(hp.epsilon(0), 1.0);
        assert!((hp.epsilon(50) - 0.525).abs() < 1e-12);
        assert_eq!(hp.epsilon(100), 0.05);
        assert_eq!(hp.epsilon(250), 0.05);
        assert_eq!(hp.noise_sigma(0), 0.1);
        assert!((hp.noise_sigma(300) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn normalizer_standardizes() {
        let mut norm = RunningNorm::default();
        for k in 0..100 {
            norm.observe(&EnvState { s1: 10f64.powi(k % 5), s2: k as f64 });
        }
        let mean: f64 = (0..100).map(|k| norm.features(&EnvState { s1: 10f64.powi(k % 5), s2: k as f64 })[0]).sum::<f64>() / 100.0;
        assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn polyak_full_weight_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let online = Mlp::new(&[2, 3, 1], &[Activation::Relu, Activation::Linear], &mut rng);
        let mut target = Mlp::new(&[2, 3, 1], &[Activation::Relu, Activation::Linear], &mut rng);
        polyak(&mut target, &online, 1.0);
        assert_eq!(target.params(), online.params());
    }

    #[test]
    fn argmax_keeps_first_of_ties() {
        assert_eq!(argmax([1.0, 3.0, 3.0, 2.0]), 1);
    }
}
