//! Environment, replay and training-loop properties.

use fdeh_core::{sample_channel, ChannelParams, PowerBudget};
use fdeh_drl::{evaluate_policy, train, AgentHyperparams, EnvAction, EnvState, Environment, PolicyArtifact, ReplayBuffer, TrainOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_action(rng: &mut ChaCha8Rng, env: &Environment) -> EnvAction {
    EnvAction { a_p: (0..env.action_dim()).map(|_| rng.random_range(0.0..=1.0)).collect(), a_c: rng.random_range(0..env.config_count()) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn steps_are_deterministic_and_obey_the_reward_identity(seed in any::<u64>(), m in 2usize..5, n in 2usize..5, p_dbm in 0.0f64..50.0) {
        let params = ChannelParams::new(m, n).unwrap();
        let p_s = 10f64.powf((p_dbm - 30.0) / 10.0);
        let env = Environment::new(sample_channel(&params, seed), p_s, params.noise_power()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = env.initial_state(rng.random_range(0..env.config_count())).unwrap();
        prop_assert_eq!(state.s1, p_s);
        for _ in 0..10 {
            let action = random_action(&mut rng, &env);
            let out = env.step(&state, &action).unwrap();
            prop_assert_eq!(out, env.step(&state, &action).unwrap());
            let identity = out.next.s2.ln_1p() / std::f64::consts::LN_2;
            prop_assert!((out.reward - identity).abs() <= 1e-12 * out.reward.max(1.0));
            let floor = env.configs()[action.a_c].n_h() as f64 * params.noise_power();
            prop_assert!(out.next.s1 >= floor * (1.0 - 1e-12) && out.next.s1 <= p_s);
            let (w1, w2) = env.precoders(&state, &action).unwrap();
            prop_assert!(w1.iter().all(|z| z.im == 0.0 && z.re >= 0.0));
            prop_assert!(w1.norm_squared() <= p_s * (1.0 + 1e-12));
            prop_assert!(w2.norm_squared() <= state.s1 * (1.0 + 1e-12));
            state = out.next;
        }
    }

    #[test]
    fn replay_is_bounded_and_fifo(capacity in 1usize..50, extra in 0usize..60) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..capacity + extra {
            buf.push(i);
            prop_assert!(buf.len() <= capacity);
        }
        let held: std::collections::HashSet<usize> = buf.iter().copied().collect();
        prop_assert_eq!(held.len(), capacity);
        prop_assert!((0..extra).all(|i| !held.contains(&i)));
        prop_assert!((extra..capacity + extra).all(|i| held.contains(&i)));
    }
}

fn tiny() -> AgentHyperparams {
    AgentHyperparams {
        episodes: 3,
        steps_per_episode: 6,
        batch: 4,
        target_period: 5,
        actor_hidden: vec![8],
        critic_hidden: vec![8],
        qnet_hidden: vec![8],
        nu: 1e-3,
        ..AgentHyperparams::default()
    }
}

#[test]
fn minimal_run_emits_artifact_and_curve() {
    let params = ChannelParams::new(2, 2).unwrap();
    let budget = PowerBudget::fully_charged(1.0, 0.5).unwrap();
    let hp = AgentHyperparams { episodes: 1, steps_per_episode: 2, batch: 1, ..AgentHyperparams::default() };
    let out = train(&params, &budget, &hp, 1, &TrainOptions::default()).unwrap();
    assert_eq!(out.curve.len(), 1);
    assert_eq!(out.artifact.episodes_trained, 1);
    assert_eq!(out.artifact.actor.widths(), &[2, 256, 128, 8]);
    assert_eq!(out.artifact.qnet.widths(), &[2, 64, 64, 4]);
    let csv = fdeh_drl::curve_csv(&out.curve);
    assert!(csv.starts_with("episode,mean_reward,mean_harvested_w,epsilon\n1,"));
}

#[test]
fn training_is_reproducible_and_artifacts_round_trip() {
    let params = ChannelParams::new(3, 2).unwrap();
    let budget = PowerBudget::fully_charged(0.5, 0.5).unwrap();
    let a = train(&params, &budget, &tiny(), 9, &TrainOptions::default()).unwrap();
    let b = train(&params, &budget, &tiny(), 9, &TrainOptions::default()).unwrap();
    let text = a.artifact.to_text();
    assert_eq!(text, b.artifact.to_text());
    assert_eq!(a.curve, b.curve);
    let parsed = PolicyArtifact::from_text(&text).unwrap();
    assert_eq!(parsed, a.artifact);
    let c = train(&params, &budget, &tiny(), 10, &TrainOptions::default()).unwrap();
    assert_ne!(c.artifact.to_text(), text);

    let chan = sample_channel(&params, 4);
    let r1 = evaluate_policy(&parsed, &chan, 0.5, 5, 0).unwrap();
    let r2 = evaluate_policy(&a.artifact, &chan, 0.5, 5, 0).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.rewards.len(), 5);
}

#[test]
fn malformed_artifacts_are_rejected() {
    let params = ChannelParams::new(2, 2).unwrap();
    let budget = PowerBudget::fully_charged(1.0, 0.5).unwrap();
    let out = train(&params, &budget, &tiny(), 1, &TrainOptions::default()).unwrap();
    let text = out.artifact.to_text();
    assert!(PolicyArtifact::from_text("").is_err());
    assert!(PolicyArtifact::from_text(&text.replace("fdeh-policy v1", "fdeh-policy v9")).is_err());
    assert!(PolicyArtifact::from_text(text.trim_end_matches("end\n")).is_err());
    let lines: Vec<&str> = text.lines().collect();
    let cut = lines.iter().position(|l| l.starts_with("net critic")).unwrap();
    let truncated = [&lines[..cut - 1], &lines[cut..]].concat().join("\n");
    assert!(PolicyArtifact::from_text(&truncated).is_err());
    assert!(PolicyArtifact::from_text(&text.replace("\nm 2\n", "\nm 3\n")).is_err());
}

#[test]
fn frozen_channel_must_match_dimensions() {
    let params = ChannelParams::new(2, 2).unwrap();
    let budget = PowerBudget::fully_charged(1.0, 0.5).unwrap();
    let other = sample_channel(&ChannelParams::new(3, 2).unwrap(), 0);
    assert!(train(&params, &budget, &tiny(), 1, &TrainOptions { frozen_channel: Some(other) }).is_err());
}

#[test]
fn initial_state_is_fully_charged() {
    let params = ChannelParams::new(2, 3).unwrap();
    let env = Environment::new(sample_channel(&params, 2), 2.0, params.noise_power()).unwrap();
    for delta in 0..env.config_count() {
        let s: EnvState = env.initial_state(delta).unwrap();
        assert_eq!(s.s1, 2.0);
    }
}
