//! Text serialization of a trained policy.
//!
//! ```text
//! fdeh-policy v1
//! <key> <value>            one line per scalar (see PolicyArtifact fields)
//! norm <count> <mean0> <mean1> <m2_0> <m2_1>
//! net <name> <widths,comma,separated> <activations,comma,separated>
//! <parameters, whitespace separated, any line breaks>
//! ...                      six nets: actor critic qnet actor_target critic_target qnet_target
//! end
//! ```
//!
//! Parameters follow the network's flat layout: per layer the `out x in`
//! weight matrix in column-major order, then the bias. Floats use Rust's
//! shortest round-trip exponent notation, so a write/read cycle is exact.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::agent::{argmax, AgentHyperparams, RunningNorm};
use crate::env::{EnvAction, EnvState};
use crate::mlp::{Activation, Mlp};
use crate::DrlError;

const MAGIC: &str = "fdeh-policy v1";
const NETS: [&str; 6] = ["actor", "critic", "qnet", "actor_target", "critic_target", "qnet_target"];
const PER_LINE: usize = 8;

/// Network header fields and parameters collected so far: (line, name, widths, activations, params, expected count).
type PendingNet = (usize, String, Vec<usize>, Vec<Activation>, Vec<f64>, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArtifact {
    pub m: usize,
    pub n: usize,
    /// Source power the policy was trained at, watts.
    pub p_s: f64,
    /// Per-antenna noise power, watts.
    pub noise: f64,
    pub seed: u64,
    pub episodes_trained: usize,
    pub hp: AgentHyperparams,
    pub norm: RunningNorm,
    pub actor: Mlp,
    pub critic: Mlp,
    pub qnet: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub qnet_target: Mlp,
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl PolicyArtifact {
    /// Deterministic action: the actor's amplitudes and the configuration with the largest Q-value.
    pub fn greedy_action(&self, state: &EnvState) -> EnvAction {
        let features = self.norm.features(state);
        let a_p = self.actor.forward_one(&features).into_iter().map(|a| a.clamp(0.0, 1.0)).collect();
        EnvAction { a_p, a_c: argmax(self.qnet.forward_one(&features)) }
    }

    fn nets(&self) -> [&Mlp; 6] {
        [&self.actor, &self.critic, &self.qnet, &self.actor_target, &self.critic_target, &self.qnet_target]
    }

    pub fn to_text(&self) -> String {
        let hp = &self.hp;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} {v}").unwrap();
        kv("fdeh-policy", "v1".into());
        kv("m", self.m.to_string());
        kv("n", self.n.to_string());
        kv("p_s", format!("{:e}", self.p_s));
        kv("noise", format!("{:e}", self.noise));
        kv("seed", self.seed.to_string());
        kv("episodes_trained", self.episodes_trained.to_string());
        kv("zeta", format!("{:e}", hp.zeta));
        kv("nu", format!("{:e}", hp.nu));
        kv("tau_polyak", format!("{:e}", hp.tau_polyak));
        kv("batch", hp.batch.to_string());
        kv("target_period", hp.target_period.to_string());
        kv("episodes", hp.episodes.to_string());
        kv("steps_per_episode", hp.steps_per_episode.to_string());
        kv("buffer_capacity", hp.buffer_capacity.to_string());
        kv("epsilon_start", format!("{:e}", hp.epsilon_start));
        kv("epsilon_end", format!("{:e}", hp.epsilon_end));
        kv("epsilon_decay_fraction", format!("{:e}", hp.epsilon_decay_fraction));
        kv("noise_start", format!("{:e}", hp.noise_start));
        kv("noise_end", format!("{:e}", hp.noise_end));
        let nm = &self.norm;
        kv("norm", format!("{} {:e} {:e} {:e} {:e}", nm.count, nm.mean[0], nm.mean[1], nm.m2[0], nm.m2[1]));
        for (name, net) in NETS.iter().zip(self.nets()) {
            writeln!(out, "net {name} {} {}", join(net.widths()), join(net.activations())).unwrap();
            for chunk in net.params().chunks(PER_LINE) {
                let line: Vec<String> = chunk.iter().map(|p| format!("{p:e}")).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DrlError> {
        let err = |line: usize, message: String| DrlError::Artifact { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, MAGIC)) => {}
            Some((no, other)) => return Err(err(no, format!("expected '{MAGIC}', found '{other}'"))),
            None => return Err(err(0, "empty artifact".into())),
        }
        let mut scalars: HashMap<String, (usize, String)> = HashMap::new();
        let mut nets: HashMap<String, Mlp> = HashMap::new();
        let mut pending: Option<PendingNet> = None;
        let mut ended = false;
        let finish = |pending: &mut Option<PendingNet>,
                      nets: &mut HashMap<String, Mlp>|
         -> Result<(), DrlError> {
            if let Some((no, name, widths, acts, params, _)) = pending.take() {
                let net = Mlp::from_params(&widths, &acts, params).map_err(|m| err(no, format!("net {name}: {m}")))?;
                nets.insert(name, net);
            }
            Ok(())
        };
        for (no, line) in lines.by_ref() {
            if let Some(p) = pending.as_mut() {
                if p.4.len() < p.5 {
                    for tok in line.split_whitespace() {
                        p.4.push(tok.parse().map_err(|_| err(no, format!("bad parameter '{tok}'")))?);
                    }
                    if p.4.len() > p.5 {
                        return Err(err(no, format!("net {} has more than {} parameters", p.1, p.5)));
                    }
                    continue;
                }
                finish(&mut pending, &mut nets)?;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "end" => {
                    ended = true;
                    break;
                }
                "net" => {
                    let parts: Vec<&str> = rest.split_whitespace().collect();
                    let [name, widths, acts] = parts[..] else {
                        return Err(err(no, "expected 'net <name> <widths> <activations>'".into()));
                    };
                    if !NETS.contains(&name) || nets.contains_key(name) {
                        return Err(err(no, format!("unexpected net '{name}'")));
                    }
                    let widths: Vec<usize> =
                        widths.split(',').map(str::parse).collect::<Result<_, _>>().map_err(|_| err(no, format!("bad widths '{widths}'")))?;
                    let acts: Vec<Activation> = acts.split(',').map(str::parse).collect::<Result<_, _>>().map_err(|m| err(no, m))?;
                    let count = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
                    pending = Some((no, name.to_string(), widths, acts, Vec::with_capacity(count), count));
                }
                _ => {
                    if scalars.insert(key.to_string(), (no, rest.trim().to_string())).is_some() {
                        return Err(err(no, format!("duplicate key '{key}'")));
                    }
                }
            }
        }
        if let Some(p) = &pending {
            if p.4.len() < p.5 {
                return Err(err(p.0, format!("net {} is truncated", p.1)));
            }
        }
        finish(&mut pending, &mut nets)?;
        if !ended {
            return Err(err(text.lines().count(), "missing 'end'".into()));
        }

        fn get<T: std::str::FromStr>(scalars: &HashMap<String, (usize, String)>, key: &str) -> Result<T, DrlError> {
            let (no, raw) = scalars.get(key).ok_or(DrlError::Artifact { line: 0, message: format!("missing key '{key}'") })?;
            raw.parse().map_err(|_| DrlError::Artifact { line: *no, message: format!("bad value '{raw}' for '{key}'") })
        }
        let (norm_line, norm_raw) = scalars.get("norm").ok_or(err(0, "missing key 'norm'".into()))?;
        let fields: Vec<&str> = norm_raw.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(*norm_line, "norm needs count and four statistics".into()));
        }
        let stat = |i: usize| fields[i].parse::<f64>().map_err(|_| err(*norm_line, format!("bad statistic '{}'", fields[i])));
        let norm = RunningNorm {
            count: fields[0].parse().map_err(|_| err(*norm_line, format!("bad count '{}'", fields[0])))?,
            mean: [stat(1)?, stat(2)?],
            m2: [stat(3)?, stat(4)?],
        };
        let mut take = |name: &str| nets.remove(name).ok_or(err(0, format!("missing net '{name}'")));
        let (actor, critic, qnet) = (take("actor")?, take("critic")?, take("qnet")?);
        let (actor_target, critic_target, qnet_target) = (take("actor_target")?, take("critic_target")?, take("qnet_target")?);
        let hidden = |net: &Mlp| net.widths()[1..net.widths().len() - 1].to_vec();
        let hp = AgentHyperparams {
            zeta: get(&scalars, "zeta")?,
            nu: get(&scalars, "nu")?,
            tau_polyak: get(&scalars, "tau_polyak")?,
            batch: get(&scalars, "batch")?,
            target_period: get(&scalars, "target_period")?,
            episodes: get(&scalars, "episodes")?,
            steps_per_episode: get(&scalars, "steps_per_episode")?,
            buffer_capacity: get(&scalars, "buffer_capacity")?,
            epsilon_start: get(&scalars, "epsilon_start")?,
            epsilon_end: get(&scalars, "epsilon_end")?,
            epsilon_decay_fraction: get(&scalars, "epsilon_decay_fraction")?,
            noise_start: get(&scalars, "noise_start")?,
            noise_end: get(&scalars, "noise_end")?,
            actor_hidden: hidden(&actor),
            critic_hidden: hidden(&critic),
            qnet_hidden: hidden(&qnet),
        };
        let artifact = Self {
            m: get(&scalars, "m")?,
            n: get(&scalars, "n")?,
            p_s: get(&scalars, "p_s")?,
            noise: get(&scalars, "noise")?,
            seed: get(&scalars, "seed")?,
            episodes_trained: get(&scalars, "episodes_trained")?,
            hp,
            norm,
            actor,
            critic,
            qnet,
            actor_target,
            critic_target,
            qnet_target,
        };
        artifact.check_shapes()?;
        Ok(artifact)
    }

    fn check_shapes(&self) -> Result<(), DrlError> {
        let action_dim = self.m * self.m + self.n * self.n;
        let configs = ((1usize << self.m) - 2) * ((1usize << self.n) - 2);
        let bad = |message: String| Err(DrlError::Artifact { line: 0, message });
        if self.actor.input_dim() != 2 || self.actor.output_dim() != action_dim {
            return bad(format!("actor maps {} -> {}, expected 2 -> {action_dim}", self.actor.input_dim(), self.actor.output_dim()));
        }
        if self.critic.input_dim() != 2 + action_dim || self.critic.output_dim() != 1 {
            return bad("critic shape does not match the action dimension".into());
        }
        if self.qnet.input_dim() != 2 || self.qnet.output_dim() != configs {
            return bad(format!("configuration network has {} outputs, expected {configs}", self.qnet.output_dim()));
        }
        for (online, target) in [(&self.actor, &self.actor_target), (&self.critic, &self.critic_target), (&self.qnet, &self.qnet_target)] {
            if online.widths() != target.widths() {
                return bad("target network shape differs from its online network".into());
            }
        }
        Ok(())
    }
}
