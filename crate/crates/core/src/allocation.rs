//! Antenna partitions: enumeration, the greedy gain-based allocation and an
//! exhaustive diagonal-power oracle for small arrays.

use std::fmt;

use thiserror::Error;

use crate::channel::{partition, ChannelError, ChannelRealization};
use crate::exec::Execution;
use crate::metrics::{self, CovariancePair, MetricsError, PowerBudget};
use crate::numerics::PsdMatrix;

/// Largest array size (per side) accepted by [`exhaustive_search`].
pub const EXHAUSTIVE_MAX_ANTENNAS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocationError {
    #[error("each device needs at least two antennas (got M={m}, N={n})")]
    TooFewAntennas { m: usize, n: usize },
    #[error("exhaustive search is limited to M, N <= {limit} (got M={m}, N={n})")]
    TooLarge { m: usize, n: usize, limit: usize },
    #[error("power grid needs at least 2 levels, got {0}")]
    InvalidGrid(usize),
    #[error("cannot parse antenna configuration '{text}': {reason}")]
    Parse { text: String, reason: String },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One split of both antenna arrays into energy (EH) and information (IT)
/// sets. Indices are zero-based and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsystemConfig {
    /// Position in [`enumerate_configs`] order.
    pub delta: usize,
    pub p1_eh: Vec<usize>,
    pub p1_it: Vec<usize>,
    pub p2_eh: Vec<usize>,
    pub p2_it: Vec<usize>,
}

fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0, |acc, &i| acc | (1u64 << i))
}

fn split_mask(mask: u64, count: usize) -> (Vec<usize>, Vec<usize>) {
    (0..count).partition(|&i| mask & (1 << i) != 0)
}

/// `(2^M - 2) (2^N - 2)`.
pub fn config_count(m: usize, n: usize) -> usize {
    ((1usize << m) - 2) * ((1usize << n) - 2)
}

impl SubsystemConfig {
    /// Builds a config from explicit sets without validating them.
    pub fn from_sets(delta: usize, p1_eh: Vec<usize>, p1_it: Vec<usize>, p2_eh: Vec<usize>, p2_it: Vec<usize>) -> Self {
        Self { delta, p1_eh, p1_it, p2_eh, p2_it }
    }

    /// Config whose EH sets are the bits of `mask1` (P1) and `mask2` (P2).
    pub fn from_masks(m: usize, n: usize, mask1: u64, mask2: u64) -> Self {
        let (p1_eh, p1_it) = split_mask(mask1, m);
        let (p2_eh, p2_it) = split_mask(mask2, n);
        let delta = (mask1 as usize - 1) * ((1usize << n) - 2) + (mask2 as usize - 1);
        Self { delta, p1_eh, p1_it, p2_eh, p2_it }
    }

    /// Rebuilds from the EH sets, filling in the complements and the delta.
    pub fn from_eh_sets(m: usize, n: usize, p1_eh: &[usize], p2_eh: &[usize]) -> Self {
        Self::from_masks(m, n, mask_of(p1_eh), mask_of(p2_eh))
    }

    pub fn m(&self) -> usize {
        self.p1_eh.len() + self.p1_it.len()
    }

    pub fn n(&self) -> usize {
        self.p2_eh.len() + self.p2_it.len()
    }

    pub fn m_h(&self) -> usize {
        self.p1_eh.len()
    }

    pub fn m_i(&self) -> usize {
        self.p1_it.len()
    }

    pub fn n_h(&self) -> usize {
        self.p2_eh.len()
    }

    pub fn n_i(&self) -> usize {
        self.p2_it.len()
    }

    /// Checks the four sets are nonempty and split `0..m` / `0..n` exactly.
    pub fn validate(&self, m: usize, n: usize) -> Result<(), String> {
        let check = |eh: &[usize], it: &[usize], count: usize, side: &str| -> Result<(), String> {
            if eh.is_empty() || it.is_empty() {
                return Err(format!("{side}: both EH and IT sets must be nonempty"));
            }
            let mut seen = vec![false; count];
            for &i in eh.iter().chain(it) {
                if i >= count {
                    return Err(format!("{side}: antenna index {} out of range 1..={count}", i + 1));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(format!("{side}: antenna {} assigned twice", i + 1));
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(format!("{side}: not every antenna is assigned"));
            }
            Ok(())
        };
        check(&self.p1_eh, &self.p1_it, m, "P1")?;
        check(&self.p2_eh, &self.p2_it, n, "P2")
    }

    /// Parses `p1_eh=1,3;p2_eh=2` (one-based EH sets; IT sets are the
    /// complements) for an `m x n` array.
    pub fn parse(text: &str, m: usize, n: usize) -> Result<Self, AllocationError> {
        let fail = |reason: String| AllocationError::Parse { text: text.to_string(), reason };
        let mut p1 = None;
        let mut p2 = None;
        for part in text.trim().split(';') {
            let (key, value) = part.split_once('=').ok_or_else(|| fail(format!("'{part}' is not key=value")))?;
            let indices = value
                .split(',')
                .map(|v| match v.trim().parse::<usize>() {
                    Ok(i) if i >= 1 => Ok(i - 1),
                    _ => Err(fail(format!("'{v}' is not a one-based antenna index"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            match key.trim() {
                "p1_eh" => p1 = Some(indices),
                "p2_eh" => p2 = Some(indices),
                other => return Err(fail(format!("unknown key '{other}'"))),
            }
        }
        let p1 = p1.ok_or_else(|| fail("missing p1_eh".into()))?;
        let p2 = p2.ok_or_else(|| fail("missing p2_eh".into()))?;
        if p1.iter().any(|&i| i >= m) || p2.iter().any(|&i| i >= n) {
            return Err(fail(format!("index out of range for a {m}x{n} array")));
        }
        let config = Self::from_eh_sets(m, n, &p1, &p2);
        config.validate(m, n).map_err(fail)?;
        Ok(config)
    }
}

impl fmt::Display for SubsystemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |set: &[usize]| set.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",");
        write!(f, "p1_eh={};p2_eh={}", join(&self.p1_eh), join(&self.p2_eh))
    }
}

/// All `(2^M - 2)(2^N - 2)` partitions, ordered by (P1 EH bitmask, P2 EH bitmask).
pub fn enumerate_configs(m: usize, n: usize) -> Result<Vec<SubsystemConfig>, AllocationError> {
    if m < 2 || n < 2 {
        return Err(AllocationError::TooFewAntennas { m, n });
    }
    let mut configs = Vec::with_capacity(config_count(m, n));
    for mask1 in 1..(1u64 << m) - 1 {
        for mask2 in 1..(1u64 << n) - 1 {
            configs.push(SubsystemConfig::from_masks(m, n, mask1, mask2));
        }
    }
    Ok(configs)
}

/// Which direct-link pair seeds the EH sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AllocationRule {
    /// The weakest pair, as the greedy algorithm is usually stated.
    #[default]
    MinGain,
    /// The strongest pair; a sensitivity variant.
    MaxGain,
}

impl AllocationRule {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MinGain => "min-gain",
            Self::MaxGain => "max-gain",
        }
    }
}

impl std::str::FromStr for AllocationRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min-gain" => Ok(Self::MinGain),
            "max-gain" => Ok(Self::MaxGain),
            other => Err(format!("unknown allocation rule '{other}' (expected min-gain|max-gain)")),
        }
    }
}

/// One decision of the greedy allocation.
#[derive(Debug, Clone, PartialEq)]
pub enum AllocationStep {
    /// The seed pair moved to EH, with its gain `|h_{n,m}|^2`.
    Seed { m: usize, n: usize, gain: f64 },
    /// P1 antenna `m` moved to EH; `z1`/`z2` are the two competing minimum norms.
    MoveP1 { m: usize, z1: f64, z2: f64 },
    /// P2 antenna `n` moved to EH.
    MoveP2 { n: usize, z1: f64, z2: f64 },
}

/// Greedy allocation: seed the EH sets with one direct-link pair, then keep
/// moving the IT antenna with the weakest direct-link norm to EH until the
/// estimated harvest `sum_EH P_S |h|^2 / M_h` reaches `P_Q` or one IT set
/// would be left with a single antenna.
pub fn allocate_antennas(chan: &ChannelRealization, p_s: f64, p_q: f64, rule: AllocationRule) -> SubsystemConfig {
    allocate_antennas_traced(chan, p_s, p_q, rule).0
}

pub fn allocate_antennas_traced(
    chan: &ChannelRealization,
    p_s: f64,
    p_q: f64,
    rule: AllocationRule,
) -> (SubsystemConfig, Vec<AllocationStep>) {
    let (m_count, n_count) = (chan.m(), chan.n());
    assert!(m_count >= 2 && n_count >= 2, "allocation needs at least two antennas per side");
    let h = &chan.h;
    let gain = |n: usize, m: usize| h[(n, m)].norm_sqr();

    let mut seed = (0, 0);
    for n in 0..n_count {
        for m in 0..m_count {
            let better = match rule {
                AllocationRule::MinGain => gain(n, m) < gain(seed.1, seed.0),
                AllocationRule::MaxGain => gain(n, m) > gain(seed.1, seed.0),
            };
            if better {
                seed = (m, n);
            }
        }
    }
    let mut p1_eh = vec![seed.0];
    let mut p2_eh = vec![seed.1];
    let mut p1_it: Vec<usize> = (0..m_count).filter(|&m| m != seed.0).collect();
    let mut p2_it: Vec<usize> = (0..n_count).filter(|&n| n != seed.1).collect();
    let mut steps = vec![AllocationStep::Seed { m: seed.0, n: seed.1, gain: gain(seed.1, seed.0) }];

    let column_norm = |m: usize| (0..n_count).map(|n| gain(n, m)).sum::<f64>().sqrt();
    let row_norm = |n: usize| (0..m_count).map(|m| gain(n, m)).sum::<f64>().sqrt();
    let argmin = |set: &[usize], norm: &dyn Fn(usize) -> f64| {
        set.iter().map(|&i| (i, norm(i))).fold((usize::MAX, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    };

    loop {
        let estimate: f64 = p2_eh.iter().flat_map(|&n| p1_eh.iter().map(move |&m| (n, m))).map(|(n, m)| p_s * gain(n, m)).sum::<f64>()
            / p1_eh.len() as f64;
        if !(estimate < p_q && p1_it.len() > 1 && p2_it.len() > 1) {
            break;
        }
        let (m_star, z1) = argmin(&p1_it, &column_norm);
        let (n_star, z2) = argmin(&p2_it, &row_norm);
        if z1 <= z2 {
            p1_it.retain(|&m| m != m_star);
            p1_eh.push(m_star);
            steps.push(AllocationStep::MoveP1 { m: m_star, z1, z2 });
        } else {
            p2_it.retain(|&n| n != n_star);
            p2_eh.push(n_star);
            steps.push(AllocationStep::MoveP2 { n: n_star, z1, z2 });
        }
    }
    (SubsystemConfig::from_eh_sets(m_count, n_count, &p1_eh, &p2_eh), steps)
}

/// Best point found by [`exhaustive_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    pub config: SubsystemConfig,
    pub covariances: CovariancePair,
    pub objective: f64,
    /// Number of (config, power vector) points evaluated.
    pub evaluated: usize,
}

/// Every vector of `dim` levels in `0..grid` (as fractions `k / (grid - 1)`)
/// with sum at most one, in lexicographic order.
fn grid_points(dim: usize, grid: usize) -> Vec<Vec<f64>> {
    let top = grid - 1;
    let mut out = Vec::new();
    let mut current = vec![0usize; dim];
    fn recurse(pos: usize, remaining: usize, top: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if pos == current.len() {
            out.push(current.iter().map(|&k| k as f64 / top as f64).collect());
            return;
        }
        for k in 0..=remaining {
            current[pos] = k;
            recurse(pos + 1, remaining - k, top, current, out);
        }
    }
    recurse(0, top, top, &mut current, &mut out);
    out
}

/// Brute-force oracle over every partition and every diagonal `Q1`, `Q2`
/// on a `power_grid`-level grid per antenna (trace caps `P_S` and
/// `min(P_Q, P_h)`). Ties keep the lowest delta, then the lexicographically
/// first power vector.
pub fn exhaustive_search(
    chan: &ChannelRealization,
    budget: &PowerBudget,
    power_grid: usize,
    sigma2: f64,
    execution: Execution,
) -> Result<ExhaustiveOutcome, AllocationError> {
    let (m, n) = (chan.m(), chan.n());
    if m > EXHAUSTIVE_MAX_ANTENNAS || n > EXHAUSTIVE_MAX_ANTENNAS {
        return Err(AllocationError::TooLarge { m, n, limit: EXHAUSTIVE_MAX_ANTENNAS });
    }
    if power_grid < 2 {
        return Err(AllocationError::InvalidGrid(power_grid));
    }
    budget.validate()?;
    let configs = enumerate_configs(m, n)?;
    let q2_cap = budget.q2_cap();
    let per_config = execution.map_indices(configs.len(), |k| -> Result<ExhaustiveOutcome, AllocationError> {
        let config = &configs[k];
        let sub = partition(chan, config, sigma2)?;
        let q1_points = grid_points(config.m_h(), power_grid);
        let q2_points = grid_points(config.n_i(), power_grid);
        let mut best: Option<(f64, CovariancePair)> = None;
        for f1 in &q1_points {
            let q1 = PsdMatrix::diagonal(&f1.iter().map(|f| f * budget.p_s).collect::<Vec<_>>());
            for f2 in &q2_points {
                let q2 = PsdMatrix::diagonal(&f2.iter().map(|f| f * q2_cap).collect::<Vec<_>>());
                let qp = CovariancePair::new(q1.clone(), q2);
                let value = metrics::evaluate(&sub, &qp, budget)?.objective;
                if best.as_ref().is_none_or(|(b, _)| value > *b) {
                    best = Some((value, qp));
                }
            }
        }
        let (objective, covariances) = best.expect("grid is never empty");
        Ok(ExhaustiveOutcome { config: config.clone(), covariances, objective, evaluated: q1_points.len() * q2_points.len() })
    });
    let mut total = 0;
    let mut winner: Option<ExhaustiveOutcome> = None;
    for outcome in per_config {
        let outcome = outcome?;
        total += outcome.evaluated;
        if winner.as_ref().is_none_or(|w| outcome.objective > w.objective) {
            winner = Some(outcome);
        }
    }
    let mut winner = winner.expect("at least one configuration");
    winner.evaluated = total;
    Ok(winner)
}
