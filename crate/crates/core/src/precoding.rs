//! Transmit covariance design for a fixed antenna partition.
//!
//! The rate at P1 is a difference of two concave log-determinants. Replacing
//! the subtracted one (the interference term, concave in `Q1`) by its tangent
//! at an anchor `Q1°` gives a concave minorant of the rate; maximising the
//! weighted objective built from it is a convex problem, solved here by
//! projected gradient ascent. Re-anchoring at the solution and repeating is
//! the successive convex approximation (SCA) loop.

use std::f64::consts::LN_2;
use std::fmt::Write as _;

use thiserror::Error;

use crate::channel::SubsystemChannels;
use crate::metrics::{self, CovariancePair, Evaluation, MetricsError, PowerBudget};
use crate::numerics::{
    c, cholesky_lower, frobenius, hermitian_part, hstack, inner_re, log2det_noisy_gram, psd_project, CMatrix, NoisyGram,
    NumericsError, PsdMatrix,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrecodingError {
    #[error("non-finite objective at outer iteration {iteration}")]
    NonFinite { iteration: usize, trace: ScaTrace },
    #[error("invalid SCA settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, PrecodingError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaSettings {
    /// Outer loop stops once the true objective improves by less than this.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Length of the first trial step, in units of the trace caps.
    pub inner_step: f64,
    pub max_inner: usize,
    /// Inner loop stops once an accepted step moves both covariances by less
    /// than this (Frobenius norm relative to their trace caps).
    pub inner_tol: f64,
}

impl Default for ScaSettings {
    fn default() -> Self {
        Self { outer_tol: 1e-4, max_outer: 50, inner_step: 0.5, max_inner: 200, inner_tol: 1e-7 }
    }
}

impl ScaSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.outer_tol, self.inner_step, self.inner_tol].iter().all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.max_outer < 1 || self.max_inner < 1 {
            return Err(PrecodingError::InvalidSettings(format!("{self:?}")));
        }
        Ok(())
    }
}

/// One outer SCA iteration. Iteration 0 is the starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaStep {
    pub iteration: usize,
    /// Weighted objective with the exact rate.
    pub objective: f64,
    /// Weighted objective with the linearised rate at this iteration's anchor.
    pub surrogate: f64,
    pub trace_q1: f64,
    pub trace_q2: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScaTrace {
    pub steps: Vec<ScaStep>,
}

impl ScaTrace {
    pub const CSV_HEADER: &'static str = "iteration,objective,surrogate,trace_q1,trace_q2,inner_iterations";

    pub fn objectives(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.objective).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.iteration, s.objective, s.surrogate, s.trace_q1, s.trace_q2, s.inner_iterations
            );
        }
        out
    }
}

/// Result of [`sca_precoding`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    pub covariances: CovariancePair,
    /// Lower-triangular precoders with `W_i W_i^H = Q_i`.
    pub w1: CMatrix,
    pub w2: CMatrix,
    pub evaluation: Evaluation,
    pub trace: ScaTrace,
}

/// Tangent data of the interference log-determinant at an anchor `Q1°`.
///
/// The tangent term `Tr[K°^{-1} H1 Q1 H1^H]` is evaluated as the squared norm
/// of the whitened `H1 F1` (with `Q1 = F1 F1^H`). Going through the matrix
/// `Q1` instead multiplies its round-off by `1 / sigma^2` in directions the
/// anchor leaves empty.
#[derive(Debug, Clone)]
struct Anchor {
    gram: NoisyGram,
    log2_det: f64,
    /// `Tr[K°^{-1} H1 Q1° H1^H]`.
    anchor_power: f64,
    /// `H1^H (Sigma1 + H1 Q1° H1^H)^{-1} H1`.
    quadratic: CMatrix,
}

impl Anchor {
    fn new(sub: &SubsystemChannels, q1: &PsdMatrix) -> Result<Self> {
        let interference = &sub.h1 * q1.factor();
        let gram = NoisyGram::new(sub.noise, &interference)?;
        let anchor_power = frobenius(&gram.whiten(&interference)).powi(2);
        let quadratic = gram.inverse_quadratic(&sub.h1);
        Ok(Self { log2_det: gram.log2_det(), gram, anchor_power, quadratic })
    }

    /// `(1/ln2) Tr[(Sigma1 + H1 Q1° H1^H)^{-1} H1 (Q1° - Q1) H1^H]`.
    fn tangent_correction(&self, sub: &SubsystemChannels, q1: &PsdMatrix) -> f64 {
        let power = frobenius(&self.gram.whiten(&(&sub.h1 * q1.factor()))).powi(2);
        (self.anchor_power - power) / LN_2
    }
}

fn total_factor(sub: &SubsystemChannels, qp: &CovariancePair) -> CMatrix {
    hstack(&(&sub.h1 * qp.q1.factor()), &(&sub.h_i * qp.q2.factor()))
}

/// Rate with the interference log-determinant replaced by its tangent at
/// `q1_anchor`:
/// `log2|Sigma1 + H1 Q1 H1^H + H_I Q2 H_I^H| + (1/ln2) Tr[K°^{-1} H1 (Q1° - Q1) H1^H] - log2|K°|`
/// with `K° = Sigma1 + H1 Q1° H1^H`. Never exceeds the exact rate and
/// coincides with it at `Q1 = Q1°`.
pub fn linearized_rate(sub: &SubsystemChannels, qp: &CovariancePair, q1_anchor: &PsdMatrix) -> Result<f64> {
    let anchor = Anchor::new(sub, q1_anchor)?;
    let total = log2det_noisy_gram(sub.noise, &total_factor(sub, qp))?;
    Ok(total + anchor.tangent_correction(sub, &qp.q1) - anchor.log2_det)
}

/// The convex inner problem at a fixed anchor:
/// maximise `alpha * linearized_rate + energy_weight * harvested_power` over
/// `{Q1 >= 0, Tr Q1 <= P_S} x {Q2 >= 0, Tr Q2 <= min(P_Q, P_h)}`.
#[derive(Debug, Clone)]
pub struct InnerProblem<'a> {
    sub: &'a SubsystemChannels,
    budget: PowerBudget,
    anchor: Anchor,
    energy_q1: CMatrix,
    energy_q2: CMatrix,
}

impl<'a> InnerProblem<'a> {
    pub fn new(sub: &'a SubsystemChannels, q1_anchor: &PsdMatrix, budget: &PowerBudget) -> Result<Self> {
        budget.validate()?;
        Ok(Self {
            sub,
            budget: *budget,
            anchor: Anchor::new(sub, q1_anchor)?,
            energy_q1: hermitian_part(&(sub.h_h.adjoint() * &sub.h_h)),
            energy_q2: hermitian_part(&(sub.h2.adjoint() * &sub.h2)),
        })
    }

    fn caps(&self) -> (f64, f64) {
        (self.budget.p_s, self.budget.q2_cap())
    }

    fn energy(&self, qp: &CovariancePair) -> f64 {
        let e1 = frobenius(&(&self.sub.h_h * qp.q1.factor())).powi(2);
        let e2 = frobenius(&(&self.sub.h2 * qp.q2.factor())).powi(2);
        e1 + e2 + self.sub.noise * self.sub.n_h() as f64
    }

    fn combine(&self, log2_total: f64, qp: &CovariancePair) -> f64 {
        let rate = log2_total + self.anchor.tangent_correction(self.sub, &qp.q1) - self.anchor.log2_det;
        self.budget.alpha * rate + self.budget.energy_weight() * self.energy(qp)
    }

    /// Surrogate objective at `qp`.
    pub fn objective(&self, qp: &CovariancePair) -> Result<f64> {
        let total = log2det_noisy_gram(self.sub.noise, &total_factor(self.sub, qp))?;
        Ok(self.combine(total, qp))
    }

    /// Surrogate objective and its Hermitian gradients `(dF/dQ1, dF/dQ2)`,
    /// with the convention `dF = Re Tr(G1 dQ1) + Re Tr(G2 dQ2)`.
    pub fn objective_and_gradient(&self, qp: &CovariancePair) -> Result<(f64, CMatrix, CMatrix)> {
        let gram = NoisyGram::new(self.sub.noise, &total_factor(self.sub, qp))?;
        let value = self.combine(gram.log2_det(), qp);
        let rate_scale = c(self.budget.alpha / LN_2, 0.0);
        let energy_scale = c(self.budget.energy_weight(), 0.0);
        let g1 = (gram.inverse_quadratic(&self.sub.h1) - &self.anchor.quadratic) * rate_scale + &self.energy_q1 * energy_scale;
        let g2 = gram.inverse_quadratic(&self.sub.h_i) * rate_scale + &self.energy_q2 * energy_scale;
        Ok((value, g1, g2))
    }

    fn project(&self, q: &CMatrix, step: &CMatrix, scale: f64, cap: f64) -> Result<PsdMatrix> {
        if cap <= 0.0 {
            return Ok(PsdMatrix::zeros(q.nrows()));
        }
        Ok(psd_project(&hermitian_part(&(q + step * c(scale, 0.0))), cap)?)
    }

    /// Projected gradient ascent from `start` with Armijo backtracking along
    /// the projection arc. Returns the final point, its surrogate value and
    /// the number of accepted steps.
    pub fn solve(&self, start: CovariancePair, settings: &ScaSettings) -> Result<(CovariancePair, f64, usize)> {
        const ARMIJO: f64 = 1e-4;
        const MAX_HALVINGS: usize = 60;
        // Longest trial step, in cap units, before projection. Longer steps
        // only land on the same face of the constraint set and lose the
        // small eigenvalues to cancellation.
        const MAX_REACH: f64 = 4.0;
        let (cap1, cap2) = self.caps();
        let mut point = start;
        let (mut value, mut g1, mut g2) = self.objective_and_gradient(&point)?;
        let mut t: Option<f64> = None;
        let mut accepted = 0;
        for _ in 0..settings.max_inner {
            if !value.is_finite() {
                break;
            }
            // Steps are taken in cap-normalised coordinates, which scales the
            // gradient of block i by cap_i^2 in covariance space.
            let scaled_norm = (cap1 * frobenius(&g1)).max(cap2 * frobenius(&g2));
            if scaled_norm == 0.0 {
                break;
            }
            let mut step = t.unwrap_or(settings.inner_step / scaled_norm).min(MAX_REACH / scaled_norm);
            let mut next = None;
            for _ in 0..MAX_HALVINGS {
                let q1 = self.project(point.q1.matrix(), &g1, step * cap1 * cap1, cap1)?;
                let q2 = self.project(point.q2.matrix(), &g2, step * cap2 * cap2, cap2)?;
                let candidate = CovariancePair::new(q1, q2);
                let gain = inner_re(&g1, &(candidate.q1.matrix() - point.q1.matrix()))
                    + inner_re(&g2, &(candidate.q2.matrix() - point.q2.matrix()));
                let candidate_value = self.objective(&candidate)?;
                if candidate_value.is_finite() && candidate_value >= value + ARMIJO * gain && candidate_value >= value {
                    next = Some((candidate, candidate_value));
                    break;
                }
                step *= 0.5;
            }
            let Some((candidate, candidate_value)) = next else { break };
            let moved = frobenius(&(candidate.q1.matrix() - point.q1.matrix())) / cap1.max(f64::MIN_POSITIVE);
            let moved = if cap2 > 0.0 { moved.max(frobenius(&(candidate.q2.matrix() - point.q2.matrix())) / cap2) } else { moved };
            point = candidate;
            accepted += 1;
            t = Some(step * 2.0);
            if moved < settings.inner_tol {
                value = candidate_value;
                break;
            }
            (value, g1, g2) = self.objective_and_gradient(&point)?;
        }
        Ok((point, value, accepted))
    }
}

/// Solves the inner problem at `q1_anchor`, warm-started at (`Q1°`, equal-power `Q2`).
pub fn solve_inner(sub: &SubsystemChannels, q1_anchor: &PsdMatrix, budget: &PowerBudget, settings: &ScaSettings) -> Result<CovariancePair> {
    settings.validate()?;
    let problem = InnerProblem::new(sub, q1_anchor, budget)?;
    let start = CovariancePair::new(q1_anchor.clone(), PsdMatrix::scaled_identity(sub.n_i(), budget.q2_cap() / sub.n_i() as f64));
    Ok(problem.solve(start, settings)?.0)
}

/// `Q1 = (P_S / M_h) I`, `Q2 = (P_h / N_I) I`.
pub fn equal_power(sub: &SubsystemChannels, budget: &PowerBudget) -> CovariancePair {
    CovariancePair::new(
        PsdMatrix::scaled_identity(sub.m_h(), budget.p_s / sub.m_h() as f64),
        PsdMatrix::scaled_identity(sub.n_i(), budget.p_h / sub.n_i() as f64),
    )
}

/// Successive convex approximation of the weighted-objective maximisation.
///
/// Starts from equal power, solves the inner problem, re-anchors at its
/// `Q1` and repeats until the exact objective improves by less than
/// `outer_tol`. Each inner solve is warm-started at the previous solution,
/// where the surrogate equals the exact objective, so the exact objective at
/// successive anchors never decreases.
pub fn sca_precoding(sub: &SubsystemChannels, budget: &PowerBudget, settings: &ScaSettings) -> Result<ScaOutcome> {
    settings.validate()?;
    budget.validate()?;
    let mut point = CovariancePair::new(
        PsdMatrix::scaled_identity(sub.m_h(), budget.p_s / sub.m_h() as f64),
        PsdMatrix::scaled_identity(sub.n_i(), budget.q2_cap() / sub.n_i() as f64),
    );
    let mut evaluation = metrics::evaluate(sub, &point, budget)?;
    let mut trace = ScaTrace::default();
    trace.steps.push(ScaStep {
        iteration: 0,
        objective: evaluation.objective,
        surrogate: evaluation.objective,
        trace_q1: point.q1.trace(),
        trace_q2: point.q2.trace(),
        inner_iterations: 0,
    });
    for iteration in 1..=settings.max_outer {
        let problem = InnerProblem::new(sub, &point.q1, budget)?;
        let (next, surrogate, inner_iterations) = problem.solve(point.clone(), settings)?;
        let next_eval = metrics::evaluate(sub, &next, budget)?;
        if !next_eval.objective.is_finite() || !surrogate.is_finite() {
            return Err(PrecodingError::NonFinite { iteration, trace });
        }
        trace.steps.push(ScaStep {
            iteration,
            objective: next_eval.objective,
            surrogate,
            trace_q1: next.q1.trace(),
            trace_q2: next.q2.trace(),
            inner_iterations,
        });
        let improvement = next_eval.objective - evaluation.objective;
        point = next;
        evaluation = next_eval;
        if improvement < settings.outer_tol {
            break;
        }
    }
    let w1 = cholesky_lower(point.q1.matrix())?;
    let w2 = cholesky_lower(point.q2.matrix())?;
    Ok(ScaOutcome { covariances: point, w1, w2, evaluation, trace })
}

/// Exact weighted objective of a covariance pair (convenience for callers
/// that only need the scalar).
pub fn true_objective(sub: &SubsystemChannels, qp: &CovariancePair, budget: &PowerBudget) -> Result<f64> {
    Ok(metrics::evaluate(sub, qp, budget)?.objective)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_sub(h_i: f64, h_h: f64, h1: f64, h2: f64, noise: f64) -> SubsystemChannels {
        let one = |v: f64| CMatrix::from_element(1, 1, c(v, 0.0));
        SubsystemChannels { h_i: one(h_i), h_h: one(h_h), h1: one(h1), h2: one(h2), noise }
    }

    #[test]
    fn equal_power_examples() {
        let sub = SubsystemChannels {
            h_i: CMatrix::zeros(2, 3),
            h_h: CMatrix::zeros(1, 2),
            h1: CMatrix::zeros(2, 2),
            h2: CMatrix::zeros(1, 3),
            noise: 1.0,
        };
        let budget = PowerBudget::new(2.0, 1.5, 2.0, 0.5).unwrap();
        let qp = equal_power(&sub, &budget);
        assert!((qp.q1.matrix() - CMatrix::identity(2, 2)).camax() < 1e-15);
        assert!((qp.q2.trace() - 1.5).abs() < 1e-15);
        let scalar = equal_power(&scalar_sub(1.0, 1.0, 0.0, 0.0, 1.0), &budget);
        assert_eq!((scalar.q1.trace(), scalar.q2.trace()), (2.0, 1.5));
    }

    #[test]
    fn linearization_is_exact_at_anchor_and_without_interference() {
        let sub = scalar_sub(1.0, 1.0, 0.7, 0.2, 0.1);
        let qp = CovariancePair::new(PsdMatrix::diagonal(&[2.0]), PsdMatrix::diagonal(&[3.0]));
        let exact = metrics::info_rate(&sub, &qp).unwrap();
        assert!((linearized_rate(&sub, &qp, &qp.q1).unwrap() - exact).abs() < 1e-12);
        let no_si = scalar_sub(1.0, 1.0, 0.0, 0.2, 0.1);
        let expected = (1.0f64 + 3.0 / 0.1).log2();
        let anchor = PsdMatrix::diagonal(&[5.0]);
        assert!((linearized_rate(&no_si, &qp, &anchor).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn scalar_no_si_inner_solve_uses_full_power() {
        let sub = scalar_sub(1.0, 1.0, 0.0, 0.0, 1e-2);
        let budget = PowerBudget::new(4.0, 3.0, 4.0, 0.999).unwrap();
        let qp = solve_inner(&sub, &PsdMatrix::diagonal(&[1.0]), &budget, &ScaSettings::default()).unwrap();
        assert!((qp.q2.trace() - 3.0).abs() < 1e-6);
        assert!(qp.is_feasible(&budget));
    }

    #[test]
    fn zero_channels_stay_at_zero() {
        let sub = scalar_sub(0.0, 0.0, 0.0, 0.0, 1.0);
        let budget = PowerBudget::fully_charged(1.0, 0.5).unwrap();
        let problem = InnerProblem::new(&sub, &PsdMatrix::zeros(1), &budget).unwrap();
        let (qp, _, steps) = problem.solve(CovariancePair::zeros(1, 1), &ScaSettings::default()).unwrap();
        assert_eq!(steps, 0);
        assert_eq!(qp, CovariancePair::zeros(1, 1));
    }

    #[test]
    fn scalar_no_si_sca_converges_quickly() {
        let sub = scalar_sub(1.0, 0.5, 0.0, 0.0, 1e-2);
        let budget = PowerBudget::new(4.0, 4.0, 4.0, 0.9).unwrap();
        let out = sca_precoding(&sub, &budget, &ScaSettings::default()).unwrap();
        assert!(out.trace.steps.len() <= 3, "{:?}", out.trace);
        assert!((out.covariances.q1.trace() - 4.0).abs() < 1e-6);
        assert!((out.covariances.q2.trace() - 4.0).abs() < 1e-6);
        assert!((&out.w1 * out.w1.adjoint() - out.covariances.q1.matrix()).camax() < 1e-8);
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let sub = scalar_sub(1.0, 0.5, 0.3, 0.1, 1e-2);
        let budget = PowerBudget::fully_charged(4.0, 0.5).unwrap();
        let out = sca_precoding(&sub, &budget, &ScaSettings::default()).unwrap();
        let csv = out.trace.to_csv();
        assert!(csv.starts_with(ScaTrace::CSV_HEADER));
        assert_eq!(csv.lines().count(), out.trace.steps.len() + 1);
    }

    #[test]
    fn bad_settings_rejected() {
        let settings = ScaSettings { max_outer: 0, ..ScaSettings::default() };
        assert!(settings.validate().is_err());
    }
}
