//! Transition batches and the behavior rules that generate them.
//!
//! Each sample consumes exactly two uniforms from the run's generator: one
//! for the `(s, a)` pair by inverse CDF over the flat pair law, one for `s'`.
//! A fixed-distribution behavior therefore reproduces i.i.d. draws exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{sample_index, FiniteMdp, QTable, SaDistribution, StateDist, StochasticPolicy, Transition, PROB_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Fresh,
    Adaptive,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Fresh => "fresh",
            Protocol::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionBatch {
    pub transitions: Vec<Transition>,
    pub protocol: Protocol,
    pub behavior: String,
    pub round: usize,
    pub seed: u64,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Pair indices `(s_i, a_i)` of the design.
    pub fn pairs(&self, n_actions: usize) -> Vec<usize> {
        self.transitions.iter().map(|t| t.s * n_actions + t.a).collect()
    }

    /// Rewards within `[−r_max, r_max]` and successor states in range.
    pub fn validate(&self, mdp: &FiniteMdp) -> Result<()> {
        for (i, t) in self.transitions.iter().enumerate() {
            if t.s >= mdp.n_states() || t.a >= mdp.n_actions() || t.s_next >= mdp.n_states() {
                return invalid(format!("transition {i} has out-of-range indices"));
            }
            if !(t.r.abs() <= mdp.r_max()) {
                return invalid(format!("transition {i} reward {} exceeds r_max", t.r));
            }
        }
        Ok(())
    }
}

// ── Behavior rules ───────────────────────────────────────────────────

/// Conditional law of the next `(s, a)` given the round's iterate and the
/// samples already drawn in the round.
pub trait Behavior: Send + Sync {
    fn id(&self) -> String;
    fn conditional_law(&self, mdp: &FiniteMdp, q_hat: &QTable, prefix: &[Transition]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionRule {
    Uniform,
    EpsGreedy { eps: f64 },
    Boltzmann { tau: f64 },
}

impl ActionRule {
    fn validate(&self) -> Result<()> {
        match *self {
            ActionRule::EpsGreedy { eps } if !(0.0..=1.0).contains(&eps) => invalid(format!("eps = {eps} outside [0, 1]")),
            ActionRule::Boltzmann { tau } if !(tau.is_finite() && tau > 0.0) => invalid(format!("tau = {tau} must be positive")),
            _ => Ok(()),
        }
    }

    /// Action probabilities at state `s` relative to `q`.
    pub fn probabilities(&self, q: &QTable, s: usize) -> Vec<f64> {
        let na = q.n_actions();
        match *self {
            ActionRule::Uniform => vec![1.0 / na as f64; na],
            ActionRule::EpsGreedy { eps } => {
                let g = q.argmax(s);
                (0..na).map(|a| eps / na as f64 + if a == g { 1.0 - eps } else { 0.0 }).collect()
            }
            ActionRule::Boltzmann { tau } => {
                let m = q.state_max(s);
                let w: Vec<f64> = q.row(s).iter().map(|v| ((v - m) / tau).exp()).collect();
                let z: f64 = w.iter().sum();
                w.iter().map(|v| v / z).collect()
            }
        }
    }

    /// Stationary policy induced on every state.
    pub fn policy(&self, q: &QTable) -> StochasticPolicy {
        let probs = (0..q.n_states()).flat_map(|s| self.probabilities(q, s)).collect();
        StochasticPolicy::new(q.n_states(), q.n_actions(), probs).expect("rule yields simplex rows")
    }

    fn describe(&self) -> String {
        match self {
            ActionRule::Uniform => "uniform".into(),
            ActionRule::EpsGreedy { eps } => format!("eps_greedy({eps})"),
            ActionRule::Boltzmann { tau } => format!("boltzmann({tau})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateRule {
    /// States drawn independently from a fixed distribution.
    Iid { dist: StateDist },
    /// States follow the sampled successor, resetting to `reset` with probability `reset_prob`.
    Trajectory { reset_prob: f64, reset: StateDist },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorRule {
    /// History-independent pair law `μ`.
    Fixed { mu: SaDistribution },
    /// Action rule applied to `Q̂_k`, with states from a state rule.
    Policy { action: ActionRule, states: StateRule },
}

impl BehaviorRule {
    pub fn validate(&self, mdp: &FiniteMdp) -> Result<()> {
        match self {
            BehaviorRule::Fixed { mu } => {
                if mu.n_states() != mdp.n_states() || mu.n_actions() != mdp.n_actions() {
                    return invalid("behavior distribution does not match the mdp shape");
                }
            }
            BehaviorRule::Policy { action, states } => {
                action.validate()?;
                let dist = match states {
                    StateRule::Iid { dist } => dist,
                    StateRule::Trajectory { reset_prob, reset } => {
                        if !(0.0..=1.0).contains(reset_prob) {
                            return invalid(format!("reset_prob = {reset_prob} outside [0, 1]"));
                        }
                        reset
                    }
                };
                if dist.len() != mdp.n_states() {
                    return invalid("behavior state distribution does not match n_states");
                }
            }
        }
        Ok(())
    }
}

impl Behavior for BehaviorRule {
    fn id(&self) -> String {
        match self {
            BehaviorRule::Fixed { .. } => "fixed".into(),
            BehaviorRule::Policy { action, states } => match states {
                StateRule::Iid { .. } => format!("{}/iid", action.describe()),
                StateRule::Trajectory { reset_prob, .. } => format!("{}/trajectory({reset_prob})", action.describe()),
            },
        }
    }

    fn conditional_law(&self, mdp: &FiniteMdp, q_hat: &QTable, prefix: &[Transition]) -> Result<Vec<f64>> {
        match self {
            BehaviorRule::Fixed { mu } => Ok(mu.masses().to_vec()),
            BehaviorRule::Policy { action, states } => {
                let ns = mdp.n_states();
                let state_law: Vec<f64> = match (states, prefix.last()) {
                    (StateRule::Iid { dist }, _) => dist.mass().to_vec(),
                    (StateRule::Trajectory { reset, .. }, None) => reset.mass().to_vec(),
                    (StateRule::Trajectory { reset_prob, reset }, Some(last)) => (0..ns)
                        .map(|s| reset_prob * reset.mass()[s] + if s == last.s_next { 1.0 - reset_prob } else { 0.0 })
                        .collect(),
                };
                let mut law = Vec::with_capacity(mdp.n_pairs());
                for (s, &m) in state_law.iter().enumerate() {
                    law.extend(action.probabilities(q_hat, s).into_iter().map(|p| m * p));
                }
                Ok(law)
            }
        }
    }
}

fn check_law(mdp: &FiniteMdp, law: &[f64]) -> Result<()> {
    if law.len() != mdp.n_pairs() {
        return invalid(format!("conditional law has {} entries, expected {}", law.len(), mdp.n_pairs()));
    }
    let total: f64 = law.iter().sum();
    if law.iter().any(|&p| !(p >= 0.0 && p.is_finite())) || (total - 1.0).abs() > 1e3 * PROB_TOL {
        return invalid(format!("conditional law is not a probability vector (total {total})"));
    }
    Ok(())
}

fn draw<R: Rng>(mdp: &FiniteMdp, law: &[f64], rng: &mut R) -> Transition {
    let sa = sample_index(law, rng.gen::<f64>());
    let s_next = sample_index(mdp.next_dist(sa), rng.gen::<f64>());
    let (s, a) = mdp.unpair(sa);
    Transition { s, a, r: mdp.rewards()[sa], s_next }
}

/// `n` i.i.d. draws `(s, a) ~ μ`, `s' ~ P(·|s, a)`.
pub fn sample_iid<R: Rng>(mdp: &FiniteMdp, mu: &SaDistribution, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
    if mu.n_states() != mdp.n_states() || mu.n_actions() != mdp.n_actions() {
        return invalid("sampling distribution does not match the mdp shape");
    }
    Ok((0..n).map(|_| draw(mdp, mu.masses(), rng)).collect())
}

/// Sequential within-round sampling; returns the transitions and the exact
/// predictable design `μ̄ = (1/n) Σ_i μ_i`.
pub fn sample_adaptive<R: Rng>(
    mdp: &FiniteMdp,
    behavior: &dyn Behavior,
    q_hat: &QTable,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Transition>, SaDistribution)> {
    if n == 0 {
        return invalid("batch size must be positive");
    }
    mdp.check_qtable(q_hat, "q_hat")?;
    let mut out = Vec::with_capacity(n);
    let mut avg = vec![0.0; mdp.n_pairs()];
    for _ in 0..n {
        let law = behavior.conditional_law(mdp, q_hat, &out)?;
        check_law(mdp, &law)?;
        for (m, &p) in avg.iter_mut().zip(&law) {
            *m += p;
        }
        let t = draw(mdp, &law, rng);
        out.push(t);
    }
    avg.iter_mut().for_each(|m| *m /= n as f64);
    Ok((out, SaDistribution::from_mass_unchecked(mdp.n_states(), mdp.n_actions(), avg)))
}
