//! Finite MDPs, exact Bellman operators, dynamic programming, policies and
//! marginal propagation. Everything here is exact on the finite model and
//! serves as the ground truth for the bound checks elsewhere in the crate.

mod discretize;
mod dp;
mod io;
mod operators;
pub mod random;
mod sampling;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use discretize::{discretize, ContinuousMdpSpec, KernelShape, RewardShape};
pub use dp::{
    optimal_solution, policy_evaluation, policy_evaluation_exact, policy_evaluation_iterative,
    policy_iteration, policy_state_values, value_iteration, value_iteration_sequence,
    OptimalSolution, PolicyIterationStep, PolicyIterationTrace, EXACT_SOLVE_LIMIT,
};
pub use io::{load_mdp, read_mdp, save_mdp, write_mdp};
pub use operators::{
    bellman_expectation, bellman_optimality, greedy_policy, max_transition_apply,
    policy_kernel_apply, push_forward,
};
pub use sampling::{marginal_propagate, marginal_sequence, sample_index, sample_trajectory};

/// Tolerance for probability-simplex invariants.
pub const PROB_TOL: f64 = 1e-12;

fn check_simplex(what: &str, values: &[f64]) -> Result<()> {
    let mut total = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return invalid(format!("{what}: entry {i} is {v}, must be a finite nonnegative probability"));
        }
        total += v;
    }
    if (total - 1.0).abs() > PROB_TOL {
        return invalid(format!("{what}: sums to {total}, expected 1 within {PROB_TOL:e}"));
    }
    Ok(())
}

// ── MDP ──────────────────────────────────────────────────────────────

/// Finite discounted MDP with deterministic rewards.
///
/// Transitions are stored flat in `(s, a, s')` row-major order; rewards in
/// `(s, a)` row-major order. Pair index of `(s, a)` is `s * n_actions + a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    r_max: f64,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        r_max: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return invalid("n_states and n_actions must be positive");
        }
        let pairs = n_states * n_actions;
        if transition.len() != pairs * n_states {
            return invalid(format!(
                "transition has {} entries, expected n_states*n_actions*n_states = {}",
                transition.len(),
                pairs * n_states
            ));
        }
        if reward.len() != pairs {
            return invalid(format!("reward has {} entries, expected {pairs}", reward.len()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return invalid(format!("gamma = {gamma} violates 0 <= gamma < 1"));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return invalid(format!("r_max = {r_max} must be a positive real"));
        }
        for sa in 0..pairs {
            let (s, a) = (sa / n_actions, sa % n_actions);
            check_simplex(
                &format!("transition row (s={s}, a={a})"),
                &transition[sa * n_states..(sa + 1) * n_states],
            )?;
            let r = reward[sa];
            if !r.is_finite() || r.abs() > r_max {
                return invalid(format!("reward (s={s}, a={a}) = {r} violates |r| <= r_max = {r_max}"));
            }
        }
        Ok(Self { n_states, n_actions, transition, reward, gamma, r_max })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }
    pub fn unpair(&self, sa: usize) -> (usize, usize) {
        (sa / self.n_actions, sa % self.n_actions)
    }
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }
    /// Next-state distribution of pair index `sa`.
    pub fn next_dist(&self, sa: usize) -> &[f64] {
        &self.transition[sa * self.n_states..(sa + 1) * self.n_states]
    }
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }
    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }
    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// Same dynamics with another discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, self.transition.clone(), self.reward.clone(), gamma, self.r_max)
    }

    /// True when every transition row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        (0..self.n_pairs()).all(|sa| self.next_dist(sa).iter().filter(|&&p| p > 0.0).count() == 1)
    }

    pub(crate) fn check_qtable(&self, q: &QTable, what: &str) -> Result<()> {
        if q.n_states != self.n_states || q.n_actions != self.n_actions {
            return invalid(format!(
                "{what} has shape {}x{}, mdp expects {}x{}",
                q.n_states, q.n_actions, self.n_states, self.n_actions
            ));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, pi: &StochasticPolicy) -> Result<()> {
        if pi.n_states != self.n_states || pi.n_actions != self.n_actions {
            return invalid(format!(
                "policy has shape {}x{}, mdp expects {}x{}",
                pi.n_states, pi.n_actions, self.n_states, self.n_actions
            ));
        }
        Ok(())
    }
}

// ── Action-value tables ──────────────────────────────────────────────

/// Action-value function on a finite MDP, stored row-major by `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::constant(n_states, n_actions, 0.0)
    }

    pub fn constant(n_states: usize, n_actions: usize, c: f64) -> Self {
        Self { n_states, n_actions, values: vec![c; n_states * n_actions] }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return invalid(format!("q table needs {} values, got {}", n_states * n_actions, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("q table entry {i} is not finite"));
        }
        Ok(Self { n_states, n_actions, values })
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                values.push(f(s, a));
            }
        }
        Self { n_states, n_actions, values }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max_a q(s, a)`.
    pub fn state_max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest-index maximizer of `q(s, ·)`.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// Vector of `max_a q(s, a)` over states.
    pub fn max_values(&self) -> Vec<f64> {
        (0..self.n_states).map(|s| self.state_max(s)).collect()
    }

    fn zip(&self, other: &QTable, f: impl Fn(f64, f64) -> f64) -> QTable {
        assert!(
            self.n_states == other.n_states && self.n_actions == other.n_actions,
            "q table shape mismatch"
        );
        let values = self.values.iter().zip(&other.values).map(|(&x, &y)| f(x, y)).collect();
        QTable { n_states: self.n_states, n_actions: self.n_actions, values }
    }

    /// Entrywise difference; panics on shape mismatch.
    pub fn sub(&self, other: &QTable) -> QTable {
        self.zip(other, |x, y| x - y)
    }

    /// Entrywise sum; panics on shape mismatch.
    pub fn add(&self, other: &QTable) -> QTable {
        self.zip(other, |x, y| x + y)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> QTable {
        QTable { n_states: self.n_states, n_actions: self.n_actions, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn abs(&self) -> QTable {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> QTable {
        self.map(|v| c * v)
    }

    /// `self <= other + tol` entrywise.
    pub fn le(&self, other: &QTable, tol: f64) -> bool {
        self.values.iter().zip(&other.values).all(|(&x, &y)| x <= y + tol)
    }

    /// Largest violation of `self <= other`, zero when it holds.
    pub fn max_excess(&self, other: &QTable) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (&x, &y)| m.max(x - y))
    }
}

// ── Policies ─────────────────────────────────────────────────────────

/// Stationary stochastic policy as an `(s, a)` probability matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return invalid("policy needs positive state and action counts");
        }
        if probs.len() != n_states * n_actions {
            return invalid(format!("policy needs {} entries, got {}", n_states * n_actions, probs.len()));
        }
        for s in 0..n_states {
            check_simplex(&format!("policy row s={s}"), &probs[s * n_actions..(s + 1) * n_actions])?;
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Action that carries all the mass in state `s`, if the row is a point mass.
    pub fn deterministic_action(&self, s: usize) -> Option<usize> {
        let row = self.row(s);
        row.iter().position(|&p| p == 1.0).filter(|_| row.iter().filter(|&&p| p > 0.0).count() == 1)
    }
}

/// Deterministic stationary policy (state → action index).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    n_actions: usize,
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(n_actions: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.is_empty() || n_actions == 0 {
            return invalid("deterministic policy needs at least one state and action");
        }
        if let Some(s) = actions.iter().position(|&a| a >= n_actions) {
            return invalid(format!("action {} at state {s} out of range 0..{n_actions}", actions[s]));
        }
        Ok(Self { n_actions, actions })
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }
    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
    pub fn n_states(&self) -> usize {
        self.actions.len()
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn to_stochastic(&self) -> StochasticPolicy {
        let mut probs = vec![0.0; self.actions.len() * self.n_actions];
        for (s, &a) in self.actions.iter().enumerate() {
            probs[s * self.n_actions + a] = 1.0;
        }
        StochasticPolicy { n_states: self.actions.len(), n_actions: self.n_actions, probs }
    }
}

/// Sequence of per-step policies; the last entry repeats forever, so a
/// stationary policy is a length-1 sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonStationaryPolicy {
    steps: Vec<StochasticPolicy>,
}

impl NonStationaryPolicy {
    pub fn new(steps: Vec<StochasticPolicy>) -> Result<Self> {
        let Some(first) = steps.first() else {
            return invalid("non-stationary policy needs at least one step");
        };
        if steps.iter().any(|p| p.n_states != first.n_states || p.n_actions != first.n_actions) {
            return invalid("all policy steps must share one shape");
        }
        Ok(Self { steps })
    }

    pub fn stationary(policy: StochasticPolicy) -> Self {
        Self { steps: vec![policy] }
    }

    pub fn step(&self, t: usize) -> &StochasticPolicy {
        &self.steps[t.min(self.steps.len() - 1)]
    }
    pub fn steps(&self) -> &[StochasticPolicy] {
        &self.steps
    }
}

// ── Distributions ────────────────────────────────────────────────────

/// Distribution over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDist {
    mass: Vec<f64>,
}

impl StateDist {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return invalid("state distribution must be nonempty");
        }
        check_simplex("state distribution", &mass)?;
        Ok(Self { mass })
    }

    pub fn uniform(n_states: usize) -> Self {
        Self { mass: vec![1.0 / n_states as f64; n_states] }
    }

    pub fn point(n_states: usize, s: usize) -> Self {
        let mut mass = vec![0.0; n_states];
        mass[s] = 1.0;
        Self { mass }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
    pub fn len(&self) -> usize {
        self.mass.len()
    }
    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }
}

/// Distribution over state-action pairs, row-major by `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaDistribution {
    n_states: usize,
    n_actions: usize,
    mass: Vec<f64>,
}

impl SaDistribution {
    pub fn new(n_states: usize, n_actions: usize, mass: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || mass.len() != n_states * n_actions {
            return invalid(format!(
                "state-action distribution needs {} entries, got {}",
                n_states * n_actions,
                mass.len()
            ));
        }
        check_simplex("state-action distribution", &mass)?;
        Ok(Self { n_states, n_actions, mass })
    }

    /// Computed masses that are simplex-valued by construction.
    pub(crate) fn from_mass_unchecked(n_states: usize, n_actions: usize, mass: Vec<f64>) -> Self {
        debug_assert_eq!(mass.len(), n_states * n_actions);
        Self { n_states, n_actions, mass }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let k = n_states * n_actions;
        Self { n_states, n_actions, mass: vec![1.0 / k as f64; k] }
    }

    pub fn point(n_states: usize, n_actions: usize, s: usize, a: usize) -> Self {
        let mut mass = vec![0.0; n_states * n_actions];
        mass[s * n_actions + a] = 1.0;
        Self { n_states, n_actions, mass }
    }

    /// `ρ ⊗ π`.
    pub fn product(rho: &StateDist, policy: &StochasticPolicy) -> Result<Self> {
        if rho.len() != policy.n_states {
            return invalid("state distribution and policy disagree on n_states");
        }
        let mass = (0..policy.n_states)
            .flat_map(|s| policy.row(s).iter().map(move |&p| rho.mass[s] * p))
            .collect();
        Ok(Self { n_states: policy.n_states, n_actions: policy.n_actions, mass })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn mass(&self, s: usize, a: usize) -> f64 {
        self.mass[s * self.n_actions + a]
    }
    pub fn masses(&self) -> &[f64] {
        &self.mass
    }
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
    pub fn state_marginal(&self) -> Vec<f64> {
        (0..self.n_states).map(|s| self.mass[s * self.n_actions..(s + 1) * self.n_actions].iter().sum()).collect()
    }

    /// Weighted L² norm `(Σ mass·q²)^{1/2}` of a table.
    pub fn l2_norm(&self, q: &QTable) -> f64 {
        self.mass.iter().zip(q.values()).map(|(&m, &v)| m * v * v).sum::<f64>().sqrt()
    }

    /// Uniform mixture of distributions of one shape.
    pub fn average(items: &[SaDistribution]) -> Result<Self> {
        let Some(first) = items.first() else {
            return invalid("cannot average an empty list of distributions");
        };
        let mut mass = vec![0.0; first.mass.len()];
        for d in items {
            if d.mass.len() != mass.len() {
                return invalid("distributions to average differ in shape");
            }
            for (m, &v) in mass.iter_mut().zip(&d.mass) {
                *m += v;
            }
        }
        let k = items.len() as f64;
        mass.iter_mut().for_each(|m| *m /= k);
        Ok(Self { n_states: first.n_states, n_actions: first.n_actions, mass })
    }
}

/// One observed transition `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}
