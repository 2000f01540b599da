//! Random instances for property tests and campaigns.

use rand::Rng;

use super::{FiniteMdp, QTable, SaDistribution, StateDist, StochasticPolicy};

/// Uniform draw from the probability simplex of dimension `k`.
pub fn simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    fix_total(&mut w);
    w
}

/// Puts round-off onto the largest entry so the row sums to one.
fn fix_total(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    let j = (0..w.len()).fold(0, |b, i| if w[i] > w[b] { i } else { b });
    w[j] += 1.0 - total;
}

/// Dense random MDP: simplex-uniform rows, rewards uniform on `[−1, 1]`, `r_max = 1`.
pub fn random_mdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> FiniteMdp {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(simplex(rng, n_states));
    }
    let reward = (0..n_states * n_actions).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    FiniteMdp::new(n_states, n_actions, transition, reward, gamma, 1.0).expect("valid by construction")
}

/// Random MDP whose rows each keep at most `support` successor states.
pub fn random_sparse_mdp<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    support: usize,
) -> FiniteMdp {
    let support = support.clamp(1, n_states);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let mut row = vec![0.0; n_states];
        let w = simplex(rng, support);
        for p in w {
            let s = rng.gen_range(0..n_states);
            row[s] += p;
        }
        fix_total(&mut row);
        transition.extend(row);
    }
    let reward = (0..n_states * n_actions).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    FiniteMdp::new(n_states, n_actions, transition, reward, gamma, 1.0).expect("valid by construction")
}

/// Random deterministic MDP (every row a point mass).
pub fn random_deterministic_mdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> FiniteMdp {
    random_sparse_mdp(rng, n_states, n_actions, gamma, 1)
}

pub fn random_policy<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize) -> StochasticPolicy {
    let probs = (0..n_states).flat_map(|_| simplex(rng, n_actions)).collect();
    StochasticPolicy::new(n_states, n_actions, probs).expect("valid by construction")
}

pub fn random_qtable<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, scale: f64) -> QTable {
    QTable::from_fn(n_states, n_actions, |_, _| rng.gen_range(-scale..=scale))
}

pub fn random_state_dist<R: Rng>(rng: &mut R, n_states: usize) -> StateDist {
    StateDist::new(simplex(rng, n_states)).expect("valid by construction")
}

pub fn random_sa_dist<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize) -> SaDistribution {
    SaDistribution::new(n_states, n_actions, simplex(rng, n_states * n_actions)).expect("valid by construction")
}
