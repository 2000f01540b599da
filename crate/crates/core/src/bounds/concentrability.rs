use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{marginal_propagate, FiniteMdp, NonStationaryPolicy, SaDistribution, StateDist, StochasticPolicy};

/// Non-stationary policy attaining the largest density ratio of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub policy: NonStationaryPolicy,
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrabilityResult {
    /// `max_{t ≤ T_max} max_{π̄} max_{(s,a)} P_t^π̄(s,a)/μ(s,a)`; a lower bound on the untruncated sup.
    pub c: f64,
    pub infinite: bool,
    pub t_max: usize,
    pub witness: Option<Witness>,
    /// `max_mass[t][s] = max_π̄ P(s_t = s)`.
    pub max_mass: Vec<Vec<f64>>,
    /// Certified upper bound on the untruncated sup, from the monotone
    /// reachability tail `sup_{t ≥ T} max_π̄ P(s_t = s) ≤ max_x G_T(x)`.
    pub c_upper: f64,
    /// Whether the running max was constant over the stabilization window.
    pub stabilized: bool,
    pub tail_note: String,
}

impl ConcentrabilityResult {
    /// Whether the truncated value matches the certified upper bound.
    pub fn is_exact(&self) -> bool {
        self.c == self.c_upper
    }
}

/// `ceil(4/(1−γ))`.
pub fn default_horizon(gamma: f64) -> usize {
    (4.0 / (1.0 - gamma)).ceil() as usize
}

/// `ceil(2/(1−γ))`.
pub fn stabilization_window(gamma: f64) -> usize {
    (2.0 / (1.0 - gamma)).ceil() as usize
}

/// Backward reachability tables: `reach[s*][h][x]` is the largest
/// probability of sitting at `s*` after `h` steps from `x`.
struct Reach<'a> {
    mdp: &'a FiniteMdp,
    reach: Vec<Vec<Vec<f64>>>,
}

impl<'a> Reach<'a> {
    fn new(mdp: &'a FiniteMdp) -> Self {
        let ns = mdp.n_states();
        let reach = (0..ns)
            .map(|target| vec![(0..ns).map(|x| if x == target { 1.0 } else { 0.0 }).collect()])
            .collect();
        Self { mdp, reach }
    }

    fn action_value(&self, g: &[f64], s: usize, a: usize) -> f64 {
        self.mdp.next_dist(self.mdp.pair(s, a)).iter().zip(g).map(|(p, v)| p * v).sum()
    }

    /// Lowest-index action maximizing the one-step lookahead of `g` at `s`.
    fn best_action(&self, g: &[f64], s: usize) -> (usize, f64) {
        let mut best = (0, self.action_value(g, s, 0));
        for a in 1..self.mdp.n_actions() {
            let v = self.action_value(g, s, a);
            if v > best.1 {
                best = (a, v);
            }
        }
        best
    }

    fn extend(&mut self) {
        let ns = self.mdp.n_states();
        for target in 0..ns {
            let g = self.reach[target].last().expect("nonempty").clone();
            let next = (0..ns).map(|s| self.best_action(&g, s).1).collect();
            self.reach[target].push(next);
        }
    }

    fn horizon(&self) -> usize {
        self.reach[0].len() - 1
    }

    fn max_mass(&self, rho: &StateDist, h: usize) -> Vec<f64> {
        self.reach.iter().map(|t| t[h].iter().zip(rho.mass()).map(|(g, r)| g * r).sum()).collect()
    }

    fn tail_sup(&self, target: usize) -> f64 {
        self.reach[target].last().expect("nonempty").iter().fold(0.0, |m: f64, &v| m.max(v))
    }

    fn witness_policy(&self, t: usize, target: usize, a_star: usize) -> NonStationaryPolicy {
        let (ns, na) = (self.mdp.n_states(), self.mdp.n_actions());
        let mut steps = Vec::with_capacity(t + 1);
        for j in 0..t {
            let g = &self.reach[target][t - 1 - j];
            let actions: Vec<usize> = (0..ns).map(|s| self.best_action(g, s).0).collect();
            steps.push(deterministic(ns, na, |s| actions[s]));
        }
        steps.push(deterministic(ns, na, |_| a_star));
        NonStationaryPolicy::new(steps).expect("steps share one shape")
    }
}

fn deterministic(ns: usize, na: usize, f: impl Fn(usize) -> usize) -> StochasticPolicy {
    let mut probs = vec![0.0; ns * na];
    for s in 0..ns {
        probs[s * na + f(s)] = 1.0;
    }
    StochasticPolicy::new(ns, na, probs).expect("one-hot rows")
}

/// Least `μ(s,·)` mass and its lowest-index action.
fn min_action(mu: &SaDistribution, s: usize) -> (usize, f64) {
    let mut best = (0, mu.mass(s, 0));
    for a in 1..mu.n_actions() {
        if mu.mass(s, a) < best.1 {
            best = (a, mu.mass(s, a));
        }
    }
    best
}

fn ratio(mass: f64, mu: f64) -> f64 {
    if mass <= 0.0 {
        0.0
    } else if mu <= 0.0 {
        f64::INFINITY
    } else {
        mass / mu
    }
}

fn check(mdp: &FiniteMdp, rho: &StateDist, mu: &SaDistribution) -> Result<()> {
    if rho.len() != mdp.n_states() {
        return invalid(format!("rho has {} states, mdp has {}", rho.len(), mdp.n_states()));
    }
    if mu.n_states() != mdp.n_states() || mu.n_actions() != mdp.n_actions() {
        return invalid("mu does not match the mdp shape");
    }
    Ok(())
}

struct Scan {
    c: f64,
    best: Option<(usize, usize, usize)>,
    max_mass: Vec<Vec<f64>>,
}

fn scan_step(scan: &mut Scan, reach: &Reach<'_>, rho: &StateDist, mu: &SaDistribution, t: usize) -> bool {
    let masses = reach.max_mass(rho, t);
    let mut changed = false;
    for (s, &m) in masses.iter().enumerate() {
        let (a, w) = min_action(mu, s);
        let r = ratio(m, w);
        if r > scan.c {
            scan.c = r;
            scan.best = Some((t, s, a));
            changed = true;
        }
    }
    scan.max_mass.push(masses);
    changed
}

fn finish(
    mdp: &FiniteMdp,
    rho: &StateDist,
    mu: &SaDistribution,
    reach: &Reach<'_>,
    scan: Scan,
    stabilized: bool,
    note: String,
) -> Result<ConcentrabilityResult> {
    let mut tail: f64 = 0.0;
    for s in 0..mdp.n_states() {
        tail = tail.max(ratio(reach.tail_sup(s), min_action(mu, s).1));
    }
    let c_upper = scan.c.max(tail);
    let witness = match scan.best {
        Some((t, s, a)) => {
            let policy = reach.witness_policy(t, s, a);
            let marginal = marginal_propagate(mdp, rho, &policy, t)?;
            let ratio = ratio(marginal.mass(s, a), mu.mass(s, a));
            Some(Witness { policy, t, s, a, ratio })
        }
        None => None,
    };
    Ok(ConcentrabilityResult {
        c: scan.c,
        infinite: scan.c.is_infinite(),
        t_max: reach.horizon(),
        witness,
        max_mass: scan.max_mass,
        c_upper,
        stabilized,
        tail_note: note,
    })
}

/// Uniform-marginal concentrability of `μ` over all non-stationary policies
/// started from `ρ`, searched exactly up to step `t_max` by max-reachability
/// dynamic programming.
pub fn concentrability(
    mdp: &FiniteMdp,
    rho: &StateDist,
    mu: &SaDistribution,
    t_max: usize,
) -> Result<ConcentrabilityResult> {
    check(mdp, rho, mu)?;
    let mut reach = Reach::new(mdp);
    let mut scan = Scan { c: 0.0, best: None, max_mass: Vec::with_capacity(t_max + 1) };
    for t in 0..=t_max {
        if t > 0 {
            reach.extend();
        }
        scan_step(&mut scan, &reach, rho, mu, t);
    }
    let note = format!("marginals searched for t <= {t_max}; later steps covered only by c_upper");
    finish(mdp, rho, mu, &reach, scan, false, note)
}

/// As [`concentrability`], raising the horizon from `ceil(4/(1−γ))` until
/// the running max has been constant for `ceil(2/(1−γ))` consecutive steps,
/// or until `cap` is reached.
pub fn concentrability_stabilized(
    mdp: &FiniteMdp,
    rho: &StateDist,
    mu: &SaDistribution,
    cap: usize,
) -> Result<ConcentrabilityResult> {
    check(mdp, rho, mu)?;
    let start = default_horizon(mdp.gamma());
    let window = stabilization_window(mdp.gamma());
    let mut reach = Reach::new(mdp);
    let mut scan = Scan { c: 0.0, best: None, max_mass: Vec::new() };
    let mut last_change = 0;
    let mut t = 0;
    let stabilized = loop {
        if t > 0 {
            reach.extend();
        }
        if scan_step(&mut scan, &reach, rho, mu, t) {
            last_change = t;
        }
        if t >= start && t - last_change >= window {
            break true;
        }
        if t >= cap.max(start) {
            break false;
        }
        t += 1;
    };
    let note = if stabilized {
        format!("running max constant over steps {last_change}..={t} (window {window})")
    } else {
        format!("running max still moving at the cap t = {t}")
    };
    finish(mdp, rho, mu, &reach, scan, stabilized, note)
}

/// Result of [`enumerate_max_mass`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumeratedMass {
    /// `max_mass[t][s]` for `t ≤ horizon`.
    pub max_mass: Vec<Vec<f64>>,
    /// Deepest step enumerated completely within the node budget.
    pub horizon: usize,
    pub nodes: u64,
}

/// Brute-force `max_π̄ P(s_t = s)` over every deterministic non-stationary
/// policy, by depth-first enumeration of the per-step rules. Rules that only
/// differ on zero-mass states induce the same marginals, so each node
/// branches over the actions of its support states alone. At the last step
/// the mass at each target state is maximized action by action. Horizons are
/// deepened one step at a time up to `t_max` while the next tree, whose size
/// is known from the current last level, fits in `node_budget` nodes.
pub fn enumerate_max_mass(mdp: &FiniteMdp, rho: &StateDist, t_max: usize, node_budget: u64) -> Result<EnumeratedMass> {
    if rho.len() != mdp.n_states() {
        return invalid("rho does not match n_states");
    }
    let ns = mdp.n_states();
    let mut best = EnumeratedMass { max_mass: vec![rho.mass().to_vec()], horizon: 0, nodes: 1 };
    for h in 1..=t_max {
        let mut work = vec![vec![0.0; ns]; h + 1];
        work[0].copy_from_slice(rho.mass());
        let mut table = vec![vec![0.0; ns]; h + 1];
        let (mut nodes, mut frontier) = (0u64, 0u64);
        if !enumerate(mdp, &mut work, 0, &mut table, &mut nodes, &mut frontier, node_budget) {
            break;
        }
        best = EnumeratedMass { max_mass: table, horizon: h, nodes };
        if nodes.saturating_add(frontier) > node_budget {
            break;
        }
    }
    Ok(best)
}

fn enumerate(
    mdp: &FiniteMdp,
    work: &mut [Vec<f64>],
    t: usize,
    table: &mut [Vec<f64>],
    nodes: &mut u64,
    frontier: &mut u64,
    budget: u64,
) -> bool {
    *nodes += 1;
    if *nodes > budget {
        return false;
    }
    let (na, h) = (mdp.n_actions(), work.len() - 1);
    for (m, &d) in table[t].iter_mut().zip(&work[t]) {
        *m = m.max(d);
    }
    if t == h {
        return true;
    }
    let support: Vec<usize> = (0..mdp.n_states()).filter(|&s| work[t][s] > 0.0).collect();
    if t + 1 == h {
        for (s_next, m) in table[h].iter_mut().enumerate() {
            let mass: f64 = support
                .iter()
                .map(|&s| (0..na).map(|a| work[t][s] * mdp.next_dist(mdp.pair(s, a))[s_next]).fold(0.0, f64::max))
                .sum();
            *m = m.max(mass);
        }
        *frontier = frontier.saturating_add((na as u64).saturating_pow(support.len() as u32));
        return true;
    }
    let mut choice = vec![0usize; support.len()];
    loop {
        let (lo, hi) = work.split_at_mut(t + 1);
        let (cur, next) = (&lo[t], &mut hi[0]);
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, &s) in support.iter().enumerate() {
            let row = mdp.next_dist(mdp.pair(s, choice[i]));
            for (v, &p) in next.iter_mut().zip(row) {
                *v += cur[s] * p;
            }
        }
        if !enumerate(mdp, work, t + 1, table, nodes, frontier, budget) {
            return false;
        }
        let mut i = 0;
        while i < choice.len() {
            choice[i] += 1;
            if choice[i] < na {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == choice.len() {
            return true;
        }
    }
}
