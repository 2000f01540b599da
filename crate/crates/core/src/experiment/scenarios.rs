use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{discretize, ContinuousMdpSpec, FiniteMdp, KernelShape, RewardShape, SaDistribution, StateDist};

/// Bundled MDP with its evaluation distribution `ρ` and sampling distribution `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub mdp: FiniteMdp,
    pub rho: StateDist,
    pub mu: SaDistribution,
}

pub const SCENARIO_IDS: [&str; 3] = ["single_state", "two_room", "drift_diffusion"];

pub fn scenario(id: &str) -> Result<Scenario> {
    match id {
        "single_state" => single_state(),
        "two_room" => two_room(),
        "drift_diffusion" => drift_diffusion(),
        other => invalid(format!("unknown scenario `{other}`; expected one of {}", SCENARIO_IDS.join(", "))),
    }
}

/// One state, one action, `r = 1`, `γ = 0.5`; `Q* = 2`.
pub fn single_state() -> Result<Scenario> {
    let mdp = FiniteMdp::new(1, 1, vec![1.0], vec![1.0], 0.5, 1.0)?;
    Ok(Scenario { id: "single_state".into(), mdp, rho: StateDist::uniform(1), mu: SaDistribution::uniform(1, 1) })
}

/// Four-state chain split into room A = {0, 1} and room B = {2, 3}, actions
/// left/right. Moves succeed with probability 0.8; the door from 1 to 2
/// opens only half the time. Reward 1 at state 3, `γ = 0.9`. The sampling
/// distribution puts 0.9 of its mass on room A while `ρ` starts in room A.
pub fn two_room() -> Result<Scenario> {
    let (ns, na) = (4, 2);
    let mut transition = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let target = if a == 0 { s.saturating_sub(1) } else { (s + 1).min(ns - 1) };
            let success = if s == 1 && a == 1 { 0.5 } else { 0.8 };
            let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
            row[target] += success;
            row[s] += 1.0 - success;
        }
    }
    let reward = (0..ns * na).map(|sa| if sa / na == 3 { 1.0 } else { 0.0 }).collect();
    let mdp = FiniteMdp::new(ns, na, transition, reward, 0.9, 1.0)?;
    let mu = SaDistribution::new(ns, na, vec![0.225, 0.225, 0.225, 0.225, 0.025, 0.025, 0.025, 0.025])?;
    let rho = StateDist::new(vec![0.5, 0.5, 0.0, 0.0])?;
    Ok(Scenario { id: "two_room".into(), mdp, rho, mu })
}

/// Continuous drift-diffusion dynamics on `[0, 1]`.
pub fn drift_diffusion_spec(grid: usize) -> ContinuousMdpSpec {
    ContinuousMdpSpec {
        lo: 0.0,
        hi: 1.0,
        grid,
        gamma: 0.9,
        drifts: vec![-0.15, 0.15],
        kernel: KernelShape::Gaussian { sigma: 0.08 },
        reward: RewardShape::Bump { center: 0.8, width: 0.1, action_cost: 0.0 },
    }
}

/// 16-cell midpoint discretization of [`drift_diffusion_spec`], uniform `ρ` and `μ`.
pub fn drift_diffusion() -> Result<Scenario> {
    let mdp = discretize(&drift_diffusion_spec(16))?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    Ok(Scenario { id: "drift_diffusion".into(), mdp, rho: StateDist::uniform(ns), mu: SaDistribution::uniform(ns, na) })
}
