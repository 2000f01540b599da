use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scenarios::{scenario, Scenario};
use crate::batch::{ActionRule, BehaviorRule, StateRule};
use crate::bounds::{digest, TheoremId};
use crate::classes::{Activation, FeatureMap, FunctionClass, Kernel, LinearClass, NeuralClass, OptBudget, RkhsClass};
use crate::complexity::SearchBudget;
use crate::error::{Error, Result};
use crate::mdp::{load_mdp, SaDistribution, StateDist};

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolConfig {
    #[default]
    Fresh,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Tabular,
    PolyAction,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Laplacian,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    #[default]
    Relu,
    Tanh,
}

/// `[class]` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassConfig {
    Linear {
        #[serde(default)]
        features: FeatureKind,
        #[serde(default = "default_degree")]
        degree: usize,
        weight_bound: f64,
        clip: Option<f64>,
    },
    Rkhs {
        #[serde(default)]
        kernel: KernelKind,
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
        norm_bound: f64,
        clip: Option<f64>,
    },
    Nn {
        #[serde(default = "default_width")]
        width: usize,
        #[serde(default = "default_hidden_layers")]
        hidden_layers: usize,
        layer_bounds: Vec<f64>,
        #[serde(default)]
        activation: ActivationKind,
        clip: Option<f64>,
    },
}

fn default_degree() -> usize {
    1
}
fn default_bandwidth() -> f64 {
    0.5
}
fn default_width() -> usize {
    8
}
fn default_hidden_layers() -> usize {
    1
}

impl ClassConfig {
    fn features(kind: FeatureKind, degree: usize, ns: usize, na: usize) -> Result<FeatureMap> {
        match kind {
            FeatureKind::Tabular => Ok(FeatureMap::tabular(ns, na)),
            FeatureKind::PolyAction => FeatureMap::polynomial_actions(ns, na, degree),
            FeatureKind::Coordinate => FeatureMap::coordinate_embedding(ns, na),
        }
    }

    /// Builds the class on the `ns × na` domain; returns it with its clip bound.
    pub fn build(&self, ns: usize, na: usize, floor: f64) -> Result<(Arc<FunctionClass>, f64)> {
        let (class, clip) = match self {
            ClassConfig::Linear { features, degree, weight_bound, clip } => {
                let fm = Self::features(*features, *degree, ns, na)?;
                (FunctionClass::Linear(LinearClass::new(fm, *weight_bound)?), *clip)
            }
            ClassConfig::Rkhs { kernel, bandwidth, norm_bound, clip } => {
                let k = match kernel {
                    KernelKind::Gaussian => Kernel::Gaussian { bandwidth: *bandwidth },
                    KernelKind::Laplacian => Kernel::Laplacian { bandwidth: *bandwidth },
                    KernelKind::Linear => Kernel::Linear,
                };
                let fm = FeatureMap::coordinate_embedding(ns, na)?;
                (FunctionClass::Rkhs(RkhsClass::new(fm, k, *norm_bound)?), *clip)
            }
            ClassConfig::Nn { width, hidden_layers, layer_bounds, activation, clip } => {
                let act = match activation {
                    ActivationKind::Relu => Activation::Relu,
                    ActivationKind::Tanh => Activation::Tanh,
                };
                let fm = FeatureMap::coordinate_embedding(ns, na)?;
                let hidden = vec![*width; *hidden_layers];
                (FunctionClass::Neural(NeuralClass::new(fm, hidden, layer_bounds.clone(), act)?), *clip)
            }
        };
        let sup = class.sup_bound();
        let clip = clip.unwrap_or(if sup.is_finite() { floor.max(sup) } else { floor });
        if !(clip >= floor * (1.0 - 1e-12)) {
            return config_err(format!("class.clip = {clip} is below r_max/(1-gamma) = {floor}"));
        }
        Ok((Arc::new(class), clip))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Uniform,
    #[default]
    EpsGreedy,
    Boltzmann,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StatesKind {
    Iid,
    #[default]
    Trajectory,
}

/// `[behavior]` block; states are drawn from (or reset to) the state
/// marginal of the scenario's sampling distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorConfig {
    pub rule: RuleKind,
    pub eps: f64,
    pub tau: f64,
    pub states: StatesKind,
    pub reset_prob: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self { rule: RuleKind::EpsGreedy, eps: 0.3, tau: 1.0, states: StatesKind::Trajectory, reset_prob: 0.2 }
    }
}

impl BehaviorConfig {
    pub fn build(&self, mu: &SaDistribution) -> Result<BehaviorRule> {
        let action = match self.rule {
            RuleKind::Fixed => return Ok(BehaviorRule::Fixed { mu: mu.clone() }),
            RuleKind::Uniform => ActionRule::Uniform,
            RuleKind::EpsGreedy => ActionRule::EpsGreedy { eps: self.eps },
            RuleKind::Boltzmann => ActionRule::Boltzmann { tau: self.tau },
        };
        let dist = StateDist::new(mu.state_marginal())?;
        let states = match self.states {
            StatesKind::Iid => StateRule::Iid { dist },
            StatesKind::Trajectory => StateRule::Trajectory { reset_prob: self.reset_prob, reset: dist },
        };
        Ok(BehaviorRule::Policy { action, states })
    }
}

/// Instance and trial counts of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialCounts {
    pub contraction: usize,
    pub dominance: usize,
    pub propagation: usize,
    pub concentrability: usize,
    pub mismatch: usize,
    pub regret: usize,
    pub seq_gen: usize,
    pub adaptive_runs: usize,
    pub fresh_runs: usize,
    pub complexity_sequences: usize,
}

impl Default for TrialCounts {
    fn default() -> Self {
        Self {
            contraction: 1000,
            dominance: 100,
            propagation: 40,
            concentrability: 50,
            mismatch: 20,
            regret: 20,
            seq_gen: 2000,
            adaptive_runs: 500,
            fresh_runs: 100,
            complexity_sequences: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub n_grid: Vec<usize>,
    /// Seeds per grid point.
    pub seeds: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { n_grid: vec![64, 256, 1024, 4096], seeds: 20 }
    }
}

/// Deliberate corruption of report inputs, for mutation testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MutationConfig {
    /// Multiplies the contraction modulus claimed in contraction reports.
    pub contraction_modulus_scale: f64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self { contraction_modulus_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Informational command name.
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub mdp_file: Option<PathBuf>,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub class: Option<ClassConfig>,
    #[serde(default)]
    pub behavior: BehaviorConfig,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Theorem ids to run; empty means all.
    #[serde(default)]
    pub checks: Vec<TheoremId>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub budget: OptBudget,
    #[serde(default)]
    pub search: SearchBudget,
    #[serde(default)]
    pub trials: TrialCounts,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub mutation: MutationConfig,
}

fn default_n() -> usize {
    64
}
fn default_k() -> usize {
    5
}
fn default_delta() -> f64 {
    0.1
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            scenario: Some("two_room".into()),
            mdp_file: None,
            protocol: ProtocolConfig::Fresh,
            class: None,
            behavior: BehaviorConfig::default(),
            n: default_n(),
            k: default_k(),
            delta: default_delta(),
            seeds: default_seeds(),
            checks: Vec::new(),
            out: None,
            budget: OptBudget::default(),
            search: SearchBudget::default(),
            trials: TrialCounts::default(),
            scaling: ScalingConfig::default(),
            mutation: MutationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(file), Some(dir)) = (&cfg.mdp_file, path.parent()) {
            if file.is_relative() {
                cfg.mdp_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return config_err(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if self.n == 0 {
            return config_err("n must be at least 1");
        }
        if self.k == 0 {
            return config_err("K must be at least 1");
        }
        if self.seeds.is_empty() {
            return config_err("seeds must be nonempty");
        }
        match (&self.scenario, &self.mdp_file) {
            (Some(_), Some(_)) => return config_err("set only one of `scenario` and `mdp_file`"),
            (None, None) => return config_err("missing key `scenario` (or `mdp_file`)"),
            _ => {}
        }
        if self.scaling.n_grid.is_empty() || self.scaling.n_grid.contains(&0) || self.scaling.seeds == 0 {
            return config_err("scaling.n_grid must hold positive sizes and scaling.seeds must be positive");
        }
        Ok(())
    }

    /// Bundled scenario, or a model file with uniform `ρ` and `μ`.
    pub fn scenario(&self) -> Result<Scenario> {
        if let Some(path) = &self.mdp_file {
            let mdp = load_mdp(path)?;
            let (ns, na) = (mdp.n_states(), mdp.n_actions());
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "mdp_file".into());
            return Ok(Scenario { id, mdp, rho: StateDist::uniform(ns), mu: SaDistribution::uniform(ns, na) });
        }
        let id = self.scenario.as_deref().expect("validated");
        scenario(id).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    pub fn require_class(&self) -> Result<&ClassConfig> {
        self.class.as_ref().ok_or_else(|| Error::Config("missing key `class`: add a [class] block with kind = \"linear\" | \"rkhs\" | \"nn\"".into()))
    }

    pub fn checks_enabled(&self, id: TheoremId) -> bool {
        self.checks.is_empty() || self.checks.contains(&id)
    }

    /// Digest of the parsed configuration.
    pub fn digest(&self) -> String {
        digest(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self
    }
}
