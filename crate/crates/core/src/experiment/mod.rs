//! Bundled scenarios, configuration, the theorem-check suite and the
//! command implementations behind the CLI.

mod commands;
mod config;
mod scenarios;
pub mod suite;

pub use commands::{run_command, Command, CommandOutcome};
pub use config::{
    ActivationKind, BehaviorConfig, ClassConfig, ExperimentConfig, FeatureKind, KernelKind, MutationConfig,
    ProtocolConfig, RuleKind, ScalingConfig, StatesKind, TrialCounts,
};
pub use scenarios::{drift_diffusion, drift_diffusion_spec, scenario, single_state, two_room, Scenario, SCENARIO_IDS};
