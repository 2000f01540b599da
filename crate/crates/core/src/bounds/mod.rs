//! Every bound as an explicit number, the realized counterparts computed
//! exactly on finite MDPs, and pass/fail reports.

mod adaptive;
pub mod concentrability;
mod performance;
mod propagation;
mod regret;
pub(crate) mod report;

pub use adaptive::{adaptive_concentrability, AdaptiveConcentrability};
pub use concentrability::{
    concentrability, concentrability_stabilized, enumerate_max_mass, ConcentrabilityResult, EnumeratedMass, Witness,
};
pub use performance::{
    adaptive_performance_bound, adaptive_performance_components, dist_mismatch_bound, dist_mismatch_components,
    est_slow_rate, fqi_unified_bound, fqi_unified_components, value_gap_l1, InitGap, RoundTerms,
};
pub use propagation::{
    error_propagation_bound, error_propagation_components, greedy_pointwise_bound, injected_residual_run,
    max_pointwise_bound, max_propagation_bound, max_propagation_components, propagation_reports,
};
pub use regret::{regret_certificate, regret_gaps, regret_prefix_reports};
pub use report::{component, digest, hex_prefix, write_reports_csv, BoundReport, TheoremId, EXACT_TOL};
