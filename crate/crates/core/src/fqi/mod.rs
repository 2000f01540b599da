//! Fitted Q-iteration under fresh i.i.d. batches and adaptive,
//! policy-dependent batches, with per-round tracing of residuals, losses
//! and bound terms.

mod decomposition;
mod residuals;
mod runner;

pub use decomposition::{decomposition_report, DecompositionReport};
pub use residuals::{bellman_labels, diagonal_residual, labels_digest, residual_l2};
pub use runner::{run_fqi_adaptive, run_fqi_fresh, write_trace_csv, FqiSettings, FqiTrace, RoundRecord};
