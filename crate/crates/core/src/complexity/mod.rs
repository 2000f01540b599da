//! Classical and sequential Rademacher complexities: exact evaluation on
//! given predictable trees, tree search for lower bounds, residual classes,
//! and the generalization rates built from them.

mod families;
mod generalization;
mod rademacher;
mod rates;
mod residual;
mod search;
mod tree;

pub use families::{FiniteFamily, LinearBall, RkhsBall, SequentialClass};
pub use generalization::{verify_seq_generalization, SeqGenOutcome};
pub use rademacher::{
    classical_rademacher_exact, classical_rademacher_mc, sequential_rademacher_exact, MAX_EXACT_DEPTH,
};
pub use rates::{
    alpha, alpha_prime, alpha_rates, class_complexity_upper, finite_class_complexity_upper,
    residual_class_complexity_upper, AlphaRates,
};
pub use residual::{contraction_check, candidate_transitions, ResidualClass};
pub use search::{sequential_rademacher_search, SearchBudget, SearchResult};
pub use tree::PredictableTree;
