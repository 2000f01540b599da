use serde::{Deserialize, Serialize};

use super::rademacher::{prefix_acc, subtree_sum};
use super::{classical_rademacher_exact, sequential_rademacher_exact, PredictableTree, SequentialClass, MAX_EXACT_DEPTH};
use crate::error::{invalid, Error, Result};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBudget {
    /// Random trees tried in addition to the best constant tree.
    pub restarts: usize,
    /// Full coordinate-ascent passes per start.
    pub sweeps: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { restarts: 4, sweeps: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Exact value of the best tree found: a lower bound on the tree supremum.
    pub value: f64,
    pub tree: PredictableTree,
    /// Exact classical value of the best constant tree found.
    pub constant_value: f64,
    pub constant_points: Vec<usize>,
}

/// Lower bound on the sequential complexity over trees with nodes in
/// `candidates`: coordinate ascent over constant trees first, then
/// node-wise ascent from that tree and from random trees. Ties keep the
/// incumbent.
pub fn sequential_rademacher_search<C: SequentialClass>(
    class: &C,
    candidates: &[usize],
    n: usize,
    budget: SearchBudget,
    seed: u64,
) -> Result<SearchResult> {
    if candidates.is_empty() {
        return invalid("candidate point set must be nonempty");
    }
    if n == 0 {
        return invalid("tree depth must be at least 1");
    }
    if n > MAX_EXACT_DEPTH {
        return Err(Error::Unsupported(format!("tree search evaluates trees exactly; depth {n} > {MAX_EXACT_DEPTH}")));
    }

    let mut points = vec![candidates[0]; n];
    let mut constant_value = classical_rademacher_exact(class, &points)?;
    for _ in 0..budget.sweeps.max(1) {
        let mut improved = false;
        for t in 0..n {
            for &c in candidates {
                if c == points[t] {
                    continue;
                }
                let prev = points[t];
                points[t] = c;
                let v = classical_rademacher_exact(class, &points)?;
                if v > constant_value {
                    constant_value = v;
                    improved = true;
                } else {
                    points[t] = prev;
                }
            }
        }
        if !improved {
            break;
        }
    }

    let mut best_tree = PredictableTree::constant(&points)?;
    let mut best_value = sequential_rademacher_exact(class, &best_tree)?;
    let mut rng = seeding::rng(seed);
    for r in 0..=budget.restarts {
        let mut tree = if r == 0 { best_tree.clone() } else { PredictableTree::random(&mut rng, n, candidates)? };
        for _ in 0..budget.sweeps.max(1) {
            let mut improved = false;
            for level in 0..n {
                for index in 0..1usize << level {
                    let acc = prefix_acc(class, &tree, level, index);
                    let mut current = subtree_sum(class, &tree, level, index, &acc);
                    for &c in candidates {
                        let prev = tree.node(level, index);
                        if c == prev {
                            continue;
                        }
                        tree.set_node(level, index, c);
                        let v = subtree_sum(class, &tree, level, index, &acc);
                        if v > current {
                            current = v;
                            improved = true;
                        } else {
                            tree.set_node(level, index, prev);
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        let value = sequential_rademacher_exact(class, &tree)?;
        if value > best_value {
            best_value = value;
            best_tree = tree;
        }
    }
    Ok(SearchResult { value: best_value, tree: best_tree, constant_value, constant_points: points })
}
