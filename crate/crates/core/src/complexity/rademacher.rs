use rand::Rng;

use super::{PredictableTree, SequentialClass};
use crate::error::{invalid, Error, Result};
use crate::seeding;

/// Deepest tree evaluated by full enumeration (65,536 sign paths).
pub const MAX_EXACT_DEPTH: usize = 16;

fn check_points<C: SequentialClass>(class: &C, points: impl IntoIterator<Item = usize>) -> Result<()> {
    let n = class.n_points();
    for p in points {
        if p >= n {
            return invalid(format!("point index {p} outside the class's {n} points"));
        }
    }
    Ok(())
}

/// Sum over all `2^{n−level}` continuations below `(level, index)` of the
/// inner supremum, starting from the accumulated prefix `acc`.
pub(crate) fn subtree_sum<C: SequentialClass>(
    class: &C,
    tree: &PredictableTree,
    level: usize,
    index: usize,
    acc: &C::Acc,
) -> f64 {
    let depth = tree.depth();
    let mut stack: Vec<C::Acc> = vec![acc.clone(); depth - level + 1];
    let mut total = 0.0;
    let span = depth - level;
    for leaf in 0..1usize << span {
        // Reuse the shared prefix of consecutive leaves.
        let first_changed = if leaf == 0 { 0 } else { span - 1 - (leaf ^ (leaf - 1)).ilog2() as usize };
        for d in first_changed..span {
            let node_index = (index << d) | (leaf >> (span - d));
            let bit = (leaf >> (span - 1 - d)) & 1;
            let (lo, hi) = stack.split_at_mut(d + 1);
            hi[0].clone_from(&lo[d]);
            class.push(&mut hi[0], tree.node(level + d, node_index), if bit == 1 { 1.0 } else { -1.0 });
        }
        total += class.sup(&stack[span]);
    }
    total
}

/// Accumulator after walking the sign prefix that leads to `(level, index)`.
pub(crate) fn prefix_acc<C: SequentialClass>(class: &C, tree: &PredictableTree, level: usize, index: usize) -> C::Acc {
    let mut acc = class.empty();
    for d in 0..level {
        let node_index = index >> (level - d);
        let bit = (index >> (level - 1 - d)) & 1;
        class.push(&mut acc, tree.node(d, node_index), if bit == 1 { 1.0 } else { -1.0 });
    }
    acc
}

/// `E_ε sup_a Σ_t ε_t a(x_t(ε_{1:t−1}))` on one tree, by enumerating every path.
pub fn sequential_rademacher_exact<C: SequentialClass>(class: &C, tree: &PredictableTree) -> Result<f64> {
    if tree.depth() > MAX_EXACT_DEPTH {
        return Err(Error::Unsupported(format!(
            "exact enumeration supports depth <= {MAX_EXACT_DEPTH}, got {}; use sign sampling",
            tree.depth()
        )));
    }
    check_points(class, tree.levels().iter().flatten().copied())?;
    let total = subtree_sum(class, tree, 0, 0, &class.empty());
    Ok(total / (1u64 << tree.depth()) as f64)
}

/// `E_ε sup_a Σ_t ε_t a(z_t)` for a fixed sequence, by enumerating sign vectors.
pub fn classical_rademacher_exact<C: SequentialClass>(class: &C, points: &[usize]) -> Result<f64> {
    let n = points.len();
    if n == 0 {
        return invalid("need at least one point");
    }
    if n > 24 {
        return Err(Error::Unsupported(format!("exact sign enumeration supports n <= 24, got {n}")));
    }
    check_points(class, points.iter().copied())?;
    let mut total = 0.0;
    for mask in 0..1usize << n {
        let mut acc = class.empty();
        for (t, &p) in points.iter().enumerate() {
            let bit = (mask >> (n - 1 - t)) & 1;
            class.push(&mut acc, p, if bit == 1 { 1.0 } else { -1.0 });
        }
        total += class.sup(&acc);
    }
    Ok(total / (1u64 << n) as f64)
}

/// Monte-Carlo sign sampling; returns `(estimate, standard error)`.
pub fn classical_rademacher_mc<C: SequentialClass>(
    class: &C,
    points: &[usize],
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_mc == 0 {
        return invalid("n_mc must be at least 1");
    }
    if points.is_empty() {
        return invalid("need at least one point");
    }
    check_points(class, points.iter().copied())?;
    let mut rng = seeding::rng(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_mc {
        let mut acc = class.empty();
        for &p in points {
            class.push(&mut acc, p, if rng.gen::<bool>() { 1.0 } else { -1.0 });
        }
        let v = class.sup(&acc);
        sum += v;
        sum_sq += v * v;
    }
    let k = n_mc as f64;
    let mean = sum / k;
    let se = if n_mc > 1 { ((sum_sq - k * mean * mean).max(0.0) / (k - 1.0) / k).sqrt() } else { f64::INFINITY };
    Ok((mean, se))
}
