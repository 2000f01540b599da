use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Complete binary tree of point indices. Level `t` (0-based) holds `2^t`
/// nodes; the node reached by signs `ε_1 … ε_t` has index
/// `Σ bit(ε_j) 2^{t−j}` with `bit(+1) = 1`, so children of node `i` are
/// `2i` (sign −1) and `2i + 1` (sign +1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictableTree {
    levels: Vec<Vec<usize>>,
}

impl PredictableTree {
    pub fn new(levels: Vec<Vec<usize>>) -> Result<Self> {
        if levels.is_empty() {
            return invalid("tree depth must be at least 1");
        }
        for (t, level) in levels.iter().enumerate() {
            if t >= usize::BITS as usize - 1 || level.len() != 1usize << t {
                return invalid(format!("tree level {} has {} nodes, expected 2^{t}", t + 1, level.len()));
            }
        }
        Ok(Self { levels })
    }

    /// Tree whose level `t` is `points[t]` regardless of the signs.
    pub fn constant(points: &[usize]) -> Result<Self> {
        Self::new(points.iter().enumerate().map(|(t, &p)| vec![p; 1 << t]).collect())
    }

    pub fn random<R: Rng>(rng: &mut R, depth: usize, candidates: &[usize]) -> Result<Self> {
        if candidates.is_empty() {
            return invalid("need at least one candidate point");
        }
        Self::new(
            (0..depth)
                .map(|t| (0..1usize << t).map(|_| candidates[rng.gen_range(0..candidates.len())]).collect())
                .collect(),
        )
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }
    pub fn node(&self, level: usize, index: usize) -> usize {
        self.levels[level][index]
    }
    pub fn set_node(&mut self, level: usize, index: usize, point: usize) {
        self.levels[level][index] = point;
    }
    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }
    pub fn max_point(&self) -> usize {
        self.levels.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.levels.iter().all(|l| l.iter().all(|&p| p == l[0]))
    }

    /// Level-ordered `(level, prefix bits, point)` records. The root's empty
    /// prefix is written as `.`; `describe` appends a free-form label.
    pub fn dump<W: Write>(&self, mut out: W, describe: impl Fn(usize) -> String) -> Result<()> {
        writeln!(out, "depth {}", self.depth())?;
        for (t, level) in self.levels.iter().enumerate() {
            for (i, &p) in level.iter().enumerate() {
                let bits = if t == 0 { ".".to_string() } else { format!("{i:0width$b}", width = t) };
                let label = describe(p);
                if label.is_empty() {
                    writeln!(out, "{} {bits} {p}", t + 1)?;
                } else {
                    writeln!(out, "{} {bits} {p} {label}", t + 1)?;
                }
            }
        }
        Ok(())
    }

    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let (l0, header) = lines.next().ok_or_else(|| bad(0, "empty tree file"))?;
        let header = header?;
        let depth: usize = header
            .strip_prefix("depth ")
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| bad(l0, "expected `depth <n>`"))?;
        if depth == 0 || depth >= usize::BITS as usize - 1 {
            return Err(bad(l0, "depth out of range"));
        }
        let mut levels: Vec<Vec<Option<usize>>> = (0..depth).map(|t| vec![None; 1 << t]).collect();
        for (ln, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let level: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(ln, "bad level"))?;
            let bits = parts.next().ok_or_else(|| bad(ln, "missing prefix"))?;
            let point: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(ln, "bad point"))?;
            if level == 0 || level > depth {
                return Err(bad(ln, "level out of range"));
            }
            let index = if level == 1 {
                if bits != "." {
                    return Err(bad(ln, "root prefix must be `.`"));
                }
                0
            } else {
                if bits.len() != level - 1 {
                    return Err(bad(ln, "prefix length must equal level - 1"));
                }
                usize::from_str_radix(bits, 2).map_err(|_| bad(ln, "prefix must be binary"))?
            };
            let slot = &mut levels[level - 1][index];
            if slot.is_some() {
                return Err(bad(ln, "duplicate node"));
            }
            *slot = Some(point);
        }
        let levels = levels
            .into_iter()
            .enumerate()
            .map(|(t, l)| {
                l.into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::InvalidArgument(format!("tree level {} is missing nodes", t + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }
}
