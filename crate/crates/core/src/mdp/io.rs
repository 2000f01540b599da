//! Plain-text MDP format.
//!
//! ```text
//! fqi-lab-mdp 1
//! n_states 2
//! n_actions 1
//! gamma 0.5
//! r_max 1
//! reward
//! 1            # one line per state, n_actions values
//! 0
//! transition
//! 0 1          # one line per (s, a) in row-major order, n_states values
//! 1 0
//! ```
//!
//! Blank lines and `#` comments are ignored. Floats are written with the
//! shortest round-trip representation, so save followed by load is bit-exact.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::FiniteMdp;
use crate::error::{Error, Result};

const MAGIC: &str = "fqi-lab-mdp 1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn write_mdp<W: Write>(mdp: &FiniteMdp, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "n_states {}", mdp.n_states())?;
    writeln!(out, "n_actions {}", mdp.n_actions())?;
    writeln!(out, "gamma {:?}", mdp.gamma())?;
    writeln!(out, "r_max {:?}", mdp.r_max())?;
    writeln!(out, "reward")?;
    for row in mdp.rewards().chunks(mdp.n_actions()) {
        writeln!(out, "{}", join(row))?;
    }
    writeln!(out, "transition")?;
    for sa in 0..mdp.n_pairs() {
        writeln!(out, "{}", join(mdp.next_dist(sa)))?;
    }
    Ok(())
}

pub fn save_mdp(mdp: &FiniteMdp, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_mdp(mdp, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_content(&mut self) -> Result<(usize, String)> {
        for line in self.inner.by_ref() {
            self.line_no += 1;
            let line = line?;
            let content = line.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                return Ok((self.line_no, content.to_string()));
            }
        }
        Err(Error::Parse { line: self.line_no, msg: "unexpected end of file".into() })
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, content) = self.next_content()?;
        let mut parts = content.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::Parse { line, msg: format!("expected `{key} <value>`, found `{content}`") });
        }
        let value = parts.next().ok_or_else(|| Error::Parse { line, msg: format!("missing value for {key}") })?;
        if parts.next().is_some() {
            return Err(Error::Parse { line, msg: format!("trailing tokens after {key}") });
        }
        value.parse().map_err(|_| Error::Parse { line, msg: format!("cannot parse {key} value `{value}`") })
    }

    fn marker(&mut self, key: &str) -> Result<()> {
        let (line, content) = self.next_content()?;
        if content != key {
            return Err(Error::Parse { line, msg: format!("expected section `{key}`, found `{content}`") });
        }
        Ok(())
    }

    fn row(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        let (line, content) = self.next_content()?;
        let row: Vec<f64> = content
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("bad number `{tok}` in {what}") }))
            .collect::<Result<_>>()?;
        if row.len() != len {
            return Err(Error::Parse { line, msg: format!("{what} has {} values, expected {len}", row.len()) });
        }
        Ok(row)
    }
}

pub fn read_mdp<R: BufRead>(input: R) -> Result<FiniteMdp> {
    let mut lines = Lines { inner: input.lines(), line_no: 0 };
    let (line, header) = lines.next_content()?;
    if header != MAGIC {
        return Err(Error::Parse { line, msg: format!("expected header `{MAGIC}`") });
    }
    let n_states: usize = lines.keyed("n_states")?;
    let n_actions: usize = lines.keyed("n_actions")?;
    let gamma: f64 = lines.keyed("gamma")?;
    let r_max: f64 = lines.keyed("r_max")?;
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument("n_states and n_actions must be positive".into()));
    }
    lines.marker("reward")?;
    let mut reward = Vec::with_capacity(n_states * n_actions);
    for s in 0..n_states {
        reward.extend(lines.row(n_actions, &format!("reward row s={s}"))?);
    }
    lines.marker("transition")?;
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for sa in 0..n_states * n_actions {
        let (s, a) = (sa / n_actions, sa % n_actions);
        transition.extend(lines.row(n_states, &format!("transition row (s={s}, a={a})"))?);
    }
    FiniteMdp::new(n_states, n_actions, transition, reward, gamma, r_max)
}

pub fn load_mdp(path: &Path) -> Result<FiniteMdp> {
    let file = std::fs::File::open(path)?;
    read_mdp(BufReader::new(file))
}
