use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    Contraction,
    PolicyIterDominance,
    ErrPropGreedy,
    ErrPropMax,
    DistMismatch,
    Decomp,
    FqiUnified,
    EstSlow,
    SeqGen,
    AdaptiveResidual,
    AdaptivePerf,
    RegretCert,
    Concentrability,
}

impl TheoremId {
    pub const ALL: [TheoremId; 13] = [
        TheoremId::Contraction,
        TheoremId::PolicyIterDominance,
        TheoremId::ErrPropGreedy,
        TheoremId::ErrPropMax,
        TheoremId::DistMismatch,
        TheoremId::Decomp,
        TheoremId::FqiUnified,
        TheoremId::EstSlow,
        TheoremId::SeqGen,
        TheoremId::AdaptiveResidual,
        TheoremId::AdaptivePerf,
        TheoremId::RegretCert,
        TheoremId::Concentrability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::Contraction => "contraction",
            TheoremId::PolicyIterDominance => "policy_iter_dominance",
            TheoremId::ErrPropGreedy => "err_prop_greedy",
            TheoremId::ErrPropMax => "err_prop_max",
            TheoremId::DistMismatch => "dist_mismatch",
            TheoremId::Decomp => "decomp",
            TheoremId::FqiUnified => "fqi_unified",
            TheoremId::EstSlow => "est_slow",
            TheoremId::SeqGen => "seq_gen",
            TheoremId::AdaptiveResidual => "adaptive_residual",
            TheoremId::AdaptivePerf => "adaptive_perf",
            TheoremId::RegretCert => "regret_cert",
            TheoremId::Concentrability => "concentrability",
        }
    }
}

/// Exact-check tolerance.
pub const EXACT_TOL: f64 = 1e-9;

/// One realized-vs-bound comparison. The bound is the sum of its components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: TheoremId,
    pub instance: String,
    pub realized: f64,
    pub bound: f64,
    pub components: Vec<(String, f64)>,
    pub inputs_digest: String,
    pub tol: f64,
    pub pass: bool,
    /// Advisory reports never gate a verdict (nominal constants, documented gaps).
    pub advisory: bool,
}

impl BoundReport {
    pub fn new<I: Serialize + ?Sized>(
        theorem: TheoremId,
        instance: impl Into<String>,
        realized: f64,
        components: Vec<(String, f64)>,
        tol: f64,
        inputs: &I,
    ) -> Self {
        let bound = components.iter().map(|(_, v)| v).sum::<f64>();
        let pass = realized <= bound + tol;
        Self {
            theorem,
            instance: instance.into(),
            realized,
            bound,
            components,
            inputs_digest: digest(inputs),
            tol,
            pass,
            advisory: false,
        }
    }

    pub fn advisory(mut self) -> Self {
        self.advisory = true;
        self
    }

    /// A failing advisory report is not a hard failure.
    pub fn hard_failure(&self) -> bool {
        !self.pass && !self.advisory
    }

    /// Slack by which the check passed (negative when it failed).
    pub fn margin(&self) -> f64 {
        self.bound + self.tol - self.realized
    }
}

pub fn component(name: &str, value: f64) -> (String, f64) {
    (name.to_string(), value)
}

/// First 16 hex digits of the SHA-256 of the JSON encoding.
pub fn digest<I: Serialize + ?Sized>(inputs: &I) -> String {
    let bytes = serde_json::to_vec(inputs).unwrap_or_default();
    hex_prefix(&bytes)
}

pub fn hex_prefix(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn write_reports_csv<W: Write>(reports: &[BoundReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theorem", "instance", "realized", "bound", "tol", "pass", "advisory", "components", "inputs_digest"])
        .map_err(csv_err)?;
    for r in reports {
        let comps = r.components.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
        w.write_record([
            r.theorem.as_str().to_string(),
            r.instance.clone(),
            r.realized.to_string(),
            r.bound.to_string(),
            r.tol.to_string(),
            r.pass.to_string(),
            r.advisory.to_string(),
            comps,
            r.inputs_digest.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e.to_string()))
}
