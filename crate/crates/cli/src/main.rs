use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fqi_lab::experiment::{run_command, Command, ExperimentConfig};
use fqi_lab::Error;

#[derive(Parser)]
#[command(name = "fqi-lab", version, about = "Exact-oracle checks of fitted Q-iteration bounds")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Exact Q*, V* and optimal policy of the scenario.
    Solve(Common),
    /// Fitted Q-iteration trace per seed with per-round bound checks.
    Fqi(Common),
    /// Sequential Rademacher identities, tree search and rate constants.
    Complexity(Common),
    /// Concentrability, error propagation, mismatch and regret checks on the scenario.
    Bounds(Common),
    /// Statistical rate of the bound term over an n grid.
    Scaling(Common),
    /// Full theorem-check suite.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single seed overriding the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 or omitted uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

fn run(cmd: Command, args: Common) -> Result<ExitCode, Error> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = args.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let outcome = run_command(cmd, &cfg, &out, args.jobs)?;
    let failures = outcome.hard_failures();
    let gating = outcome.reports.iter().filter(|r| !r.advisory).count();
    println!(
        "{}: {} reports ({} gating), outputs in {}",
        cmd.as_str(),
        outcome.reports.len(),
        gating,
        out.display()
    );
    if failures.is_empty() {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        let ids: Vec<&str> = failures.iter().map(|t| t.as_str()).collect();
        eprintln!("hard failures: {}", ids.join(", "));
        for r in outcome.reports.iter().filter(|r| r.hard_failure()).take(20) {
            eprintln!("  {} {}: realized {} > bound {} (tol {})", r.theorem.as_str(), r.instance, r.realized, r.bound, r.tol);
        }
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Sub::Solve(a) => (Command::Solve, a),
        Sub::Fqi(a) => (Command::Fqi, a),
        Sub::Complexity(a) => (Command::Complexity, a),
        Sub::Bounds(a) => (Command::Bounds, a),
        Sub::Scaling(a) => (Command::Scaling, a),
        Sub::Verify(a) => (Command::Verify, a),
    };
    match run(cmd, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
