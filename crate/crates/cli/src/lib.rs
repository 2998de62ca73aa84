//! Command-line front end: estimate marginals from samples, bound
//! conditional queries, rank query batches and run the verification suites.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or parse error,
//! 3 invalid marginals, 4 unconditioned query.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use robcond_core::polytope::DEFAULT_ATOM_CAP;
use robcond_core::verify::Suite;

pub mod commands;
pub mod error;
pub mod formats;

pub use error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Closed forms only; fails on queries they do not cover.
    ClosedForm,
    /// Always the polytope LP route.
    Lp,
    /// Closed form when it applies, LP otherwise.
    Auto,
}

#[derive(Debug, Parser)]
#[command(name = "robcond", version, about)]
pub struct Cli {
    /// Worker threads for rank and verify (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Deviation tolerance used by verify instead of each suite's own.
    #[arg(long, global = true, value_parser = non_negative)]
    pub tolerance: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate smoothed marginals from integer-coded samples.
    Estimate(EstimateOpts),
    /// Lower-bound one conditional query.
    Bound(BoundOpts),
    /// Bound a batch of queries and sort them by bound.
    Rank(RankOpts),
    /// Run the oracle-equivalence suites.
    Verify(VerifyOpts),
}

#[derive(Debug, Args)]
pub struct EstimateOpts {
    /// CSV with a header row; a column named "y" holds the label.
    #[arg(long)]
    pub input: PathBuf,
    /// JSON {"edges": [[i, j], ...]}, optionally with "cardinalities" and "label_cardinality".
    #[arg(long)]
    pub structure: PathBuf,
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub smoothing: f64,
    /// Estimate marginals jointly with the label.
    #[arg(long)]
    pub label_axis: bool,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundOpts {
    #[arg(long)]
    pub marginals: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the query's exclusion LP in MPS form.
    #[arg(long)]
    pub dump_lp: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankOpts {
    #[arg(long)]
    pub marginals: PathBuf,
    /// CSV with columns id, x<i> and y, or id, o<i> and h<i>.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyOpts {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trials per suite (default: each suite's own count).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Largest joint assignment space the oracles may enumerate.
    #[arg(long, default_value_t = DEFAULT_ATOM_CAP, value_parser = parse_cap)]
    pub max_atoms: usize,
    /// Run only these suites (name or number); repeatable.
    #[arg(long = "suite", value_parser = parse_suite)]
    pub suites: Vec<Suite>,
    /// Perturb the marginals checked by the validation suite.
    #[arg(long, hide = true)]
    pub inject_corruption: bool,
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("`{s}` must be finite and non-negative"))
    }
}

fn parse_cap(s: &str) -> Result<usize, String> {
    let v: usize = s
        .parse()
        .map_err(|_| format!("`{s}` is not a positive integer"))?;
    if (1..=DEFAULT_ATOM_CAP).contains(&v) {
        Ok(v)
    } else {
        Err(format!("the atom cap must lie in 1..={DEFAULT_ATOM_CAP}"))
    }
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    Suite::ALL
        .into_iter()
        .find(|suite| suite.name() == s || suite.id().to_string() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
            format!("unknown suite `{s}`; expected one of {}", names.join(", "))
        })
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Estimate(o) => commands::estimate(&commands::EstimateArgs {
            input: o.input,
            structure: o.structure,
            smoothing: o.smoothing,
            label_axis: o.label_axis,
            out: o.out,
        })?,
        Command::Bound(o) => commands::bound(&commands::BoundArgs {
            marginals: o.marginals,
            query: o.query,
            method: o.method,
            out: o.out,
            dump_lp: o.dump_lp,
        })?,
        Command::Rank(o) => commands::rank(&commands::RankArgs {
            marginals: o.marginals,
            queries: o.queries,
            method: o.method,
            out: o.out,
        })?,
        Command::Verify(o) => {
            let passed = commands::verify(&commands::VerifyArgs {
                seed: o.seed,
                trials: o.trials,
                max_atoms: o.max_atoms,
                suites: o.suites,
                inject_corruption: o.inject_corruption,
                tolerance: cli.tolerance,
            });
            if !passed {
                return Ok(1);
            }
        }
    }
    Ok(0)
}
